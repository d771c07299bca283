#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "wsk/align.hpp"
#include "wsk/kernels.hpp"
#include "wsk/second_order.hpp"
#include "wsk/taskgen.hpp"
#include "wsk/trainer.hpp"

using namespace wsk;
using namespace wsk_test;
namespace so = wsk::sonet;

namespace {

Checkpoint random_checkpoint(const ArchDescriptor& arch, std::uint64_t seed, int task = 0) {
  Checkpoint ck;
  ck.arch = arch;
  ck.weights = initial_weights_for_seed(arch, seed);
  ck.task_id = task;
  ck.seed = seed;
  ck.train_accuracy = 1.0;
  return ck;
}

// Converged checkpoints for a couple of tasks, shared across test cases.
struct TrainedFixture {
  ArchDescriptor arch = tiny_arch();
  std::vector<TaskSpec> suite = generate_task_suite(2, 12);
  std::vector<Checkpoint> checkpoints;
  TrainedFixture() {
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.lr.decay_epochs = {10, 16};
    cfg.samples_per_class = 64;
    cfg.batch_size = 16;
    for (int t = 0; t < 2; ++t)
      for (int j = 0; j < 2; ++j)
        checkpoints.push_back(train_first_order(suite[t], arch, cfg, 7 + j));
  }
};

const TrainedFixture& fixture() {
  static TrainedFixture f;
  return f;
}

}  // namespace

TEST_CASE("zero classifiers produce uniform branch and fused probabilities") {
  const ArchDescriptor arch = tiny_arch();
  so::SecondOrderParams params = so::init_params(arch, 4, {}, 1);
  for (so::BranchParams& b : params.branches) {
    b.cls_weight = Tensor(b.cls_weight.shape());
    b.cls_bias = Tensor(b.cls_bias.shape());
  }
  params.branch_weights = {0.5, 0.5};
  const Checkpoint ck = random_checkpoint(arch, 3);
  const so::ForwardRecord record = so::forward(params, ck, /*label=*/2);
  for (const so::BranchForward& bf : record.branches) {
    REQUIRE(bf.computed);
    for (std::size_t i = 0; i < bf.probs.size(); ++i)
      CHECK(bf.probs[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < record.fused.size(); ++i)
    CHECK(record.fused[i] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(record.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("one-hot branch weights reproduce the single branch bitwise") {
  const ArchDescriptor arch = tiny_arch();
  so::InitOptions options;
  options.branch_weights = so::one_hot_weights(2, 0);
  const so::SecondOrderParams params = so::init_params(arch, 5, options, 2);
  const Checkpoint ck = random_checkpoint(arch, 4);
  const so::ForwardRecord record = so::forward(params, ck, 1);
  REQUIRE(record.branches[0].computed);
  for (std::size_t i = 0; i < record.fused.size(); ++i)
    CHECK(record.fused[i] == record.branches[0].probs[i]);  // bitwise

  // literal branch-weighted cross entropy == single-branch cross entropy
  Tensor one_hot({5});
  one_hot[1] = 1.0;
  CHECK(record.loss == kernels::cross_entropy(record.branches[0].probs, one_hot));
}

TEST_CASE("fused probabilities stay normalized for generic weights") {
  const ArchDescriptor arch = tiny_arch();
  so::InitOptions options;
  options.branch_weights = {0.6, 0.4};
  const so::SecondOrderParams params = so::init_params(arch, 3, options, 5);
  const Checkpoint ck = random_checkpoint(arch, 6);
  const so::ForwardRecord record = so::forward(params, ck, 0);
  double fused_sum = 0.0;
  for (std::size_t i = 0; i < record.fused.size(); ++i) fused_sum += record.fused[i];
  CHECK(std::abs(fused_sum - 1.0) <= 1e-9);
  for (const so::BranchForward& bf : record.branches) {
    double sum = 0.0;
    for (std::size_t i = 0; i < bf.probs.size(); ++i) sum += bf.probs[i];
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("hand-evaluated two-branch fusion loss") {
  // fused = 0.5*(1,0) + 0.5*(0,1) = (0.5, 0.5); true class 0 -> -ln(0.5)
  const Tensor fused = Tensor::from({2}, {0.5, 0.5});
  Tensor one_hot({2});
  one_hot[0] = 1.0;
  CHECK(kernels::cross_entropy(fused, one_hot) ==
        doctest::Approx(-std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("zero learning rate leaves parameters bitwise untouched") {
  const auto& f = fixture();
  so::SecondOrderParams params = so::init_params(f.arch, 2, {}, 3);
  const so::SecondOrderParams before = params;
  std::vector<const Checkpoint*> set;
  std::vector<int> labels;
  for (const Checkpoint& ck : f.checkpoints) {
    set.push_back(&ck);
    labels.push_back(ck.task_id);
  }
  so::TrainConfig cfg;
  cfg.lr_initial = 0.0;
  cfg.epochs = 3;
  so::train(params, set, labels, cfg);
  for (std::size_t b = 0; b < params.n_branches(); ++b) {
    CHECK(bitwise_equal(params.branches[b].phi, before.branches[b].phi));
    CHECK(bitwise_equal(params.branches[b].cls_weight, before.branches[b].cls_weight));
    CHECK(bitwise_equal(params.branches[b].cls_bias, before.branches[b].cls_bias));
  }
}

TEST_CASE("training is bitwise deterministic in the seed") {
  const auto& f = fixture();
  std::vector<const Checkpoint*> set;
  std::vector<int> labels;
  for (const Checkpoint& ck : f.checkpoints) {
    set.push_back(&ck);
    labels.push_back(ck.task_id);
  }
  so::TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 11;
  so::SecondOrderParams a = so::init_params(f.arch, 2, {}, 9);
  so::SecondOrderParams b = so::init_params(f.arch, 2, {}, 9);
  so::train(a, set, labels, cfg);
  so::train(b, set, labels, cfg);
  for (std::size_t i = 0; i < a.n_branches(); ++i) {
    CHECK(bitwise_equal(a.branches[i].phi, b.branches[i].phi));
    CHECK(bitwise_equal(a.branches[i].cls_weight, b.branches[i].cls_weight));
  }
}

TEST_CASE("tiny separable instance trains to a small loss") {
  const auto& f = fixture();
  std::vector<const Checkpoint*> set;
  std::vector<int> labels;
  for (const Checkpoint& ck : f.checkpoints) {
    set.push_back(&ck);
    labels.push_back(ck.task_id);
  }
  so::SecondOrderParams params = so::init_params(f.arch, 2, {}, 21);
  so::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 2;
  // 4 samples x 50 epochs is only 200 updates; the paper-scale step size
  // (0.001) moves the classifier far too little for that budget (measured
  // final loss 0.63), so this instance runs at 0.1.
  cfg.lr_initial = 0.1;
  const so::TrainResult result = so::train(params, set, labels, cfg);
  REQUIRE(result.epoch_loss.size() == 50);
  CHECK(result.epoch_loss.back() < 0.1);
}

TEST_CASE("full loss gradient matches finite differences on tie-guarded instances") {
  Rng rng(55);
  ArchDescriptor arch;
  arch.conv = {{3, 2, 2, 2, 1, 0, true}, {2, 2, 2, 2, 1, 0, true}};
  arch.n_classes = 2;
  arch.image_size = 6;
  int done = 0, attempts = 0;
  while (done < 200 && attempts < 2000) {
    ++attempts;
    so::InitOptions options;
    options.branch_weights = {0.6, 0.4};  // every branch active
    so::SecondOrderParams params =
        so::init_params(arch, 3, options, rng.next_u64());
    const Checkpoint ck = random_checkpoint(arch, rng.next_u64());
    const int label = static_cast<int>(rng.below(3));

    // tie guard: margins must dominate the finite-difference step
    bool guarded = true;
    {
      const so::ForwardRecord record = so::forward(params, ck, label);
      for (const so::BranchForward& bf : record.branches)
        if (bf.repr.min_sort_margin < 1e-3 || bf.repr.routing.min_max_margin < 1e-3)
          guarded = false;
    }
    if (!guarded) continue;

    auto loss_value = [&]() { return so::forward(params, ck, label).loss; };

    // analytic gradients via one training step of batch 1 at lr 1:
    // theta' = theta - g  =>  g = theta - theta'
    so::SecondOrderParams stepped = params;
    so::TrainConfig cfg;
    cfg.lr_initial = 1.0;
    cfg.epochs = 1;
    cfg.decay_epochs = {};
    so::train(stepped, {&ck}, {label}, cfg);

    const double h = 1e-6;
    std::vector<double> analytic, fd;
    for (std::size_t b = 0; b < params.n_branches(); ++b) {
      auto collect = [&](Tensor& live, const Tensor& after) {
        for (std::size_t i = 0; i < live.size(); ++i) {
          analytic.push_back(live[i] - after[i]);  // = gradient at lr 1
          const double saved = live[i];
          live[i] = saved + h;
          const double up = loss_value();
          live[i] = saved - h;
          const double dn = loss_value();
          live[i] = saved;
          fd.push_back((up - dn) / (2 * h));
        }
      };
      collect(params.branches[b].phi, stepped.branches[b].phi);
      collect(params.branches[b].cls_weight, stepped.branches[b].cls_weight);
      collect(params.branches[b].cls_bias, stepped.branches[b].cls_bias);
    }
    CHECK(vector_rel_error(analytic, fd) <= 1e-4);
    ++done;
  }
  CHECK(done == 200);
}

TEST_CASE("forward is invariant to compensated checkpoint permutations") {
  Rng rng(66);
  const ArchDescriptor arch = default_arch();
  const so::SecondOrderParams params = so::init_params(arch, 4, {}, 8);
  const Checkpoint ck = random_checkpoint(arch, 123, 2);
  const so::ForwardRecord base = so::forward(params, ck, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Checkpoint moved = ck;
    for (std::size_t l = 0; l < arch.conv.size(); ++l) {
      const auto perm =
          rng.permutation(static_cast<std::size_t>(arch.conv[l].out_filters));
      moved.weights = align::permute_layer_filters(arch, moved.weights, l, perm, true);
    }
    const so::ForwardRecord rec = so::forward(params, moved, 2);
    CHECK(rec.loss == base.loss);  // bitwise
    for (std::size_t i = 0; i < rec.fused.size(); ++i)
      CHECK(rec.fused[i] == base.fused[i]);
  }
}

TEST_CASE("features are unit norm; similarity is symmetric and bounded") {
  const auto& f = fixture();
  const so::SecondOrderParams params = so::init_params(f.arch, 2, {}, 31);
  const Checkpoint& a = f.checkpoints[0];
  const Checkpoint& b = f.checkpoints[3];
  const so::Feature fa = so::extract_features(params, a, 0);
  REQUIRE(!fa.degenerate);
  double norm = 0;
  for (double v : fa.values) norm += v * v;
  CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-9);

  const so::Similarity self = so::similarity(params, a, a, 0);
  CHECK(self.value == doctest::Approx(1.0).epsilon(1e-12));
  const so::Similarity ab = so::similarity(params, a, b, 0);
  const so::Similarity ba = so::similarity(params, b, a, 0);
  CHECK(ab.value == ba.value);  // bitwise
  CHECK(ab.value >= -1.0);
  CHECK(ab.value <= 1.0);
}

TEST_CASE("degenerate features are flagged, not normalized") {
  const ArchDescriptor arch = tiny_arch();
  so::SecondOrderParams params = so::init_params(arch, 3, {}, 1);
  params.branches[0].cls_weight = Tensor(params.branches[0].cls_weight.shape());
  params.branches[0].cls_bias = Tensor(params.branches[0].cls_bias.shape());
  const Checkpoint ck = random_checkpoint(arch, 2);
  const so::Feature f = so::extract_features(params, ck, 0);
  CHECK(f.degenerate);
  for (double v : f.values) CHECK(v == 0.0);
  const so::Similarity s = so::similarity(params, ck, ck, 0);
  CHECK(s.degenerate);
}

TEST_CASE("second-order params survive a container round trip bitwise") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "wsk_test_soparams";
  fs::remove_all(dir);
  fs::create_directories(dir);
  so::InitOptions options;
  options.branch_weights = {0.25, 0.75};
  options.flags = {{true, true}, {false, true}};
  const so::SecondOrderParams params = so::init_params(tiny_arch(), 6, options, 77);
  const fs::path file = dir / "params.wsk";
  so::save_params(params, file);
  const so::SecondOrderParams back = so::load_params(file);
  CHECK(back.n_tasks == params.n_tasks);
  CHECK(back.branch_weights == params.branch_weights);
  for (std::size_t b = 0; b < params.n_branches(); ++b) {
    CHECK(back.flags[b].channel == params.flags[b].channel);
    CHECK(back.flags[b].filter == params.flags[b].filter);
    CHECK(bitwise_equal(back.branches[b].phi, params.branches[b].phi));
    CHECK(bitwise_equal(back.branches[b].cls_weight, params.branches[b].cls_weight));
    CHECK(bitwise_equal(back.branches[b].cls_bias, params.branches[b].cls_bias));
  }
  fs::remove_all(dir);
}

TEST_CASE("raw-weights mode is order-sensitive by construction") {
  Rng rng(88);
  const ArchDescriptor arch = tiny_arch();
  so::InitOptions options;
  options.input = so::BranchInput::raw_weights;
  const so::SecondOrderParams params = so::init_params(arch, 3, options, 5);
  const Checkpoint ck = random_checkpoint(arch, 9);
  const so::ForwardRecord base = so::forward(params, ck, 1);
  std::vector<std::size_t> perm;
  do {
    perm = rng.permutation(static_cast<std::size_t>(arch.conv[0].out_filters));
  } while (std::is_sorted(perm.begin(), perm.end()));
  Checkpoint moved = ck;
  moved.weights = align::permute_layer_filters(arch, ck.weights, 0, perm, true);
  const so::ForwardRecord rec = so::forward(params, moved, 1);
  CHECK(rec.loss != base.loss);
}
