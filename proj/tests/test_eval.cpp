#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "wsk/eval.hpp"
#include "wsk/report.hpp"

using namespace wsk;
using namespace wsk_test;
namespace ev = wsk::eval;

namespace {

// Synthetic in-memory modelset where each task's checkpoints are exact
// duplicates of one random net.
struct DuplicateFixture {
  ModelSet ms;
  std::vector<Checkpoint> checkpoints;
  DuplicateFixture(int n_tasks, int repeats) {
    ms.arch = tiny_arch();
    ms.repeats = repeats;
    for (int t = 0; t < n_tasks; ++t) {
      TaskSpec task;
      task.task_id = t;
      task.class_a = make_family(PatternKind::stripes, 0);
      task.class_b = make_family(PatternKind::blobs, 1);
      ms.suite.push_back(task);
      Checkpoint proto;
      proto.arch = ms.arch;
      proto.weights = initial_weights_for_seed(ms.arch, 1000 + t);
      proto.task_id = t;
      proto.train_accuracy = 1.0;
      for (int j = 0; j < repeats; ++j) {
        ManifestRow row;
        row.file = "t" + std::to_string(t) + "_" + std::to_string(j);
        row.task_id = t;
        row.seed = static_cast<std::uint64_t>(j);
        row.train_accuracy = 1.0;
        ms.rows.push_back(row);
        Checkpoint copy = proto;
        copy.seed = static_cast<std::uint64_t>(j);
        checkpoints.push_back(std::move(copy));
      }
    }
  }
};

}  // namespace

TEST_CASE("ari: worked example, identity, relabeling, symmetry") {
  const std::vector<int> a{0, 0, 1, 1};
  const std::vector<int> b{0, 1, 0, 1};
  CHECK(ev::ari(a, b) == doctest::Approx(-0.5).epsilon(1e-12));  // oracle: pair counting

  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 4 + rng.below(30);
    std::vector<int> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<int>(rng.below(4));
      y[i] = static_cast<int>(rng.below(3));
    }
    // force at least two clusters in x
    x[0] = 0;
    x[1] = 1;
    CHECK(ev::ari(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    // relabeling invariance: swap cluster ids 0 and 1
    std::vector<int> relabeled(n);
    for (std::size_t i = 0; i < n; ++i)
      relabeled[i] = x[i] == 0 ? 1 : (x[i] == 1 ? 0 : x[i]);
    CHECK(ev::ari(x, y) == doctest::Approx(ev::ari(relabeled, y)).epsilon(1e-12));
    CHECK(ev::ari(x, y) == doctest::Approx(ev::ari(y, x)).epsilon(1e-12));
  }
}

TEST_CASE("kmeans separates two well-separated pairs exactly") {
  // oracle: the optimal 2-clustering of these 4 points is {0,1} vs {2,3}
  const std::vector<double> points{0.0, 0.0, 0.1, 0.0, 10.0, 10.0, 10.1, 10.0};
  const ev::KMeansResult km = ev::kmeans(points, 4, 2, 2, 5);
  CHECK(km.converged);
  const std::vector<int> truth{0, 0, 1, 1};
  CHECK(ev::ari(km.labels, truth) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kmeans objective is non-increasing across iterations") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 30 + rng.below(50);
    const std::size_t d = 2 + rng.below(4);
    std::vector<double> points(n * d);
    for (double& v : points) v = rng.normal();
    const ev::KMeansResult km =
        ev::kmeans(points, n, d, 2 + static_cast<int>(rng.below(3)), rng.next_u64());
    for (std::size_t i = 1; i < km.objective.size(); ++i)
      CHECK(km.objective[i] <= km.objective[i - 1] + 1e-9);
  }
}

TEST_CASE("kmeans is deterministic in the seed") {
  Rng rng(3);
  std::vector<double> points(60);
  for (double& v : points) v = rng.normal();
  const ev::KMeansResult a = ev::kmeans(points, 30, 2, 3, 42);
  const ev::KMeansResult b = ev::kmeans(points, 30, 2, 3, 42);
  CHECK(a.labels == b.labels);
}

TEST_CASE("spearman: monotone, reversed, and noisy series") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{2, 4, 9, 16, 30};
  const std::vector<double> down{5, 4, 3, 2, 1};
  CHECK(ev::spearman(x, up) == doctest::Approx(1.0));
  CHECK(ev::spearman(x, down) == doctest::Approx(-1.0));
  const std::vector<double> ties{1, 1, 2, 2, 3};
  CHECK(std::abs(ev::spearman(ties, ties) - 1.0) <= 1e-12);
}

TEST_CASE("analytic random baselines match the paper-scale values") {
  CHECK(ev::random_top_k(50, 1) == doctest::Approx(0.02));   // 2.0%
  CHECK(ev::random_top_k(50, 5) == doctest::Approx(0.10));
  CHECK(ev::random_top_k(16, 1) == doctest::Approx(0.0625));
  CHECK(ev::random_rank_k(80, 8, 1) == doctest::Approx(0.10));  // 10.0%
  CHECK(ev::random_rank_k(32, 8, 1) == doctest::Approx(0.25));
  // monotone in k and capped at 1
  double prev = 0;
  for (int k = 1; k <= 32; ++k) {
    const double v = ev::random_rank_k(32, 8, k);
    CHECK(v >= prev);
    CHECK(v <= 1.0);
    prev = v;
  }
  CHECK(ev::random_rank_k(32, 8, 32) == doctest::Approx(1.0));
}

TEST_CASE("random-prediction metrics match resampling within 3 standard errors") {
  Rng rng(7);
  SUBCASE("classification: uniform label guessing") {
    const int N = 16;
    const int tests = 32;
    const int resamples = 1000;
    for (const int k : {1, 5, 10}) {
      std::vector<double> fractions;
      for (int r = 0; r < resamples; ++r) {
        int hits = 0;
        for (int q = 0; q < tests; ++q) {
          // guess a uniform ranking; true label sits in the top k with prob k/N
          if (rng.below(N) < static_cast<std::uint64_t>(k)) ++hits;
        }
        fractions.push_back(static_cast<double>(hits) / tests);
      }
      double mean = 0;
      for (double f : fractions) mean += f;
      mean /= resamples;
      double var = 0;
      for (double f : fractions) var += (f - mean) * (f - mean);
      var /= resamples - 1;
      const double se = std::sqrt(var / resamples);
      CHECK(std::abs(mean - ev::random_top_k(N, k)) <= 3 * se + 1e-12);
    }
  }
  SUBCASE("retrieval: uniform gallery ordering") {
    const int G = 32, m = 8;
    const int resamples = 1000;
    for (const int k : {1, 5, 10}) {
      std::vector<double> hits;
      for (int r = 0; r < resamples; ++r) {
        std::vector<int> gallery(G, 0);
        for (int i = 0; i < m; ++i) gallery[i] = 1;
        rng.shuffle(gallery);
        bool hit = false;
        for (int i = 0; i < k; ++i)
          if (gallery[i] == 1) hit = true;
        hits.push_back(hit ? 1.0 : 0.0);
      }
      double mean = 0;
      for (double h : hits) mean += h;
      mean /= resamples;
      double var = 0;
      for (double h : hits) var += (h - mean) * (h - mean);
      var /= resamples - 1;
      const double se = std::sqrt(var / resamples);
      CHECK(std::abs(mean - ev::random_rank_k(G, m, k)) <= 3 * se + 1e-12);
    }
  }
}

TEST_CASE("duplicate-checkpoint modelset classifies perfectly when aligned") {
  const DuplicateFixture fix(4, 5);
  const ev::CheckpointCache cache(fix.ms, fix.checkpoints);
  const std::vector<std::uint64_t> seeds{0};
  ev::RunOptions opts;
  opts.train.epochs = 60;
  opts.train.lr_initial = 0.01;
  opts.train.decay_epochs = {};
  const ev::EvalReport report =
      ev::eval_classification(cache, ev::BaselineMode::frobenius_aligned, seeds, opts);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].k1 == doctest::Approx(1.0));
  // top-k monotone
  CHECK(report.rows[0].k1 <= report.rows[0].k5);
  CHECK(report.rows[0].k5 <= report.rows[0].k10);
}

TEST_CASE("retrieval ranks an identical gallery checkpoint first") {
  const DuplicateFixture fix(6, 5);
  const ev::CheckpointCache cache(fix.ms, fix.checkpoints);
  const std::vector<std::uint64_t> seeds{1};
  ev::RunOptions opts;
  opts.train.epochs = 20;
  const ev::EvalReport report =
      ev::eval_retrieval(cache, ev::BaselineMode::frobenius_aligned, seeds, opts);
  REQUIRE(report.rows.size() == 1);
  // queries are duplicates of their gallery mates, so rank-1 is perfect
  CHECK(report.rows[0].k1 == doctest::Approx(1.0));
  for (const ev::QueryDetail& q : report.queries) CHECK(q.hit_rank == 1);
}

TEST_CASE("random mode reports the analytic values and no queries") {
  const DuplicateFixture fix(4, 5);
  const ev::CheckpointCache cache(fix.ms, fix.checkpoints);
  const std::vector<std::uint64_t> seeds{0, 1};
  const ev::EvalReport c =
      ev::eval_classification(cache, ev::BaselineMode::random_prediction, seeds);
  CHECK(c.rows[0].k1 == doctest::Approx(0.25));
  CHECK(c.queries.empty());
  const ev::EvalReport r =
      ev::eval_retrieval(cache, ev::BaselineMode::random_prediction, seeds);
  CHECK(r.rows[0].k1 == doctest::Approx(ev::random_rank_k(6, 3, 1)));
}

TEST_CASE("reports serialize deterministically") {
  const DuplicateFixture fix(4, 4);
  const ev::CheckpointCache cache(fix.ms, fix.checkpoints);
  const std::vector<std::uint64_t> seeds{3};
  ev::RunOptions opts;
  opts.train.epochs = 5;
  const ev::EvalReport a =
      ev::eval_classification(cache, ev::BaselineMode::fc_only, seeds, opts);
  const ev::EvalReport b =
      ev::eval_classification(cache, ev::BaselineMode::fc_only, seeds, opts);
  CHECK(report::to_json_text(a) == report::to_json_text(b));
  CHECK(report::to_csv_text(a) == report::to_csv_text(b));
}

TEST_CASE("alignment ablation emits four variants per deep branch") {
  const DuplicateFixture fix(4, 4);
  const ev::CheckpointCache cache(fix.ms, fix.checkpoints);
  const std::vector<std::uint64_t> seeds{0};
  ev::RunOptions opts;
  opts.train.epochs = 2;  // shape check only
  const ev::EvalReport report = ev::ablate_alignment(cache, seeds, opts);
  CHECK(report.rows.size() == 4 * (fix.ms.arch.conv.size() - 1));
}

TEST_CASE("transferability needs at least 10 pairs") {
  const DuplicateFixture fix(4, 4);
  const ev::CheckpointCache cache(fix.ms, fix.checkpoints);
  const sonet::SecondOrderParams params = sonet::init_params(fix.ms.arch, 3, {}, 0);
  ev::TransferOptions options;
  options.n_pairs = 5;
  CHECK_THROWS_AS(ev::eval_transferability(cache, params, options), Error);
}
