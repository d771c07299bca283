#include "wsk/second_order.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "wsk/json_io.hpp"
#include "wsk/kernels.hpp"
#include "wsk/log.hpp"
#include "wsk/rng.hpp"

namespace wsk::sonet {

namespace {

constexpr std::uint64_t kInitSalt = 0x50e7;
constexpr std::uint64_t kShuffleSalt = 0x50e8;

Tensor vector_tensor(const std::vector<double>& v) {
  return Tensor::from({v.size()}, std::vector<double>(v));
}

struct BranchEval {
  align::BranchRepr repr;
  std::vector<double> raw;
  Tensor logits;
};

BranchEval eval_branch(const SecondOrderParams& params, const Checkpoint& ck, std::size_t b) {
  BranchEval out;
  const BranchParams& branch = params.branches[b];
  if (params.input == BranchInput::raw_weights) {
    const Tensor& theta = ck.weights.conv[b];
    out.raw.assign(theta.data(), theta.data() + theta.size());
    out.logits = kernels::dense(vector_tensor(out.raw), branch.cls_weight, branch.cls_bias);
    return out;
  }
  const Tensor& theta = ck.weights.conv[b];
  align::AlignmentScores scores =
      b == 0 ? align::score_first_layer(theta, branch.phi)
             : align::score_deep_layer(static_cast<int>(b) + 1, theta, branch.phi,
                                       params.flags[b].channel);
  out.repr = align::canonicalize(std::move(scores), params.flags[b].filter);
  out.logits = kernels::dense(vector_tensor(out.repr.values), branch.cls_weight,
                              branch.cls_bias);
  return out;
}

}  // namespace

double SecondOrderParams::weight_total() const {
  double total = 0.0;
  for (double w : branch_weights) total += w;
  return total;
}

std::size_t SecondOrderParams::repr_dim(std::size_t branch) const {
  return branches[branch].cls_weight.extent(1);
}

void SecondOrderParams::validate() const {
  arch.validate();
  require(n_tasks >= 2, ErrorCode::precondition, "second-order params: n_tasks must be >= 2");
  require(branches.size() == arch.conv.size(), ErrorCode::precondition,
          "second-order params: one branch per conv layer required");
  require(flags.size() == branches.size() && branch_weights.size() == branches.size(),
          ErrorCode::precondition, "second-order params: per-branch fields size mismatch");
  for (double w : branch_weights)
    require(w >= 0.0, ErrorCode::precondition, "second-order params: branch weights must be >= 0");
  require(weight_total() > 0.0, ErrorCode::precondition,
          "second-order params: branch weight total must be > 0");
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const ConvSpec& spec = arch.conv[b];
    const BranchParams& branch = branches[b];
    std::size_t dim;
    if (input == BranchInput::raw_weights) {
      dim = static_cast<std::size_t>(spec.out_filters) * spec.in_channels * spec.kernel_h *
            spec.kernel_w;
    } else {
      require(branch.phi.rank() == 4 &&
                  branch.phi.extent(1) == static_cast<std::size_t>(spec.in_channels) &&
                  branch.phi.extent(2) == static_cast<std::size_t>(spec.kernel_h) &&
                  branch.phi.extent(3) == static_cast<std::size_t>(spec.kernel_w),
              ErrorCode::shape_mismatch,
              "second-order params: phi shape mismatch at branch " + std::to_string(b + 1));
      dim = static_cast<std::size_t>(spec.out_filters) * branch.phi.extent(0);
    }
    require(branch.cls_weight.rank() == 2 &&
                branch.cls_weight.extent(0) == static_cast<std::size_t>(n_tasks) &&
                branch.cls_weight.extent(1) == dim,
            ErrorCode::shape_mismatch,
            "second-order params: classifier shape mismatch at branch " + std::to_string(b + 1));
    require(branch.cls_bias.rank() == 1 &&
                branch.cls_bias.extent(0) == static_cast<std::size_t>(n_tasks),
            ErrorCode::shape_mismatch,
            "second-order params: classifier bias mismatch at branch " + std::to_string(b + 1));
  }
}

std::vector<double> one_hot_weights(std::size_t n_branches, std::size_t branch) {
  require(branch < n_branches, ErrorCode::precondition, "one_hot_weights: branch out of range");
  std::vector<double> w(n_branches, 0.0);
  w[branch] = 1.0;
  return w;
}

SecondOrderParams init_params(const ArchDescriptor& arch, int n_tasks,
                              const InitOptions& options, std::uint64_t seed) {
  arch.validate();
  require(n_tasks >= 2, ErrorCode::precondition, "init_params: n_tasks must be >= 2");
  const std::size_t L = arch.conv.size();
  require(options.phi_filters.empty() || options.phi_filters.size() == L,
          ErrorCode::precondition, "init_params: phi_filters must have one entry per layer");

  SecondOrderParams params;
  params.arch = arch;
  params.n_tasks = n_tasks;
  params.input = options.input;
  params.flags = options.flags.empty() ? std::vector<AlignFlags>(L) : options.flags;
  params.branch_weights =
      options.branch_weights.empty() ? one_hot_weights(L, 0) : options.branch_weights;
  require(params.flags.size() == L && params.branch_weights.size() == L,
          ErrorCode::precondition, "init_params: per-branch option size mismatch");

  Rng rng(mix_seed(seed, kInitSalt));
  for (std::size_t b = 0; b < L; ++b) {
    const ConvSpec& spec = arch.conv[b];
    BranchParams branch;
    std::size_t dim;
    if (options.input == BranchInput::raw_weights) {
      dim = static_cast<std::size_t>(spec.out_filters) * spec.in_channels * spec.kernel_h *
            spec.kernel_w;
    } else {
      const std::size_t gp = options.phi_filters.empty()
                                 ? static_cast<std::size_t>(spec.out_filters)
                                 : static_cast<std::size_t>(options.phi_filters[b]);
      require(gp >= 1, ErrorCode::precondition, "init_params: phi filter count must be >= 1");
      branch.phi = Tensor({gp, static_cast<std::size_t>(spec.in_channels),
                           static_cast<std::size_t>(spec.kernel_h),
                           static_cast<std::size_t>(spec.kernel_w)});
      const double std =
          1.0 / std::sqrt(static_cast<double>(spec.in_channels) * spec.kernel_h * spec.kernel_w);
      for (std::size_t i = 0; i < branch.phi.size(); ++i)
        branch.phi[i] = rng.normal(0.0, std);
      dim = static_cast<std::size_t>(spec.out_filters) * gp;
    }
    branch.cls_weight = Tensor({static_cast<std::size_t>(n_tasks), dim});
    const double std = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < branch.cls_weight.size(); ++i)
      branch.cls_weight[i] = rng.normal(0.0, std);
    branch.cls_bias = Tensor({static_cast<std::size_t>(n_tasks)});
    params.branches.push_back(std::move(branch));
  }
  params.validate();
  return params;
}

ForwardRecord forward(const SecondOrderParams& params, const Checkpoint& ck, int label,
                      bool active_only) {
  params.validate();
  require(ck.arch == params.arch, ErrorCode::precondition,
          "forward: checkpoint arch does not match second-order params");
  require(label < params.n_tasks, ErrorCode::precondition, "forward: label out of range");

  ForwardRecord record;
  record.label = label;
  record.branches.resize(params.n_branches());
  const double W = params.weight_total();
  std::vector<double> fused(static_cast<std::size_t>(params.n_tasks), 0.0);
  for (std::size_t b = 0; b < params.n_branches(); ++b) {
    const double w = params.branch_weights[b];
    if (active_only && w == 0.0) continue;
    BranchEval eval = eval_branch(params, ck, b);
    BranchForward& bf = record.branches[b];
    bf.repr = std::move(eval.repr);
    bf.raw = std::move(eval.raw);
    bf.logits = std::move(eval.logits);
    bf.probs = kernels::softmax(bf.logits);
    bf.computed = true;
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += w * bf.probs[i];
  }
  for (double& f : fused) f /= W;
  record.fused = vector_tensor(fused);

  if (label >= 0) {
    Tensor one_hot({static_cast<std::size_t>(params.n_tasks)});
    one_hot[label] = 1.0;
    record.loss = kernels::cross_entropy(record.fused, one_hot);
  }
  return record;
}

TrainConfig TrainConfig::extended() const {
  TrainConfig ext = *this;
  ext.epochs = epochs * 3;
  ext.decay_epochs = {ext.epochs / 2, ext.epochs * 3 / 4};
  return ext;
}

namespace {

struct BranchGrads {
  Tensor phi;
  Tensor cls_weight;
  Tensor cls_bias;
  bool used = false;
};

// Per-sample gradient of the Eq.-(9) loss for every active branch.
double sample_gradients(const SecondOrderParams& params, const Checkpoint& ck, int label,
                        std::vector<BranchGrads>& grads) {
  const ForwardRecord record = forward(params, ck, label, /*active_only=*/true);
  const double W = params.weight_total();
  const double fused_true = record.fused[label];
  for (std::size_t b = 0; b < params.n_branches(); ++b) {
    const double w = params.branch_weights[b];
    if (w == 0.0 || !record.branches[b].computed) continue;
    const BranchForward& bf = record.branches[b];
    const double coef = w / (W * fused_true);
    // dL/dz_j = coef * q_t * (q_j - delta_tj)
    const double qt = bf.probs[label];
    Tensor dlogits({static_cast<std::size_t>(params.n_tasks)});
    for (std::size_t j = 0; j < dlogits.size(); ++j) {
      dlogits[j] = coef * qt * (bf.probs[j] - (static_cast<int>(j) == label ? 1.0 : 0.0));
    }
    const std::vector<double>& input_values =
        params.input == BranchInput::raw_weights ? bf.raw : bf.repr.values;
    const Tensor input = Tensor::from({input_values.size()}, std::vector<double>(input_values));
    kernels::DenseGrads dg = kernels::dense_grad(input, params.branches[b].cls_weight, dlogits);

    BranchGrads& acc = grads[b];
    if (!acc.used) {
      acc.cls_weight = std::move(dg.weights);
      acc.cls_bias = std::move(dg.bias);
      if (params.input == BranchInput::sorted_scores)
        acc.phi = align::backprop_scores(bf.repr, ck.weights.conv[b], params.branches[b].phi,
                                         dg.input.values());
      acc.used = true;
    } else {
      for (std::size_t i = 0; i < acc.cls_weight.size(); ++i)
        acc.cls_weight[i] += dg.weights[i];
      for (std::size_t i = 0; i < acc.cls_bias.size(); ++i) acc.cls_bias[i] += dg.bias[i];
      if (params.input == BranchInput::sorted_scores) {
        const Tensor dphi = align::backprop_scores(bf.repr, ck.weights.conv[b],
                                                   params.branches[b].phi, dg.input.values());
        for (std::size_t i = 0; i < acc.phi.size(); ++i) acc.phi[i] += dphi[i];
      }
    }
  }
  return record.loss;
}

}  // namespace

TrainResult train(SecondOrderParams& params, const std::vector<const Checkpoint*>& train_set,
                  const std::vector<int>& labels, const TrainConfig& config) {
  params.validate();
  require(!train_set.empty(), ErrorCode::precondition, "train: empty train set");
  require(labels.size() == train_set.size(), ErrorCode::precondition,
          "train: labels must match the train set");
  for (int y : labels)
    require(y >= 0 && y < params.n_tasks, ErrorCode::precondition,
            "train: label out of range [0, n_tasks)");
  require(config.lr_initial >= 0.0 && config.batch_size >= 1 && config.epochs >= 0,
          ErrorCode::precondition, "train: invalid config");

  Rng shuffle_rng(mix_seed(config.seed, kShuffleSalt));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      std::vector<BranchGrads> grads(params.n_branches());
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[start + k];
        batch_loss += sample_gradients(params, *train_set[idx], labels[idx], grads);
      }
      if (!std::isfinite(batch_loss))
        throw Error(ErrorCode::training_diverged,
                    "second-order training diverged at epoch " + std::to_string(epoch), epoch);
      epoch_loss += batch_loss;
      const double scale = lr / static_cast<double>(count);
      for (std::size_t b = 0; b < params.n_branches(); ++b) {
        if (!grads[b].used) continue;
        BranchParams& branch = params.branches[b];
        for (std::size_t i = 0; i < branch.cls_weight.size(); ++i)
          branch.cls_weight[i] -= scale * grads[b].cls_weight[i];
        for (std::size_t i = 0; i < branch.cls_bias.size(); ++i)
          branch.cls_bias[i] -= scale * grads[b].cls_bias[i];
        if (params.input == BranchInput::sorted_scores)
          for (std::size_t i = 0; i < branch.phi.size(); ++i)
            branch.phi[i] -= scale * grads[b].phi[i];
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

Feature extract_features(const SecondOrderParams& params, const Checkpoint& ck,
                         std::size_t branch) {
  params.validate();
  require(branch < params.n_branches(), ErrorCode::precondition,
          "extract_features: branch out of range");
  require(ck.arch == params.arch, ErrorCode::precondition,
          "extract_features: checkpoint arch mismatch");
  BranchEval eval = eval_branch(params, ck, branch);
  Feature f;
  f.values.assign(eval.logits.data(), eval.logits.data() + eval.logits.size());
  double norm2 = 0.0;
  for (double v : f.values) norm2 += v * v;
  if (norm2 == 0.0) {
    f.degenerate = true;  // kept as the zero vector, flagged
    return f;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : f.values) v *= inv;
  return f;
}

Similarity similarity(const SecondOrderParams& params, const Checkpoint& a,
                      const Checkpoint& b, std::size_t branch) {
  const Feature fa = extract_features(params, a, branch);
  const Feature fb = extract_features(params, b, branch);
  Similarity s;
  if (fa.degenerate || fb.degenerate) {
    s.degenerate = true;
    return s;
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < fa.values.size(); ++i) dot += fa.values[i] * fb.values[i];
  s.value = std::clamp(dot, -1.0, 1.0);
  return s;
}

void save_params(const SecondOrderParams& params, const std::filesystem::path& path) {
  params.validate();
  container::File file;
  Json flags = Json::array();
  for (const AlignFlags& f : params.flags)
    flags.push_back(Json{{"channel", f.channel}, {"filter", f.filter}});
  Json meta{{"kind", "second-order"},
            {"arch", arch_to_json(params.arch)},
            {"n_tasks", params.n_tasks},
            {"input", params.input == BranchInput::raw_weights ? "raw_weights" : "sorted_scores"},
            {"flags", flags},
            {"branch_weights", params.branch_weights}};
  file.metadata = meta.dump();
  for (std::size_t b = 0; b < params.n_branches(); ++b) {
    const std::string prefix = "branch" + std::to_string(b + 1);
    if (params.input == BranchInput::sorted_scores)
      file.tensors.push_back({prefix + ".phi", params.branches[b].phi});
    file.tensors.push_back({prefix + ".cls.weight", params.branches[b].cls_weight});
    file.tensors.push_back({prefix + ".cls.bias", params.branches[b].cls_bias});
  }
  container::write(path, file);
}

SecondOrderParams load_params(const std::filesystem::path& path) {
  container::File file = container::read(path);
  Json meta;
  try {
    meta = Json::parse(file.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "second-order params: bad metadata JSON: " + std::string(e.what()));
  }
  if (meta.value("kind", "") != "second-order")
    throw Error(ErrorCode::format, "second-order params: metadata kind mismatch");
  SecondOrderParams params;
  try {
    params.arch = arch_from_json(meta.at("arch"));
    params.n_tasks = meta.at("n_tasks").get<int>();
    params.input = meta.at("input").get<std::string>() == "raw_weights"
                       ? BranchInput::raw_weights
                       : BranchInput::sorted_scores;
    for (const Json& f : meta.at("flags"))
      params.flags.push_back({f.at("channel").get<bool>(), f.at("filter").get<bool>()});
    params.branch_weights = meta.at("branch_weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, "second-order params: metadata field missing: " +
                                       std::string(e.what()));
  }
  const std::size_t L = params.arch.conv.size();
  std::size_t cursor = 0;
  auto take = [&](const std::string& name) -> Tensor {
    if (cursor >= file.tensors.size() || file.tensors[cursor].name != name)
      throw Error(ErrorCode::format, "second-order params: expected tensor '" + name + "'");
    return std::move(file.tensors[cursor++].tensor);
  };
  for (std::size_t b = 0; b < L; ++b) {
    const std::string prefix = "branch" + std::to_string(b + 1);
    BranchParams branch;
    if (params.input == BranchInput::sorted_scores) branch.phi = take(prefix + ".phi");
    branch.cls_weight = take(prefix + ".cls.weight");
    branch.cls_bias = take(prefix + ".cls.bias");
    params.branches.push_back(std::move(branch));
  }
  try {
    params.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::format,
                std::string("second-order params: inconsistent contents: ") + e.what());
  }
  return params;
}

}  // namespace wsk::sonet
