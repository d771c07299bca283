#include "wsk/trainer.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "wsk/kernels.hpp"
#include "wsk/log.hpp"
#include "wsk/rng.hpp"

namespace wsk {

namespace {

constexpr std::uint64_t kInitSalt = 0x57a27;
constexpr std::uint64_t kShuffleSalt = 0x5f1e;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

void fnv_double(std::uint64_t& h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  fnv_bytes(h, &bits, sizeof(bits));
}

void fnv_int(std::uint64_t& h, std::int64_t v) { fnv_bytes(h, &v, sizeof(v)); }

Tensor image_slice(const Tensor& images, std::size_t index) {
  const std::size_t c = images.extent(1), h = images.extent(2), w = images.extent(3);
  const std::size_t n = c * h * w;
  std::vector<double> data(n);
  std::memcpy(data.data(), images.data() + index * n, n * sizeof(double));
  return Tensor::from({c, h, w}, std::move(data));
}

Tensor one_hot_slice(const Tensor& one_hot, std::size_t index) {
  const std::size_t k = one_hot.extent(1);
  std::vector<double> data(k);
  std::memcpy(data.data(), one_hot.data() + index * k, k * sizeof(double));
  return Tensor::from({k}, std::move(data));
}

struct PerImageResult {
  WeightGrads grads;
  double loss = 0.0;
};

}  // namespace

void TrainConfig::validate() const {
  require(lr.initial >= 0.0, ErrorCode::precondition, "train config: lr must be >= 0");
  require(lr.decay_factor > 0.0 && lr.decay_factor <= 1.0, ErrorCode::precondition,
          "train config: decay factor must be in (0,1]");
  require(epochs >= 1, ErrorCode::precondition, "train config: epochs must be >= 1");
  require(batch_size >= 1, ErrorCode::precondition, "train config: batch_size must be >= 1");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::precondition,
          "train config: momentum must be in [0,1)");
  require(weight_decay >= 0.0, ErrorCode::precondition, "train config: weight_decay >= 0");
  require(samples_per_class >= 1, ErrorCode::precondition,
          "train config: samples_per_class must be >= 1");
}

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  fnv_double(h, lr.initial);
  fnv_double(h, lr.decay_factor);
  fnv_int(h, static_cast<std::int64_t>(lr.decay_epochs.size()));
  for (int e : lr.decay_epochs) fnv_int(h, e);
  fnv_int(h, epochs);
  fnv_int(h, batch_size);
  fnv_double(h, momentum);
  fnv_double(h, weight_decay);
  fnv_int(h, samples_per_class);
  fnv_bytes(h, &data_seed, sizeof(data_seed));
  return h;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
              double momentum, double weight_decay) {
  require(param.same_shape(grad) && param.same_shape(velocity), ErrorCode::shape_mismatch,
          "sgd_step: parameter, gradient and velocity shapes must match");
  double* p = param.data();
  const double* g = grad.data();
  double* v = velocity.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double step = g[i] + weight_decay * p[i];
    v[i] = momentum * v[i] + step;
    p[i] -= lr * v[i];
  }
}

double evaluate_accuracy(const ArchDescriptor& arch, const ModelWeights& w, const Batch& batch) {
  const int n = static_cast<int>(batch.images.extent(0));
  int correct = 0;
#pragma omp parallel for schedule(static) reduction(+ : correct)
  for (int i = 0; i < n; ++i) {
    const Tensor logits = forward_logits(arch, w, image_slice(batch.images, i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[best]) best = k;
    if (static_cast<int>(best) == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

ModelWeights initial_weights_for_seed(const ArchDescriptor& arch, std::uint64_t seed) {
  Rng init_rng(mix_seed(seed, kInitSalt));
  return init_weights(arch, init_rng);
}

Checkpoint train_first_order(const TaskSpec& task, const ArchDescriptor& arch,
                             const TrainConfig& config, std::uint64_t seed) {
  arch.validate();
  config.validate();
  require(arch.image_channels == TaskSpec::channels, ErrorCode::precondition,
          "train_first_order: arch must take 3-channel images");
  require(arch.n_classes == 2, ErrorCode::precondition,
          "train_first_order: arch must emit 2 classes");
  require(arch.image_size == task.image_size, ErrorCode::precondition,
          "train_first_order: arch image size does not match task");

  const Batch data = sample_batch(task, 2 * config.samples_per_class, config.data_seed);
  const std::size_t n = data.images.extent(0);

  ModelWeights weights = initial_weights_for_seed(arch, seed);

  std::vector<Tensor> velocity;
  for (const Tensor& t : weights.conv) velocity.emplace_back(t.shape());
  velocity.emplace_back(weights.fc_weight.shape());
  velocity.emplace_back(weights.fc_bias.shape());

  Rng shuffle_rng(mix_seed(seed, kShuffleSalt));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr.at_epoch(epoch);
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, n - start);
      std::vector<PerImageResult> results(count);
      bool batch_finite = true;  // exceptions must not escape the parallel region
#pragma omp parallel for schedule(static)
      for (std::size_t b = 0; b < count; ++b) {
        try {
          const std::size_t idx = order[start + b];
          const Tensor image = image_slice(data.images, idx);
          const Tensor target = one_hot_slice(data.one_hot, idx);
          const Activations acts = forward_full(arch, weights, image);
          const Tensor probs = kernels::softmax(acts.logits);
          results[b].loss = kernels::cross_entropy(probs, target);
          results[b].grads = backward(arch, weights, acts, probs, target);
        } catch (const Error&) {
          results[b].loss = std::numeric_limits<double>::quiet_NaN();
#pragma omp atomic write
          batch_finite = false;
        }
      }
      if (!batch_finite)
        throw Error(ErrorCode::training_diverged,
                    "training diverged (non-finite activations) at epoch " +
                        std::to_string(epoch),
                    epoch);
      // Serial reduction in batch order keeps results identical for any
      // thread count.
      WeightGrads total = std::move(results[0].grads);
      double loss = results[0].loss;
      for (std::size_t b = 1; b < count; ++b) {
        for (std::size_t l = 0; l < total.conv.size(); ++l)
          for (std::size_t i = 0; i < total.conv[l].size(); ++i)
            total.conv[l][i] += results[b].grads.conv[l][i];
        for (std::size_t i = 0; i < total.fc_weight.size(); ++i)
          total.fc_weight[i] += results[b].grads.fc_weight[i];
        for (std::size_t i = 0; i < total.fc_bias.size(); ++i)
          total.fc_bias[i] += results[b].grads.fc_bias[i];
        loss += results[b].loss;
      }
      const double scale = 1.0 / static_cast<double>(count);
      loss *= scale;
      if (!std::isfinite(loss))
        throw Error(ErrorCode::training_diverged,
                    "training diverged (non-finite loss) at epoch " + std::to_string(epoch),
                    epoch);
      for (std::size_t l = 0; l < total.conv.size(); ++l)
        for (std::size_t i = 0; i < total.conv[l].size(); ++i) total.conv[l][i] *= scale;
      for (std::size_t i = 0; i < total.fc_weight.size(); ++i) total.fc_weight[i] *= scale;
      for (std::size_t i = 0; i < total.fc_bias.size(); ++i) total.fc_bias[i] *= scale;

      for (std::size_t l = 0; l < weights.conv.size(); ++l)
        sgd_step(weights.conv[l], total.conv[l], velocity[l], lr, config.momentum,
                 config.weight_decay);
      sgd_step(weights.fc_weight, total.fc_weight, velocity[weights.conv.size()], lr,
               config.momentum, config.weight_decay);
      sgd_step(weights.fc_bias, total.fc_bias, velocity[weights.conv.size() + 1], lr,
               config.momentum, config.weight_decay);
    }
  }

  Checkpoint ck;
  ck.arch = arch;
  ck.weights = std::move(weights);
  ck.task_id = task.task_id;
  ck.seed = seed;
  ck.train_accuracy = evaluate_accuracy(arch, ck.weights, data);
  ck.config_hash = config.hash();
  WSK_DEBUG("task %d seed %llu: train accuracy %.3f", task.task_id,
            static_cast<unsigned long long>(seed), ck.train_accuracy);
  return ck;
}

}  // namespace wsk
