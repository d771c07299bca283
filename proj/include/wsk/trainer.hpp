#pragma once

#include <cstdint>
#include <vector>

#include "wsk/checkpoint.hpp"
#include "wsk/taskgen.hpp"

namespace wsk {

struct LrSchedule {
  double initial = 0.05;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs{15, 25};

  double at_epoch(int epoch) const {
    double lr = initial;
    for (int e : decay_epochs)
      if (epoch >= e) lr *= decay_factor;
    return lr;
  }
};

struct TrainConfig {
  LrSchedule lr;
  int epochs = 30;
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int samples_per_class = 128;
  std::uint64_t data_seed = 1;  // dataset stream; repeats of a task share it

  void validate() const;
  std::uint64_t hash() const;  // FNV-1a over the canonical field encoding
};

// One SGD step with momentum and decoupled-from-nothing L2 weight decay:
//   g = grad + wd * param;  v = momentum * v + g;  param -= lr * v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
              double momentum, double weight_decay);

// The weights train_first_order starts from for a given seed.
ModelWeights initial_weights_for_seed(const ArchDescriptor& arch, std::uint64_t seed);

// Runs SGD on the task's fixed dataset and returns the final checkpoint.
// Deterministic in (task, arch, config, seed); seed drives init and the
// per-epoch shuffles. Throws training_diverged (detail = epoch) if the
// loss goes non-finite.
Checkpoint train_first_order(const TaskSpec& task, const ArchDescriptor& arch,
                             const TrainConfig& config, std::uint64_t seed);

// Fraction of images whose argmax logit matches the label.
double evaluate_accuracy(const ArchDescriptor& arch, const ModelWeights& w, const Batch& batch);

}  // namespace wsk
