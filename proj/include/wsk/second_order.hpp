#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsk/align.hpp"
#include "wsk/checkpoint.hpp"

namespace wsk::sonet {

// What a branch feeds its classifier.
enum class BranchInput {
  sorted_scores,  // the aligned representation (scoring -> sort)
  raw_weights,    // flattened stored-order filter tensor (the FC-only baseline)
};

struct AlignFlags {
  bool channel = true;  // per-channel max matching (layers >= 2)
  bool filter = true;   // per-column descending sort
};

struct BranchParams {
  Tensor phi;         // (g', c, h, w); empty in raw_weights mode
  Tensor cls_weight;  // (n_tasks, repr_dim)
  Tensor cls_bias;    // (n_tasks)
};

// The hierarchical second-order network: one branch per conv layer, each a
// scoring front end plus a dense classifier, fused by fixed branch weights.
struct SecondOrderParams {
  ArchDescriptor arch;  // first-order arch the branches consume
  int n_tasks = 0;
  BranchInput input = BranchInput::sorted_scores;
  std::vector<AlignFlags> flags;       // per branch
  std::vector<double> branch_weights;  // w_l >= 0, sum > 0
  std::vector<BranchParams> branches;

  std::size_t n_branches() const { return branches.size(); }
  double weight_total() const;
  std::size_t repr_dim(std::size_t branch) const;
  void validate() const;
};

struct InitOptions {
  BranchInput input = BranchInput::sorted_scores;
  std::vector<int> phi_filters;        // g' per branch; empty -> g_l
  std::vector<AlignFlags> flags;       // empty -> all on
  std::vector<double> branch_weights;  // empty -> one-hot on branch 1
};

SecondOrderParams init_params(const ArchDescriptor& arch, int n_tasks,
                              const InitOptions& options, std::uint64_t seed);

std::vector<double> one_hot_weights(std::size_t n_branches, std::size_t branch);

struct BranchForward {
  align::BranchRepr repr;   // sorted_scores mode (values + routing)
  std::vector<double> raw;  // raw_weights mode input
  Tensor logits;
  Tensor probs;
  bool computed = false;
};

struct ForwardRecord {
  std::vector<BranchForward> branches;
  Tensor fused;  // (n_tasks), sums to 1 within 1e-9
  double loss = 0.0;  // only meaningful when a label was given
  int label = -1;
};

// label = -1 skips the loss. active_only skips branches with zero weight
// (the fused probabilities are bitwise unchanged; zero-weight branches
// contribute exactly 0).
ForwardRecord forward(const SecondOrderParams& params, const Checkpoint& ck, int label = -1,
                      bool active_only = false);

struct TrainConfig {
  double lr_initial = 0.001;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs{40, 80};
  int epochs = 100;
  int batch_size = 1;
  std::uint64_t seed = 0;

  double lr_at(int epoch) const {
    double lr = lr_initial;
    for (int e : decay_epochs)
      if (epoch >= e) lr *= decay_factor;
    return lr;
  }
  // The longer per-branch ablation schedule: 3x the epochs, decays at 1/2
  // and 3/4 (300 epochs, decays 150/225, for the 100-epoch default).
  TrainConfig extended() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean loss per epoch
};

// Plain SGD on phi and the classifiers (no momentum, no weight decay);
// checkpoints are fixed inputs. Deterministic in config.seed.
TrainResult train(SecondOrderParams& params, const std::vector<const Checkpoint*>& train_set,
                  const std::vector<int>& labels, const TrainConfig& config);

struct Feature {
  std::vector<double> values;  // unit L2 norm unless degenerate
  bool degenerate = false;     // all-zero pre-normalization output
};

// The branch's pre-softmax dense output, L2-normalized. branch is 0-based.
Feature extract_features(const SecondOrderParams& params, const Checkpoint& ck,
                         std::size_t branch);

struct Similarity {
  double value = 0.0;  // cosine in [-1, 1]
  bool degenerate = false;
};

Similarity similarity(const SecondOrderParams& params, const Checkpoint& a,
                      const Checkpoint& b, std::size_t branch);

// Container round trip (metadata kind "second-order").
void save_params(const SecondOrderParams& params, const std::filesystem::path& path);
SecondOrderParams load_params(const std::filesystem::path& path);

}  // namespace wsk::sonet
