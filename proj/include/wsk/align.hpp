#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "wsk/checkpoint.hpp"
#include "wsk/tensor.hpp"

namespace wsk::align {

// Pairwise scores of a checkpoint layer's filters against second-order
// filters, plus the routing needed to backpropagate through max/sort.
// Layer indices are 1-based to match the layer-1-is-special rule.
struct AlignmentScores {
  int layer = 1;
  std::size_t g = 0;   // checkpoint filters
  std::size_t gp = 0;  // second-order filters
  std::size_t c = 0;   // channels
  bool channel_max = false;  // true when the per-channel max matching ran
  std::vector<double> scores;              // g x gp, row-major
  std::vector<std::int32_t> channel_argmax;  // (gi*gp + gj)*c + cj -> winning ci
  // Smallest winner-vs-runner-up gap across all argmaxes; infinity when
  // channel_max is off or c == 1. Used by tie guards in gradient checks.
  double min_max_margin = std::numeric_limits<double>::infinity();
};

// The aligned, permutation-invariant representation of one layer: the
// per-column sorted score matrix flattened column-major (second-order
// filter major, sorted rank minor), plus routing for backprop.
struct BranchRepr {
  int layer = 1;
  std::size_t g = 0, gp = 0;
  bool sorted = true;
  std::vector<double> values;              // gp * g
  std::vector<std::int32_t> sort_perm;     // gj*g + rank -> original gi
  AlignmentScores routing;
  // Smallest gap between adjacent sorted values; infinity when unsorted.
  double min_sort_margin = std::numeric_limits<double>::infinity();
};

// Layer-1 scoring: channel order is fixed (RGB), so each entry is the full
// inner product over all channels in stored order. Requires c == 3.
AlignmentScores score_first_layer(const Tensor& theta, const Tensor& phi);

// Deep-layer scoring (layer >= 2): all pairwise per-channel-plane products,
// then per (target channel) the max over source channels, summed. Ties pick
// the lowest source channel. channel_align = false replaces the max
// matching with the fixed-order sum (the "w/o channel alignment" ablation).
AlignmentScores score_deep_layer(int layer, const Tensor& theta, const Tensor& phi,
                                 bool channel_align = true);

// Per-column descending sort (stable: ties keep the lower original filter
// index first). sort = false skips it (the "w/o filter alignment" ablation).
BranchRepr canonicalize(AlignmentScores scores, bool sort = true);

// Routes upstream gradients through the recorded sort permutation and
// channel argmaxes, then through the bilinear scoring to phi. theta gets no
// gradient (checkpoints are fixed inputs). Recomputes the routing from the
// given tensors and throws a consistency error if it disagrees with the
// record.
Tensor backprop_scores(const BranchRepr& repr, const Tensor& theta, const Tensor& phi,
                       std::span<const double> upstream);

// -- permutation helpers ----------------------------------------------------

Tensor reorder_filters(const Tensor& filters, const std::vector<std::size_t>& perm);
Tensor reorder_channels(const Tensor& filters, const std::vector<std::size_t>& perm);

// new filters of `layer` (0-based) = old[perm[i]]; when compensate = true
// the following layer's channels (or the dense input columns after the last
// conv) are re-ordered to keep the network function unchanged.
ModelWeights permute_layer_filters(const ArchDescriptor& arch, const ModelWeights& w,
                                   std::size_t layer, const std::vector<std::size_t>& perm,
                                   bool compensate);

// Samples one random filter permutation per conv layer, applies them with
// compensation, and returns the max abs logit deviation between the
// original and permuted network on the probe. Expected ~ 0.
double check_order_chain(const Checkpoint& ck, const Tensor& probe, std::uint64_t seed);

}  // namespace wsk::align
