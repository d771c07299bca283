#pragma once

#include <vector>

#include "wsk/arch.hpp"
#include "wsk/kernels.hpp"
#include "wsk/rng.hpp"
#include "wsk/tensor.hpp"

namespace wsk {

// Weights of a first-order net: one filter tensor per conv layer plus the
// dense tail. Conv layers carry no bias (alignment works on filter tensors
// alone); the tail has weight and bias.
struct ModelWeights {
  std::vector<Tensor> conv;  // (out_filters, in_channels, kh, kw) each
  Tensor fc_weight;          // (n_classes, feature_dim)
  Tensor fc_bias;            // (n_classes)

  void validate_against(const ArchDescriptor& arch) const;
};

struct Activations {
  Tensor input;
  std::vector<Tensor> pre;   // conv outputs before activation
  std::vector<Tensor> post;  // after activation (== pre when the layer has none)
  Tensor features;           // global average pool output
  Tensor logits;
};

// Gaussian init, std 1/sqrt(fan_in) per tensor; biases zero.
ModelWeights init_weights(const ArchDescriptor& arch, Rng& rng);

Activations forward_full(const ArchDescriptor& arch, const ModelWeights& w, const Tensor& image);
Tensor forward_logits(const ArchDescriptor& arch, const ModelWeights& w, const Tensor& image);
Tensor gap_features(const ArchDescriptor& arch, const ModelWeights& w, const Tensor& image);

struct WeightGrads {
  std::vector<Tensor> conv;
  Tensor fc_weight;
  Tensor fc_bias;
};

// Backward pass for softmax cross-entropy on one image. probs = softmax(logits).
WeightGrads backward(const ArchDescriptor& arch, const ModelWeights& w,
                     const Activations& acts, const Tensor& probs, const Tensor& one_hot);

}  // namespace wsk
