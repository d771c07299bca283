#include "wsk/model.hpp"

#include <cmath>

namespace wsk {

void ModelWeights::validate_against(const ArchDescriptor& arch) const {
  require(conv.size() == arch.conv.size(), ErrorCode::shape_mismatch,
          "weights: conv layer count " + std::to_string(conv.size()) +
              " does not match arch (" + std::to_string(arch.conv.size()) + ")");
  for (std::size_t l = 0; l < conv.size(); ++l) {
    const ConvSpec& s = arch.conv[l];
    const std::vector<std::size_t> want{
        static_cast<std::size_t>(s.out_filters), static_cast<std::size_t>(s.in_channels),
        static_cast<std::size_t>(s.kernel_h), static_cast<std::size_t>(s.kernel_w)};
    require(conv[l].shape() == want, ErrorCode::shape_mismatch,
            "weights: conv layer " + std::to_string(l + 1) + " shape " +
                conv[l].shape_string() + " does not match arch");
  }
  require(fc_weight.rank() == 2 &&
              fc_weight.extent(0) == static_cast<std::size_t>(arch.n_classes) &&
              fc_weight.extent(1) == static_cast<std::size_t>(arch.feature_dim()),
          ErrorCode::shape_mismatch, "weights: dense weight shape mismatch");
  require(fc_bias.rank() == 1 &&
              fc_bias.extent(0) == static_cast<std::size_t>(arch.n_classes),
          ErrorCode::shape_mismatch, "weights: dense bias shape mismatch");
}

ModelWeights init_weights(const ArchDescriptor& arch, Rng& rng) {
  arch.validate();
  ModelWeights w;
  for (const ConvSpec& s : arch.conv) {
    Tensor t({static_cast<std::size_t>(s.out_filters), static_cast<std::size_t>(s.in_channels),
              static_cast<std::size_t>(s.kernel_h), static_cast<std::size_t>(s.kernel_w)});
    const double std = 1.0 / std::sqrt(static_cast<double>(s.in_channels) * s.kernel_h * s.kernel_w);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
    w.conv.push_back(std::move(t));
  }
  const std::size_t feat = static_cast<std::size_t>(arch.feature_dim());
  w.fc_weight = Tensor({static_cast<std::size_t>(arch.n_classes), feat});
  const double std = 1.0 / std::sqrt(static_cast<double>(feat));
  for (std::size_t i = 0; i < w.fc_weight.size(); ++i) w.fc_weight[i] = rng.normal(0.0, std);
  w.fc_bias = Tensor({static_cast<std::size_t>(arch.n_classes)});
  return w;
}

Activations forward_full(const ArchDescriptor& arch, const ModelWeights& w, const Tensor& image) {
  w.validate_against(arch);
  Activations acts;
  acts.input = image;
  Tensor x = image;
  for (std::size_t l = 0; l < arch.conv.size(); ++l) {
    const ConvSpec& s = arch.conv[l];
    Tensor pre = kernels::conv2d(x, w.conv[l], s.stride, s.padding);
    Tensor post = s.relu ? kernels::relu(pre) : pre;
    acts.pre.push_back(std::move(pre));
    acts.post.push_back(post);
    x = std::move(post);
  }
  acts.features = kernels::global_avg_pool(x);
  acts.logits = kernels::dense(acts.features, w.fc_weight, w.fc_bias);
  return acts;
}

Tensor forward_logits(const ArchDescriptor& arch, const ModelWeights& w, const Tensor& image) {
  Tensor x = image;
  for (std::size_t l = 0; l < arch.conv.size(); ++l) {
    const ConvSpec& s = arch.conv[l];
    x = kernels::conv2d(x, w.conv[l], s.stride, s.padding);
    if (s.relu) x = kernels::relu(x);
  }
  return kernels::dense(kernels::global_avg_pool(x), w.fc_weight, w.fc_bias);
}

Tensor gap_features(const ArchDescriptor& arch, const ModelWeights& w, const Tensor& image) {
  Tensor x = image;
  for (std::size_t l = 0; l < arch.conv.size(); ++l) {
    const ConvSpec& s = arch.conv[l];
    x = kernels::conv2d(x, w.conv[l], s.stride, s.padding);
    if (s.relu) x = kernels::relu(x);
  }
  return kernels::global_avg_pool(x);
}

WeightGrads backward(const ArchDescriptor& arch, const ModelWeights& w,
                     const Activations& acts, const Tensor& probs, const Tensor& one_hot) {
  WeightGrads g;
  g.conv.resize(arch.conv.size());

  const Tensor dlogits = kernels::softmax_cross_entropy_grad(probs, one_hot);
  kernels::DenseGrads dg = kernels::dense_grad(acts.features, w.fc_weight, dlogits);
  g.fc_weight = std::move(dg.weights);
  g.fc_bias = std::move(dg.bias);

  const Tensor& last = acts.post.back();
  Tensor dx = kernels::global_avg_pool_grad(dg.input, last.extent(1), last.extent(2));
  for (std::size_t l = arch.conv.size(); l-- > 0;) {
    const ConvSpec& s = arch.conv[l];
    if (s.relu) dx = kernels::relu_grad(acts.pre[l], dx);
    const Tensor& layer_in = l == 0 ? acts.input : acts.post[l - 1];
    kernels::ConvGrads cg = kernels::conv2d_grad(layer_in, w.conv[l], dx, s.stride,
                                                 s.padding, /*need_input_grad=*/l > 0);
    g.conv[l] = std::move(cg.filters);
    if (l > 0) dx = std::move(cg.input);
  }
  return g;
}

}  // namespace wsk
