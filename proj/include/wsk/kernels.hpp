#pragma once

#include "wsk/tensor.hpp"

namespace wsk::kernels {

// The hot kernels (conv2d forward/backward) exist twice: a plain serial
// reference in kernels::serial and an OpenMP version in kernels::par.
// Both compute every output element with the same per-element reduction
// order, so their results are bitwise identical for any thread count;
// the parity tests and the bench target rely on that.
enum class Backend { serial, parallel };

Backend backend();
void set_backend(Backend b);

struct ConvGrads {
  Tensor input;    // same shape as the forward input
  Tensor filters;  // same shape as the filters
};

// Cross-correlation (no kernel flip): output channel g is input correlated
// with filter g. Output H' = (H + 2*padding - h) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& filters, int stride, int padding);

// Exact analytic gradients of conv2d contracted with upstream. Pass
// need_input_grad = false to skip the input gradient (first layer).
ConvGrads conv2d_grad(const Tensor& input, const Tensor& filters,
                      const Tensor& upstream, int stride, int padding,
                      bool need_input_grad = true);

double frobenius_inner(const Tensor& a, const Tensor& b);

// Dense tail ops. weights is (n_out, n_in) row-major.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_grad(const Tensor& input, const Tensor& weights, const Tensor& upstream);

Tensor relu(const Tensor& t);
// pre = the pre-activation values the forward pass saw.
Tensor relu_grad(const Tensor& pre, const Tensor& upstream);

Tensor global_avg_pool(const Tensor& t);  // (c,H,W) -> (c)
Tensor global_avg_pool_grad(const Tensor& upstream, std::size_t height, std::size_t width);

Tensor softmax(const Tensor& logits);
// probs must sum to 1 within 1e-6. Zero-probability terms with zero target
// weight contribute nothing.
double cross_entropy(const Tensor& probs, const Tensor& one_hot);
// d(cross_entropy(softmax(z), y))/dz = probs - y.
Tensor softmax_cross_entropy_grad(const Tensor& probs, const Tensor& one_hot);

namespace serial {
Tensor conv2d(const Tensor& input, const Tensor& filters, int stride, int padding);
ConvGrads conv2d_grad(const Tensor& input, const Tensor& filters,
                      const Tensor& upstream, int stride, int padding,
                      bool need_input_grad);
}  // namespace serial

namespace par {
Tensor conv2d(const Tensor& input, const Tensor& filters, int stride, int padding);
ConvGrads conv2d_grad(const Tensor& input, const Tensor& filters,
                      const Tensor& upstream, int stride, int padding,
                      bool need_input_grad);
}  // namespace par

// Throws if any element is non-finite. All public kernels call this on
// their outputs to uphold the tensor finiteness invariant.
void ensure_finite(const Tensor& t, const char* op);

}  // namespace wsk::kernels
