#include "wsk/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace wsk::kernels {

namespace {

Backend initial_backend() {
  const char* env = std::getenv("WSK_KERNELS");
  if (env && std::strcmp(env, "serial") == 0) return Backend::serial;
  return Backend::parallel;
}

std::atomic<int>& backend_slot() {
  static std::atomic<int> slot{static_cast<int>(initial_backend())};
  return slot;
}

}  // namespace

Backend backend() {
  return static_cast<Backend>(backend_slot().load(std::memory_order_relaxed));
}

void set_backend(Backend b) {
  backend_slot().store(static_cast<int>(b), std::memory_order_relaxed);
}

void ensure_finite(const Tensor& t, const char* op) {
  // NaN or Inf anywhere makes the total non-finite; the cheap sum guards
  // the common path and the precise scan only runs on suspicion.
  double total = 0.0;
  const double* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) total += p[i];
  if (std::isfinite(total)) return;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(p[i]))
      throw Error(ErrorCode::contract_violation,
                  std::string(op) + ": non-finite element at flat index " + std::to_string(i));
  }
}

Tensor conv2d(const Tensor& input, const Tensor& filters, int stride, int padding) {
  return backend() == Backend::serial ? serial::conv2d(input, filters, stride, padding)
                                      : par::conv2d(input, filters, stride, padding);
}

ConvGrads conv2d_grad(const Tensor& input, const Tensor& filters, const Tensor& upstream,
                      int stride, int padding, bool need_input_grad) {
  return backend() == Backend::serial
             ? serial::conv2d_grad(input, filters, upstream, stride, padding, need_input_grad)
             : par::conv2d_grad(input, filters, upstream, stride, padding, need_input_grad);
}

double frobenius_inner(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorCode::shape_mismatch,
          "frobenius_inner: shapes " + a.shape_string() + " and " + b.shape_string() +
              " differ");
  double acc = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
  require(std::isfinite(acc), ErrorCode::contract_violation,
          "frobenius_inner: non-finite result");
  return acc;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require(input.rank() == 1 && weights.rank() == 2 && bias.rank() == 1,
          ErrorCode::shape_mismatch, "dense: expected vector, matrix, vector");
  const std::size_t n = weights.extent(0);
  const std::size_t m = weights.extent(1);
  require(input.extent(0) == m, ErrorCode::shape_mismatch,
          "dense: input length " + std::to_string(input.extent(0)) +
              " does not match weight columns " + std::to_string(m));
  require(bias.extent(0) == n, ErrorCode::shape_mismatch,
          "dense: bias length " + std::to_string(bias.extent(0)) +
              " does not match weight rows " + std::to_string(n));
  Tensor out({n});
  const double* x = input.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = weights.data() + i * m;
    double acc = bias[i];
    for (std::size_t j = 0; j < m; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  ensure_finite(out, "dense");
  return out;
}

DenseGrads dense_grad(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  const std::size_t n = weights.extent(0);
  const std::size_t m = weights.extent(1);
  require(input.rank() == 1 && input.extent(0) == m, ErrorCode::shape_mismatch,
          "dense_grad: input does not match weights");
  require(upstream.rank() == 1 && upstream.extent(0) == n, ErrorCode::shape_mismatch,
          "dense_grad: upstream does not match weight rows");
  DenseGrads g;
  g.input = Tensor({m});
  g.weights = Tensor({n, m});
  g.bias = Tensor({n});
  const double* x = input.data();
  const double* up = upstream.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = up[i];
    const double* wrow = weights.data() + i * m;
    double* dwrow = g.weights.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      dwrow[j] = u * x[j];
      g.input[j] += u * wrow[j];
    }
    g.bias[i] = u;
  }
  ensure_finite(g.input, "dense_grad");
  ensure_finite(g.weights, "dense_grad");
  return g;
}

Tensor relu(const Tensor& t) {
  Tensor out(t.shape());
  const double* p = t.data();
  double* q = out.data();
  for (std::size_t i = 0; i < t.size(); ++i) q[i] = p[i] > 0.0 ? p[i] : 0.0;
  ensure_finite(out, "relu");
  return out;
}

Tensor relu_grad(const Tensor& pre, const Tensor& upstream) {
  require(pre.same_shape(upstream), ErrorCode::shape_mismatch,
          "relu_grad: shapes differ");
  Tensor out(pre.shape());
  const double* p = pre.data();
  const double* u = upstream.data();
  double* q = out.data();
  for (std::size_t i = 0; i < pre.size(); ++i) q[i] = p[i] > 0.0 ? u[i] : 0.0;
  ensure_finite(out, "relu_grad");
  return out;
}

Tensor global_avg_pool(const Tensor& t) {
  require(t.rank() == 3, ErrorCode::shape_mismatch,
          "global_avg_pool: expected (channels,H,W), got " + t.shape_string());
  const std::size_t c = t.extent(0);
  const std::size_t plane = t.extent(1) * t.extent(2);
  Tensor out({c});
  for (std::size_t ic = 0; ic < c; ++ic) {
    const double* p = t.data() + ic * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[ic] = acc / static_cast<double>(plane);
  }
  ensure_finite(out, "global_avg_pool");
  return out;
}

Tensor global_avg_pool_grad(const Tensor& upstream, std::size_t height, std::size_t width) {
  require(upstream.rank() == 1, ErrorCode::shape_mismatch,
          "global_avg_pool_grad: upstream must be a vector");
  const std::size_t c = upstream.extent(0);
  Tensor out({c, height, width});
  const double scale = 1.0 / static_cast<double>(height * width);
  for (std::size_t ic = 0; ic < c; ++ic) {
    const double v = upstream[ic] * scale;
    double* p = out.data() + ic * height * width;
    for (std::size_t i = 0; i < height * width; ++i) p[i] = v;
  }
  ensure_finite(out, "global_avg_pool_grad");
  return out;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 1 && logits.size() >= 1, ErrorCode::shape_mismatch,
          "softmax: expected a non-empty vector");
  Tensor out(logits.shape());
  const double* z = logits.data();
  double zmax = z[0];
  for (std::size_t i = 1; i < logits.size(); ++i) zmax = std::max(zmax, z[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(z[i] - zmax);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
  ensure_finite(out, "softmax");
  return out;
}

double cross_entropy(const Tensor& probs, const Tensor& one_hot) {
  require(probs.same_shape(one_hot), ErrorCode::shape_mismatch,
          "cross_entropy: shapes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    require(probs[i] >= 0.0, ErrorCode::contract_violation,
            "cross_entropy: negative probability");
    sum += probs[i];
  }
  require(std::abs(sum - 1.0) <= 1e-6, ErrorCode::contract_violation,
          "cross_entropy: probs sum to " + std::to_string(sum) + ", expected 1");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (one_hot[i] != 0.0) loss -= one_hot[i] * std::log(probs[i]);
  return loss;
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, const Tensor& one_hot) {
  require(probs.same_shape(one_hot), ErrorCode::shape_mismatch,
          "softmax_cross_entropy_grad: shapes differ");
  Tensor out(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] - one_hot[i];
  ensure_finite(out, "softmax_cross_entropy_grad");
  return out;
}

}  // namespace wsk::kernels
