#include "kernels_detail.hpp"
#include "wsk/kernels.hpp"

namespace wsk::kernels::par {

using detail::ConvDims;

Tensor conv2d(const Tensor& input, const Tensor& filters, int stride, int padding) {
  const ConvDims d = detail::conv_dims_checked(input, filters, stride, padding);
  Tensor out({static_cast<std::size_t>(d.g), static_cast<std::size_t>(d.OH),
              static_cast<std::size_t>(d.OW)});
#pragma omp parallel for schedule(static)
  for (int og = 0; og < d.g; ++og)
    detail::conv_forward_filter(d, input.data(), filters.data(), og,
                                out.data() + static_cast<std::size_t>(og) * d.OH * d.OW);
  ensure_finite(out, "conv2d");
  return out;
}

ConvGrads conv2d_grad(const Tensor& input, const Tensor& filters,
                      const Tensor& upstream, int stride, int padding,
                      bool need_input_grad) {
  const ConvDims d = detail::conv_dims_checked(input, filters, stride, padding);
  require(upstream.rank() == 3 && static_cast<int>(upstream.extent(0)) == d.g &&
              static_cast<int>(upstream.extent(1)) == d.OH &&
              static_cast<int>(upstream.extent(2)) == d.OW,
          ErrorCode::shape_mismatch,
          "conv2d_grad: upstream " + upstream.shape_string() +
              " does not match conv output shape");
  ConvGrads grads;
  grads.filters = Tensor(filters.shape());
  const int block = d.kh * d.kw;
  const int pairs = d.g * d.c;
#pragma omp parallel for schedule(static)
  for (int pair = 0; pair < pairs; ++pair)
    detail::conv_grad_filters_pair(d, input.data(), upstream.data(),
                                   pair / d.c, pair % d.c,
                                   grads.filters.data() + static_cast<std::size_t>(pair) * block);
  ensure_finite(grads.filters, "conv2d_grad");
  if (need_input_grad) {
    grads.input = Tensor(input.shape());
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < d.c; ++ic)
      detail::conv_grad_input_channel(
          d, filters.data(), upstream.data(), ic,
          grads.input.data() + static_cast<std::size_t>(ic) * d.H * d.W);
    ensure_finite(grads.input, "conv2d_grad");
  }
  return grads;
}

}  // namespace wsk::kernels::par
