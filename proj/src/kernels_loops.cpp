#include "kernels_detail.hpp"

namespace wsk::kernels::detail {

namespace {

// [lo, hi) range of output coords whose input coord o*stride + k - pad
// lands inside [0, extent).
void window(int k, int pad, int stride, int extent, int out_extent, int& lo, int& hi) {
  const int shift = k - pad;
  lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  const int last = extent - 1 - shift;
  hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  lo = std::min(lo, hi);
}

}  // namespace

void conv_forward_filter(const ConvDims& d, const double* in, const double* filters,
                         int og, double* out) {
  const int plane = d.OH * d.OW;
  std::fill(out, out + plane, 0.0);
  for (int ic = 0; ic < d.c; ++ic) {
    const double* ip = in + static_cast<std::size_t>(ic) * d.H * d.W;
    const double* fp = filters + (static_cast<std::size_t>(og) * d.c + ic) * d.kh * d.kw;
    for (int ky = 0; ky < d.kh; ++ky) {
      int oy0, oy1;
      window(ky, d.pad, d.stride, d.H, d.OH, oy0, oy1);
      for (int kx = 0; kx < d.kw; ++kx) {
        int ox0, ox1;
        window(kx, d.pad, d.stride, d.W, d.OW, ox0, ox1);
        const double w = fp[ky * d.kw + kx];
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          const double* irow = ip + iy * d.W + (kx - d.pad);
          double* orow = out + oy * d.OW;
          if (d.stride == 1) {
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += w * irow[ox];
          } else {
            for (int ox = ox0; ox < ox1; ++ox) orow[ox] += w * irow[ox * d.stride];
          }
        }
      }
    }
  }
}

void conv_grad_filters_pair(const ConvDims& d, const double* in, const double* up,
                            int og, int ic, double* df) {
  const double* ip = in + static_cast<std::size_t>(ic) * d.H * d.W;
  const double* upp = up + static_cast<std::size_t>(og) * d.OH * d.OW;
  for (int ky = 0; ky < d.kh; ++ky) {
    int oy0, oy1;
    window(ky, d.pad, d.stride, d.H, d.OH, oy0, oy1);
    for (int kx = 0; kx < d.kw; ++kx) {
      int ox0, ox1;
      window(kx, d.pad, d.stride, d.W, d.OW, ox0, ox1);
      double acc = 0.0;
      for (int oy = oy0; oy < oy1; ++oy) {
        const int iy = oy * d.stride + ky - d.pad;
        const double* irow = ip + iy * d.W + (kx - d.pad);
        const double* urow = upp + oy * d.OW;
        if (d.stride == 1) {
          for (int ox = ox0; ox < ox1; ++ox) acc += urow[ox] * irow[ox];
        } else {
          for (int ox = ox0; ox < ox1; ++ox) acc += urow[ox] * irow[ox * d.stride];
        }
      }
      df[ky * d.kw + kx] = acc;
    }
  }
}

void conv_grad_input_channel(const ConvDims& d, const double* filters, const double* up,
                             int ic, double* dx) {
  std::fill(dx, dx + static_cast<std::size_t>(d.H) * d.W, 0.0);
  for (int og = 0; og < d.g; ++og) {
    const double* fp = filters + (static_cast<std::size_t>(og) * d.c + ic) * d.kh * d.kw;
    const double* upp = up + static_cast<std::size_t>(og) * d.OH * d.OW;
    for (int ky = 0; ky < d.kh; ++ky) {
      int oy0, oy1;
      window(ky, d.pad, d.stride, d.H, d.OH, oy0, oy1);
      for (int kx = 0; kx < d.kw; ++kx) {
        int ox0, ox1;
        window(kx, d.pad, d.stride, d.W, d.OW, ox0, ox1);
        const double w = fp[ky * d.kw + kx];
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          double* drow = dx + iy * d.W + (kx - d.pad);
          const double* urow = upp + oy * d.OW;
          if (d.stride == 1) {
            for (int ox = ox0; ox < ox1; ++ox) drow[ox] += w * urow[ox];
          } else {
            for (int ox = ox0; ox < ox1; ++ox) drow[ox * d.stride] += w * urow[ox];
          }
        }
      }
    }
  }
}

}  // namespace wsk::kernels::detail
