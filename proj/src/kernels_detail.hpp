#pragma once

// Shared conv loop bodies. serial:: and par:: call the same compiled
// functions (one TU, kernels_loops.cpp) per output slice, so every element
// sees the same instruction stream and reduction order; the two backends
// agree bitwise for any thread count.

#include <algorithm>
#include <string>

#include "wsk/error.hpp"
#include "wsk/tensor.hpp"

namespace wsk::kernels::detail {

struct ConvDims {
  int c, H, W;    // input
  int g, kh, kw;  // filters
  int stride, pad;
  int OH, OW;  // output
};

inline ConvDims conv_dims_checked(const Tensor& input, const Tensor& filters,
                                  int stride, int padding) {
  require(input.rank() == 3, ErrorCode::shape_mismatch,
          "conv2d: input must be (channels,H,W), got " + input.shape_string());
  require(filters.rank() == 4, ErrorCode::shape_mismatch,
          "conv2d: filters must be (filters,channels,h,w), got " + filters.shape_string());
  require(filters.extent(1) == input.extent(0), ErrorCode::shape_mismatch,
          "conv2d: filter channel extent (axis 1 = " + std::to_string(filters.extent(1)) +
              ") does not match input channel extent (axis 0 = " +
              std::to_string(input.extent(0)) + ")");
  require(stride >= 1, ErrorCode::precondition, "conv2d: stride must be >= 1");
  require(padding >= 0, ErrorCode::precondition, "conv2d: padding must be >= 0");
  ConvDims d;
  d.c = static_cast<int>(input.extent(0));
  d.H = static_cast<int>(input.extent(1));
  d.W = static_cast<int>(input.extent(2));
  d.g = static_cast<int>(filters.extent(0));
  d.kh = static_cast<int>(filters.extent(2));
  d.kw = static_cast<int>(filters.extent(3));
  d.stride = stride;
  d.pad = padding;
  d.OH = (d.H + 2 * padding - d.kh) / stride + 1;
  d.OW = (d.W + 2 * padding - d.kw) / stride + 1;
  require(d.H + 2 * padding >= d.kh && d.W + 2 * padding >= d.kw, ErrorCode::shape_mismatch,
          "conv2d: kernel " + filters.shape_string() + " larger than padded input " +
              input.shape_string());
  return d;
}

// out[og] plane of the forward pass. Accumulation order per element:
// channels ascending, then (ky,kx) ascending.
void conv_forward_filter(const ConvDims& d, const double* in, const double* filters,
                         int og, double* out);

// d(filters[og][ic]) block: correlation of upstream[og] with input[ic].
void conv_grad_filters_pair(const ConvDims& d, const double* in, const double* up,
                            int og, int ic, double* df);

// d(input[ic]) plane: upstream scattered back through every filter.
// Accumulation order per element: (og, ky, kx) ascending.
void conv_grad_input_channel(const ConvDims& d, const double* filters, const double* up,
                             int ic, double* dx);

}  // namespace wsk::kernels::detail
