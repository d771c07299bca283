#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wsk/error.hpp"

namespace wsk {

struct ConvSpec {
  int in_channels = 0;
  int out_filters = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  bool relu = true;

  bool operator==(const ConvSpec&) const = default;
};

// A plain conv chain followed by global average pooling and one dense
// classifier (features = last layer's filter count).
struct ArchDescriptor {
  std::vector<ConvSpec> conv;
  int n_classes = 2;
  int image_channels = 3;
  int image_size = 16;

  bool operator==(const ArchDescriptor&) const = default;

  int feature_dim() const { return conv.empty() ? 0 : conv.back().out_filters; }

  void validate() const {
    require(!conv.empty(), ErrorCode::precondition, "arch: at least one conv layer required");
    require(conv.front().in_channels == image_channels, ErrorCode::precondition,
            "arch: first conv in_channels must equal image channel count (" +
                std::to_string(image_channels) + ")");
    for (std::size_t l = 0; l + 1 < conv.size(); ++l)
      require(conv[l].out_filters == conv[l + 1].in_channels, ErrorCode::precondition,
              "arch: conv layer " + std::to_string(l + 1) + " out_filters (" +
                  std::to_string(conv[l].out_filters) + ") must equal layer " +
                  std::to_string(l + 2) + " in_channels (" +
                  std::to_string(conv[l + 1].in_channels) + ")");
    for (const ConvSpec& s : conv) {
      require(s.out_filters >= 1 && s.kernel_h >= 1 && s.kernel_w >= 1,
              ErrorCode::precondition, "arch: conv extents must be >= 1");
      require(s.stride >= 1 && s.padding >= 0, ErrorCode::precondition,
              "arch: stride >= 1 and padding >= 0 required");
    }
    require(n_classes >= 2, ErrorCode::precondition, "arch: n_classes must be >= 2");
  }
};

// Desk-scale default: three 3x3 conv layers (8, 8, 16 filters, pad 1) on
// 3x16x16 images, GAP, dense to 2 classes.
ArchDescriptor default_arch();

// A smaller two-layer net, handy for quick tests.
ArchDescriptor tiny_arch();

}  // namespace wsk
