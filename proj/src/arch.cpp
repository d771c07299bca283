#include "wsk/arch.hpp"

namespace wsk {

ArchDescriptor default_arch() {
  ArchDescriptor a;
  a.conv = {
      {3, 8, 3, 3, 1, 1, true},
      {8, 8, 3, 3, 1, 1, true},
      {8, 16, 3, 3, 1, 1, true},
  };
  a.n_classes = 2;
  a.image_channels = 3;
  a.image_size = 16;
  return a;
}

ArchDescriptor tiny_arch() {
  ArchDescriptor a;
  a.conv = {
      {3, 4, 3, 3, 1, 1, true},
      {4, 8, 3, 3, 1, 1, true},
  };
  a.n_classes = 2;
  a.image_channels = 3;
  a.image_size = 16;
  return a;
}

}  // namespace wsk
