#pragma once

#include <string>

#include "svd/tensor.hpp"

namespace svd {

// Sparse voxel container, little-endian:
//   "SVX1" | version u32 | B,T,H,W u32 | C u32 | M u64 |
//   coords M x (i32 batch,t,y,x) | features M x C f32 | CRC32 of payload
// Round-trips bitwise.
void write_container(const SparseTensor3D& tensor, const std::string& path);
SparseTensor3D read_container(const std::string& path);

inline constexpr uint32_t kContainerVersion = 1;

} // namespace svd
