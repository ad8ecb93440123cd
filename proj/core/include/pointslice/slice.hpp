#pragma once

#include "pointslice/sparse_tensor.hpp"

namespace ps {

// Folds a 3D voxel tensor into batched 2D slices: coordinate (b, z, y, x)
// maps to (b*H + z, y, x) with H the vertical grid extent. Feature rows move
// unchanged and the active-site count is preserved. The output records
// slice_height = H so it can be unfolded later.
SparseTensor slice(const SparseTensor& t);

// Inverse of slice: b = b2d / H, z = b2d % H. Requires slice_height metadata
// and a batch size divisible by it.
SparseTensor unslice(const SparseTensor& t);

} // namespace ps
