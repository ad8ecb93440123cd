#pragma once

#include <vector>

#include "pointslice/conv.hpp"
#include "pointslice/dense.hpp"
#include "pointslice/head.hpp"
#include "pointslice/sparse_tensor.hpp"

namespace ps::oracle {

// Verification-only reference implementations. Everything here computes the
// same quantities as the sparse engine through an independent dense (or
// sequential-clipping) route and is used by tests and the `check`
// subcommand only — never by inference itself.

// Direct nested-loop cross-correlation with pad = kernel/2, matching the
// engine's padding convention. Computes values at every output grid
// position (bias included everywhere).
DenseTensor dense_conv(const DenseTensor& in, const ConvLayer& layer);

// Dense transposed convolution: every input cell spreads W[o]*in to
// out[j*stride - pad + o].
DenseTensor dense_transposed_conv(const DenseTensor& in, const ConvLayer& layer,
                                  std::span<const std::int64_t> out_spatial);

// Keeps only positions present in `sites` (coordinate rows of a sparse
// tensor); zeroes the rest.
DenseTensor mask_to_sites(const DenseTensor& a, const SparseTensor& sites);

// Binary occupancy image of the active set, one channel.
DenseTensor occupancy(const SparseTensor& t);

// Dense binary dilation of an occupancy image by an odd square footprint.
DenseTensor dilate_occupancy(const DenseTensor& occ, int kernel);

// Sutherland–Hodgman sequential polygon clipping; the reference route for
// rotated-box IoU.
double polygon_clip_iou(const BevBox& a, const BevBox& b);

} // namespace ps::oracle
