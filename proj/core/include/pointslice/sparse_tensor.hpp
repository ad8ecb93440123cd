#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pointslice/error.hpp"

namespace ps {

// COO sparse feature tensor, the currency of every stage in the pipeline.
//
// Coordinate layout is fixed everywhere in this codebase:
//   3D tensors: D=4 rows of (b, z, y, x), spatial_shape = (H, W, L)
//   2D tensors: D=3 rows of (b2d, y, x), spatial_shape = (W, L)
// z indexes the vertical grid axis (extent H), y the W axis, x the L axis.
//
// Invariants, enforced by from_coords and preserved by every operation:
//   - coordinate rows are unique and lexicographically sorted
//   - every coordinate lies in [0, batch_size) x [0, shape_0) x ...
//   - features has n_active rows of `channels` values
//   - slice_height is present exactly for slice tensors, and then divides
//     batch_size
struct SparseTensor {
    std::vector<std::int32_t> coords;   // n_active * ndim, row-major
    std::vector<float> features;        // n_active * channels, row-major
    std::vector<std::int32_t> spatial_shape;
    std::int32_t batch_size = 0;
    std::int32_t channels = 0;
    std::optional<std::int32_t> slice_height;

    int spatial_dims() const noexcept { return static_cast<int>(spatial_shape.size()); }
    int ndim() const noexcept { return spatial_dims() + 1; }
    std::int64_t n_active() const noexcept {
        return ndim() == 0 ? 0 : static_cast<std::int64_t>(coords.size()) / ndim();
    }
    bool is_2d() const noexcept { return spatial_dims() == 2; }
    bool is_3d() const noexcept { return spatial_dims() == 3; }

    std::span<const std::int32_t> coord(std::int64_t i) const {
        return {coords.data() + i * ndim(), static_cast<std::size_t>(ndim())};
    }
    std::span<const float> feature(std::int64_t i) const {
        return {features.data() + i * channels, static_cast<std::size_t>(channels)};
    }
    std::span<float> feature(std::int64_t i) {
        return {features.data() + i * channels, static_cast<std::size_t>(channels)};
    }

    std::size_t feature_bytes() const noexcept { return features.size() * sizeof(float); }

    bool same_layout(const SparseTensor& o) const noexcept {
        return spatial_shape == o.spatial_shape && batch_size == o.batch_size &&
               channels == o.channels && slice_height == o.slice_height;
    }
};

// Validating constructor. Rejects shape mismatches, out-of-bounds rows and
// duplicates (duplicates are a caller bug here; merging is the voxelizer's
// job). Rows are sorted into canonical lexicographic order.
SparseTensor from_coords(std::vector<std::int32_t> coords, std::vector<float> features,
                         int channels, std::vector<std::int32_t> spatial_shape,
                         std::int32_t batch_size,
                         std::optional<std::int32_t> slice_height = std::nullopt);

// Trusted constructor for internal call sites that produce valid tensors by
// construction. Full validation only in debug builds.
SparseTensor make_trusted(std::vector<std::int32_t> coords, std::vector<float> features,
                          int channels, std::vector<std::int32_t> spatial_shape,
                          std::int32_t batch_size,
                          std::optional<std::int32_t> slice_height = std::nullopt);

// 64-bit coordinate keys. Bit budgets: (b,z,y,x) get 16 bits each for D=4;
// (b2d,y,x) get 22/21/21 for D=3 (the folded batch b2d = b*H + z needs the
// widest field). Packing is order-preserving: sorting keys sorts coordinates
// lexicographically.
std::uint64_t pack_key(std::span<const std::int32_t> coord);
void unpack_key(std::uint64_t key, int ndim, std::span<std::int32_t> out);

// Sorts rows lexicographically by coordinate, carrying feature rows along.
void canonicalize(std::vector<std::int32_t>& coords, std::vector<float>& features, int ndim,
                  int channels);

// Exact equality: same layout, same coordinate rows, bit-identical features.
bool tensors_equal(const SparseTensor& a, const SparseTensor& b);

// Max absolute feature difference over matched rows; requires identical
// coordinate sets.
float max_feature_diff(const SparseTensor& a, const SparseTensor& b);

} // namespace ps
