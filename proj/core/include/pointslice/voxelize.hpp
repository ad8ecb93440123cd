#pragma once

#include <array>
#include <string>
#include <vector>

#include "pointslice/sparse_tensor.hpp"

namespace ps {

struct ConvLayer; // conv.hpp

// Raw LiDAR-style points: (x, y, z) meters plus intensity in [0,1].
struct PointCloud {
    std::vector<float> points; // n * 4, row-major (x, y, z, i)
    std::int32_t frame_id = 0;

    std::int64_t size() const noexcept { return static_cast<std::int64_t>(points.size()) / 4; }
    std::span<const float> point(std::int64_t i) const { return {points.data() + i * 4, 4}; }
};

struct VoxelGridSpec {
    std::array<double, 3> range_min{-75.52, -75.52, -2.0};
    std::array<double, 3> range_max{75.52, 75.52, 4.0};
    std::array<double, 3> voxel_size{0.08, 0.08, 0.15};

    void validate() const;
    // grid dims as (H, W, L) = ceil(extent/size) for (z, y, x)
    std::array<std::int32_t, 3> grid_dims() const;
};

// Collapses the z axis into a single bin (the pillar construction).
VoxelGridSpec pillar_spec(const VoxelGridSpec& spec);

// Number of raw statistics per occupied voxel: mean offsets from the voxel
// center in voxel units (dx, dy, dz), mean intensity, normalized point count.
inline constexpr int kRawVoxelChannels = 5;
inline constexpr int kCountNormCap = 64;

// Bins each cloud into the grid (clouds are batch entries). Points with any
// component outside [range_min, range_max) are dropped; bins are half-open so
// an index never equals the grid dimension. One output row per occupied
// voxel, feature = the 5 raw statistics above, aggregated as per-voxel sum
// then divide so point order cannot perturb results.
SparseTensor voxelize(const std::vector<PointCloud>& clouds, const VoxelGridSpec& spec);

// Fixed 1x1(x1) linear map + ReLU over per-voxel raw statistics. Coordinates
// are untouched: zeroed features do not delete sites.
SparseTensor encode_features(const SparseTensor& raw, const ConvLayer& enc);

// .xyzi: headerless little-endian float32 records of (x, y, z, intensity).
PointCloud read_xyzi(const std::string& path);
void write_xyzi(const std::string& path, const PointCloud& cloud);

} // namespace ps
