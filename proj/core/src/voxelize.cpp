#include "pointslice/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "pointslice/conv.hpp"

namespace ps {

void VoxelGridSpec::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (!(range_max[a] > range_min[a]))
            raise(Errc::invalid_spec, "range_max must exceed range_min on every axis");
        if (!(voxel_size[a] > 0.0)) raise(Errc::invalid_spec, "voxel_size must be positive");
    }
}

std::array<std::int32_t, 3> VoxelGridSpec::grid_dims() const {
    validate();
    std::array<std::int32_t, 3> dims; // (H, W, L) from (z, y, x)
    const int axis_order[3] = {2, 1, 0};
    for (int i = 0; i < 3; ++i) {
        const int a = axis_order[i];
        dims[i] = static_cast<std::int32_t>(
            std::ceil((range_max[a] - range_min[a]) / voxel_size[a]));
        if (dims[i] < 1) dims[i] = 1;
    }
    return dims;
}

VoxelGridSpec pillar_spec(const VoxelGridSpec& spec) {
    VoxelGridSpec p = spec;
    p.voxel_size[2] = spec.range_max[2] - spec.range_min[2];
    return p;
}

SparseTensor voxelize(const std::vector<PointCloud>& clouds, const VoxelGridSpec& spec) {
    spec.validate();
    if (clouds.empty()) raise(Errc::empty_batch, "voxelize needs at least one cloud");
    const auto dims = spec.grid_dims(); // (H, W, L)

    struct Accum {
        double sum[4] = {0, 0, 0, 0}; // dx, dy, dz, intensity
        std::int64_t count = 0;
    };
    // per-voxel sum then divide: point order cannot perturb the means
    std::unordered_map<std::uint64_t, Accum> bins;

    for (std::size_t b = 0; b < clouds.size(); ++b) {
        const PointCloud& cloud = clouds[b];
        for (std::int64_t i = 0; i < cloud.size(); ++i) {
            const auto p = cloud.point(i);
            for (int k = 0; k < 4; ++k)
                if (!std::isfinite(p[k]))
                    raise(Errc::invalid_spec, "point cloud contains non-finite values");
            std::int32_t bin[3]; // x, y, z bins
            bool keep = true;
            for (int a = 0; a < 3; ++a) {
                if (p[a] < spec.range_min[a] || p[a] >= spec.range_max[a]) {
                    keep = false;
                    break;
                }
                const int dim_a = a == 0 ? dims[2] : (a == 1 ? dims[1] : dims[0]);
                std::int32_t q = static_cast<std::int32_t>(
                    std::floor((p[a] - spec.range_min[a]) / spec.voxel_size[a]));
                if (q >= dim_a) q = dim_a - 1; // fp guard at the upper edge
                if (q < 0) {
                    keep = false;
                    break;
                }
                bin[a] = q;
            }
            if (!keep) continue;
            const std::int32_t coord[4] = {static_cast<std::int32_t>(b), bin[2], bin[1], bin[0]};
            Accum& acc = bins[pack_key(coord)];
            for (int a = 0; a < 3; ++a) {
                const double center =
                    spec.range_min[a] + (bin[a] + 0.5) * spec.voxel_size[a];
                acc.sum[a] += (p[a] - center) / spec.voxel_size[a];
            }
            acc.sum[3] += p[3];
            acc.count += 1;
        }
    }

    std::vector<std::uint64_t> keys;
    keys.reserve(bins.size());
    for (const auto& [k, v] : bins) keys.push_back(k);
    std::sort(keys.begin(), keys.end());

    const double count_denom = std::log1p(static_cast<double>(kCountNormCap));
    std::vector<std::int32_t> coords(keys.size() * 4);
    std::vector<float> features(keys.size() * kRawVoxelChannels);
    for (std::size_t r = 0; r < keys.size(); ++r) {
        unpack_key(keys[r], 4, {coords.data() + r * 4, 4});
        const Accum& acc = bins.at(keys[r]);
        const double n = static_cast<double>(acc.count);
        float* f = features.data() + r * kRawVoxelChannels;
        f[0] = static_cast<float>(acc.sum[0] / n);
        f[1] = static_cast<float>(acc.sum[1] / n);
        f[2] = static_cast<float>(acc.sum[2] / n);
        f[3] = static_cast<float>(acc.sum[3] / n);
        f[4] = static_cast<float>(std::min(1.0, std::log1p(n) / count_denom));
    }
    return make_trusted(std::move(coords), std::move(features), kRawVoxelChannels,
                        {dims[0], dims[1], dims[2]},
                        static_cast<std::int32_t>(clouds.size()));
}

SparseTensor encode_features(const SparseTensor& raw, const ConvLayer& enc) {
    if (enc.kernel_volume() != 1)
        raise(Errc::geometry_mismatch, enc.name + ": encoder kernel must be 1x1(x1)");
    return relu(pointwise_conv(raw, enc));
}

PointCloud read_xyzi(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) raise(Errc::io_error, "cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    const long bytes = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    if (bytes < 0 || bytes % 16 != 0) {
        std::fclose(f);
        raise(Errc::truncated_file, path + ": length is not a multiple of 16 bytes");
    }
    PointCloud cloud;
    cloud.points.resize(static_cast<std::size_t>(bytes) / 4);
    if (bytes > 0 && std::fread(cloud.points.data(), 1, static_cast<std::size_t>(bytes), f) !=
                         static_cast<std::size_t>(bytes)) {
        std::fclose(f);
        raise(Errc::io_error, path + ": short read");
    }
    std::fclose(f);
    for (float v : cloud.points)
        if (!std::isfinite(v)) raise(Errc::truncated_file, path + ": non-finite point component");
    return cloud;
}

void write_xyzi(const std::string& path, const PointCloud& cloud) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) raise(Errc::io_error, "cannot open " + path + " for writing");
    const std::size_t n = cloud.points.size();
    if (n > 0 && std::fwrite(cloud.points.data(), sizeof(float), n, f) != n) {
        std::fclose(f);
        raise(Errc::io_error, path + ": short write");
    }
    std::fclose(f);
}

} // namespace ps
