#include "pointslice/slice.hpp"

namespace ps {

// Both maps preserve lexicographic row order: b2d = b*H + z is monotone in
// (b, z) because 0 <= z < H. No re-sort needed.

SparseTensor slice(const SparseTensor& t) {
    if (!t.is_3d()) raise(Errc::shape_mismatch, "slice expects a 3D tensor");
    const std::int32_t height = t.spatial_shape[0];
    const std::int64_t n = t.n_active();
    std::vector<std::int32_t> coords(static_cast<std::size_t>(n) * 3);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto c = t.coord(i);
        coords[i * 3 + 0] = c[0] * height + c[1];
        coords[i * 3 + 1] = c[2];
        coords[i * 3 + 2] = c[3];
    }
    return make_trusted(std::move(coords), t.features, t.channels,
                        {t.spatial_shape[1], t.spatial_shape[2]}, t.batch_size * height, height);
}

SparseTensor unslice(const SparseTensor& t) {
    if (!t.is_2d()) raise(Errc::shape_mismatch, "unslice expects a 2D tensor");
    if (!t.slice_height) raise(Errc::missing_slice_height, "tensor has no slice_height");
    const std::int32_t height = *t.slice_height;
    if (t.batch_size % height != 0)
        raise(Errc::indivisible_batch, "batch_size " + std::to_string(t.batch_size) +
                                           " not divisible by slice_height " +
                                           std::to_string(height));
    const std::int64_t n = t.n_active();
    std::vector<std::int32_t> coords(static_cast<std::size_t>(n) * 4);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto c = t.coord(i);
        coords[i * 4 + 0] = c[0] / height;
        coords[i * 4 + 1] = c[0] % height;
        coords[i * 4 + 2] = c[1];
        coords[i * 4 + 3] = c[2];
    }
    return make_trusted(std::move(coords), t.features, t.channels,
                        {height, t.spatial_shape[0], t.spatial_shape[1]}, t.batch_size / height);
}

} // namespace ps
