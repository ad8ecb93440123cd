#include "pointslice/sparse_tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <string>

namespace ps {

namespace {

// Field widths per dimensionality, most-significant first.
constexpr int kBits4[4] = {16, 16, 16, 16};
constexpr int kBits3[3] = {22, 21, 21};

const int* bit_widths(int ndim) {
    if (ndim == 4) return kBits4;
    if (ndim == 3) return kBits3;
    raise(Errc::shape_mismatch, "pack_key supports D=3 or D=4, got D=" + std::to_string(ndim));
}

void validate(const SparseTensor& t) {
    const int d = t.ndim();
    if (d != 3 && d != 4)
        raise(Errc::shape_mismatch, "tensor must have 2 or 3 spatial dims");
    if (t.batch_size <= 0) raise(Errc::shape_mismatch, "batch_size must be positive");
    for (std::int32_t s : t.spatial_shape)
        if (s <= 0) raise(Errc::shape_mismatch, "spatial_shape entries must be positive");
    if (t.channels < 0) raise(Errc::shape_mismatch, "negative channel count");
    if (t.coords.size() % d != 0)
        raise(Errc::shape_mismatch, "coords size not a multiple of ndim");
    const std::int64_t n = static_cast<std::int64_t>(t.coords.size()) / d;
    if (static_cast<std::int64_t>(t.features.size()) != n * t.channels)
        raise(Errc::shape_mismatch, "features row count (" +
                                        std::to_string(t.channels ? t.features.size() / t.channels : 0) +
                                        ") != coords row count (" + std::to_string(n) + ")");
    if (t.slice_height) {
        if (*t.slice_height <= 0) raise(Errc::shape_mismatch, "slice_height must be positive");
        if (d != 3) raise(Errc::shape_mismatch, "slice_height only valid on 2D tensors");
        if (t.batch_size % *t.slice_height != 0)
            raise(Errc::indivisible_batch, "batch_size " + std::to_string(t.batch_size) +
                                               " not divisible by slice_height " +
                                               std::to_string(*t.slice_height));
    }
    for (std::int64_t i = 0; i < n; ++i) {
        const auto c = t.coord(i);
        if (c[0] < 0 || c[0] >= t.batch_size)
            raise(Errc::out_of_bounds, "row " + std::to_string(i) + ": batch index " +
                                           std::to_string(c[0]) + " outside [0, " +
                                           std::to_string(t.batch_size) + ")");
        for (int a = 1; a < d; ++a) {
            if (c[a] < 0 || c[a] >= t.spatial_shape[a - 1])
                raise(Errc::out_of_bounds, "row " + std::to_string(i) + ": axis " +
                                               std::to_string(a) + " coordinate " +
                                               std::to_string(c[a]) + " outside [0, " +
                                               std::to_string(t.spatial_shape[a - 1]) + ")");
        }
    }
    for (std::int64_t i = 1; i < n; ++i) {
        const auto prev = t.coord(i - 1);
        const auto cur = t.coord(i);
        if (std::equal(prev.begin(), prev.end(), cur.begin()))
            raise(Errc::duplicate_coordinate,
                  "duplicate coordinate at sorted row " + std::to_string(i));
    }
}

} // namespace

std::uint64_t pack_key(std::span<const std::int32_t> coord) {
    const int d = static_cast<int>(coord.size());
    const int* bits = bit_widths(d);
    std::uint64_t key = 0;
    for (int a = 0; a < d; ++a) {
        const std::int64_t limit = std::int64_t{1} << bits[a];
        if (coord[a] < 0 || coord[a] >= limit)
            raise(Errc::component_overflow, "coordinate component " + std::to_string(coord[a]) +
                                                " exceeds " + std::to_string(bits[a]) +
                                                "-bit field");
        key = (key << bits[a]) | static_cast<std::uint64_t>(coord[a]);
    }
    return key;
}

void unpack_key(std::uint64_t key, int ndim, std::span<std::int32_t> out) {
    const int* bits = bit_widths(ndim);
    for (int a = ndim - 1; a >= 0; --a) {
        const std::uint64_t mask = (std::uint64_t{1} << bits[a]) - 1;
        out[a] = static_cast<std::int32_t>(key & mask);
        key >>= bits[a];
    }
}

void canonicalize(std::vector<std::int32_t>& coords, std::vector<float>& features, int ndim,
                  int channels) {
    const std::int64_t n = ndim ? static_cast<std::int64_t>(coords.size()) / ndim : 0;
    if (n <= 1) return;
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::int32_t* c = coords.data();
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return std::lexicographical_compare(c + a * ndim, c + (a + 1) * ndim, c + b * ndim,
                                            c + (b + 1) * ndim);
    });
    bool already = true;
    for (std::int64_t i = 0; i < n; ++i)
        if (order[i] != i) {
            already = false;
            break;
        }
    if (already) return;
    std::vector<std::int32_t> nc(coords.size());
    std::vector<float> nf(features.size());
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(c + order[i] * ndim, ndim, nc.data() + i * ndim);
        std::copy_n(features.data() + order[i] * channels, channels, nf.data() + i * channels);
    }
    coords = std::move(nc);
    features = std::move(nf);
}

SparseTensor from_coords(std::vector<std::int32_t> coords, std::vector<float> features,
                         int channels, std::vector<std::int32_t> spatial_shape,
                         std::int32_t batch_size, std::optional<std::int32_t> slice_height) {
    SparseTensor t;
    t.spatial_shape = std::move(spatial_shape);
    t.batch_size = batch_size;
    t.channels = channels;
    t.slice_height = slice_height;
    const int d = t.ndim();
    if (d != 3 && d != 4) raise(Errc::shape_mismatch, "expected 2 or 3 spatial dims");
    if (coords.size() % d != 0) raise(Errc::shape_mismatch, "coords size not a multiple of ndim");
    canonicalize(coords, features, d, channels);
    t.coords = std::move(coords);
    t.features = std::move(features);
    validate(t);
    return t;
}

SparseTensor make_trusted(std::vector<std::int32_t> coords, std::vector<float> features,
                          int channels, std::vector<std::int32_t> spatial_shape,
                          std::int32_t batch_size, std::optional<std::int32_t> slice_height) {
    SparseTensor t;
    t.coords = std::move(coords);
    t.features = std::move(features);
    t.spatial_shape = std::move(spatial_shape);
    t.batch_size = batch_size;
    t.channels = channels;
    t.slice_height = slice_height;
#ifndef NDEBUG
    validate(t);
#endif
    return t;
}

bool tensors_equal(const SparseTensor& a, const SparseTensor& b) {
    return a.same_layout(b) && a.coords == b.coords && a.features == b.features;
}

float max_feature_diff(const SparseTensor& a, const SparseTensor& b) {
    if (a.coords != b.coords || a.channels != b.channels)
        raise(Errc::shape_mismatch, "max_feature_diff requires identical coordinate sets");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.features.size(); ++i)
        m = std::max(m, std::fabs(a.features[i] - b.features[i]));
    return m;
}

} // namespace ps
