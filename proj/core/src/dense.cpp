#include "pointslice/dense.hpp"

#include <string>

namespace ps {

DenseTensor to_dense(const SparseTensor& t, std::int64_t element_cap) {
    DenseTensor a;
    a.shape.push_back(t.batch_size);
    for (std::int32_t s : t.spatial_shape) a.shape.push_back(s);
    a.shape.push_back(t.channels);
    const std::int64_t total = a.size();
    if (total > element_cap)
        raise(Errc::oracle_size_exceeded, std::to_string(total) + " elements exceeds oracle cap " +
                                              std::to_string(element_cap));
    a.data.assign(static_cast<std::size_t>(total), 0.0f);
    const auto st = a.strides();
    const int d = t.ndim();
    for (std::int64_t i = 0; i < t.n_active(); ++i) {
        const auto c = t.coord(i);
        std::int64_t off = 0;
        for (int axis = 0; axis < d; ++axis) off += c[axis] * st[axis];
        const auto f = t.feature(i);
        std::copy(f.begin(), f.end(), a.data.begin() + off);
    }
    return a;
}

SparseTensor from_dense(const DenseTensor& a) {
    const int rank = static_cast<int>(a.shape.size());
    if (rank != 4 && rank != 5)
        raise(Errc::shape_mismatch, "dense array must be batch x spatial... x C with 2 or 3 spatial dims");
    const int d = rank - 1; // coordinate dims
    const int channels = static_cast<int>(a.shape.back());
    const auto st = a.strides();

    std::vector<std::int32_t> coords;
    std::vector<float> features;
    std::vector<std::int32_t> idx(d, 0);
    const std::int64_t sites = channels ? a.size() / channels : 0;
    for (std::int64_t s = 0; s < sites; ++s) {
        std::int64_t off = 0;
        for (int axis = 0; axis < d; ++axis) off += idx[axis] * st[axis];
        const float* row = a.data.data() + off;
        bool nonzero = false;
        for (int c = 0; c < channels; ++c)
            if (row[c] != 0.0f) {
                nonzero = true;
                break;
            }
        if (nonzero) {
            coords.insert(coords.end(), idx.begin(), idx.end());
            features.insert(features.end(), row, row + channels);
        }
        // advance odometer over (b, spatial...)
        for (int axis = d - 1; axis >= 0; --axis) {
            if (++idx[axis] < a.shape[axis]) break;
            idx[axis] = 0;
        }
    }
    std::vector<std::int32_t> spatial(a.shape.begin() + 1, a.shape.end() - 1);
    return make_trusted(std::move(coords), std::move(features), channels, std::move(spatial),
                        static_cast<std::int32_t>(a.shape[0]));
}

} // namespace ps
