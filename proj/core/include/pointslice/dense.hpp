#pragma once

#include <cstdint>
#include <vector>

#include "pointslice/sparse_tensor.hpp"

namespace ps {

// Row-major dense array with layout batch x spatial... x C. Only used by
// oracles and tests; production code stays sparse.
struct DenseTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t size() const noexcept {
        std::int64_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

    // strides for the current shape, innermost last
    std::vector<std::int64_t> strides() const {
        std::vector<std::int64_t> st(shape.size(), 1);
        for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
            st[i] = st[i + 1] * shape[i + 1];
        return st;
    }
};

inline constexpr std::int64_t kDefaultOracleCap = std::int64_t{1} << 24;

// Zero everywhere except active sites, which carry their feature rows.
DenseTensor to_dense(const SparseTensor& t, std::int64_t element_cap = kDefaultOracleCap);

// Active set = positions whose feature row is not all-zero. slice_height is
// not recoverable from a dense array and is left unset.
SparseTensor from_dense(const DenseTensor& a);

} // namespace ps
