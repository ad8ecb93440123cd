#include "pointslice/conv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>

#include "pointslice/parallel.hpp"

namespace ps {

const char* conv_kind_name(ConvKind k) noexcept {
    switch (k) {
        case ConvKind::submanifold: return "submanifold";
        case ConvKind::strided: return "strided";
        case ConvKind::transposed: return "transposed";
    }
    return "?";
}

void ConvLayer::validate() const {
    const int sd = static_cast<int>(kernel_dims.size());
    if (sd != 2 && sd != 3) raise(Errc::shape_mismatch, name + ": kernel must be 2D or 3D");
    if (stride.size() != kernel_dims.size())
        raise(Errc::shape_mismatch, name + ": stride rank != kernel rank");
    for (int e : kernel_dims)
        if (e < 1) raise(Errc::shape_mismatch, name + ": kernel extent < 1");
    for (int s : stride)
        if (s < 1) raise(Errc::shape_mismatch, name + ": stride < 1");
    if (kind == ConvKind::submanifold) {
        for (int s : stride)
            if (s != 1) raise(Errc::geometry_mismatch, name + ": submanifold requires stride 1");
        for (int e : kernel_dims)
            if (e % 2 == 0) raise(Errc::even_kernel, name + ": submanifold requires odd kernel");
    }
    if (static_cast<std::int64_t>(weights.size()) != weight_count())
        raise(Errc::shape_mismatch, name + ": weight buffer size mismatch");
    if (!bias.empty() && static_cast<int>(bias.size()) != out_channels)
        raise(Errc::shape_mismatch, name + ": bias size mismatch");
    for (float w : weights)
        if (!std::isfinite(w)) raise(Errc::shape_mismatch, name + ": non-finite weight");
}

std::vector<std::int32_t> conv_output_shape(std::span<const std::int32_t> in_shape,
                                            std::span<const int> kernel,
                                            std::span<const int> stride) {
    std::vector<std::int32_t> out(in_shape.size());
    for (std::size_t a = 0; a < in_shape.size(); ++a) {
        const int pad = kernel[a] / 2;
        out[a] = (in_shape[a] + 2 * pad - kernel[a]) / stride[a] + 1;
    }
    return out;
}

namespace {

using CoordIndex = std::unordered_map<std::uint64_t, std::int32_t>;

CoordIndex index_coords(const SparseTensor& t) {
    CoordIndex index;
    index.reserve(static_cast<std::size_t>(t.n_active()) * 2);
    for (std::int64_t i = 0; i < t.n_active(); ++i)
        index.emplace(pack_key(t.coord(i)), static_cast<std::int32_t>(i));
    return index;
}

// decompose linear kernel offset into per-axis offsets (row-major)
void offset_components(int linear, std::span<const int> kernel, std::span<int> out) {
    for (int a = static_cast<int>(kernel.size()) - 1; a >= 0; --a) {
        out[a] = linear % kernel[a];
        linear /= kernel[a];
    }
}

void sort_pairs(Rulebook& rb) {
    for (auto& v : rb.pairs)
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second < b.second : a.first < b.first;
        });
}

} // namespace

Rulebook build_rulebook_subm(const SparseTensor& t, std::span<const int> kernel_dims) {
    const int sd = t.spatial_dims();
    if (static_cast<int>(kernel_dims.size()) != sd)
        raise(Errc::geometry_mismatch, "kernel rank != tensor spatial rank");
    for (int e : kernel_dims)
        if (e % 2 == 0) raise(Errc::even_kernel, "submanifold kernel extents must be odd");

    Rulebook rb;
    rb.ndim = t.ndim();
    rb.n_in = rb.n_out = t.n_active();
    rb.output_coords = t.coords;
    rb.output_shape = t.spatial_shape;
    rb.output_batch_size = t.batch_size;
    rb.output_slice_height = t.slice_height;

    int kvol = 1;
    for (int e : kernel_dims) kvol *= e;
    rb.pairs.resize(static_cast<std::size_t>(kvol));

    const CoordIndex index = index_coords(t);
    // parallel over output sites; per-chunk pair buffers are merged and then
    // sorted, so the result is canonical for any worker count
    const int nchunks = std::max(1, workers());
    std::vector<std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>>> parts(
        static_cast<std::size_t>(nchunks));
    std::atomic<int> next_part{0};
    parallel_for(t.n_active(), [&](std::int64_t lo, std::int64_t hi) {
        auto& local = parts[static_cast<std::size_t>(next_part.fetch_add(1))];
        local.resize(static_cast<std::size_t>(kvol));
        std::vector<int> loff(sd);
        std::vector<std::int32_t> lnb(rb.ndim);
        for (std::int64_t j = lo; j < hi; ++j) {
            const auto c = t.coord(j);
            lnb[0] = c[0];
            for (int o = 0; o < kvol; ++o) {
                offset_components(o, kernel_dims, loff);
                bool in_bounds = true;
                for (int a = 0; a < sd; ++a) {
                    lnb[a + 1] = c[a + 1] + loff[a] - kernel_dims[a] / 2;
                    if (lnb[a + 1] < 0 || lnb[a + 1] >= t.spatial_shape[a]) {
                        in_bounds = false;
                        break;
                    }
                }
                if (!in_bounds) continue;
                const auto it = index.find(pack_key(lnb));
                if (it != index.end())
                    local[static_cast<std::size_t>(o)].emplace_back(it->second,
                                                                    static_cast<std::int32_t>(j));
            }
        }
    });
    for (int o = 0; o < kvol; ++o) {
        std::size_t total = 0;
        for (const auto& p : parts)
            if (static_cast<std::size_t>(o) < p.size()) total += p[o].size();
        rb.pairs[static_cast<std::size_t>(o)].reserve(total);
        for (const auto& p : parts)
            if (static_cast<std::size_t>(o) < p.size())
                rb.pairs[o].insert(rb.pairs[o].end(), p[o].begin(), p[o].end());
    }
    sort_pairs(rb);
    return rb;
}

Rulebook build_rulebook_strided(const SparseTensor& t, std::span<const int> kernel_dims,
                                std::span<const int> stride) {
    const int sd = t.spatial_dims();
    if (static_cast<int>(kernel_dims.size()) != sd || static_cast<int>(stride.size()) != sd)
        raise(Errc::geometry_mismatch, "kernel/stride rank != tensor spatial rank");

    Rulebook rb;
    rb.ndim = t.ndim();
    rb.n_in = t.n_active();
    rb.output_shape = conv_output_shape(t.spatial_shape, kernel_dims, stride);
    rb.output_batch_size = t.batch_size;
    rb.output_slice_height = t.slice_height; // 2D stride leaves the batch folding intact

    int kvol = 1;
    for (int e : kernel_dims) kvol *= e;
    rb.pairs.resize(static_cast<std::size_t>(kvol));

    for (std::int32_t s : rb.output_shape)
        if (s <= 0) { // degenerate grid: nothing can be emitted
            rb.n_out = 0;
            return rb;
        }

    // candidate outputs per (input, offset): j*stride - pad + o == coord(i)
    struct Incidence {
        std::uint64_t key;
        std::int32_t in_row;
        std::int32_t offset;
    };
    std::vector<Incidence> incidences;
    incidences.reserve(static_cast<std::size_t>(t.n_active()) * 4);
    std::vector<int> off(sd);
    std::vector<std::int32_t> out_c(rb.ndim);
    for (std::int64_t i = 0; i < t.n_active(); ++i) {
        const auto c = t.coord(i);
        out_c[0] = c[0];
        for (int o = 0; o < kvol; ++o) {
            offset_components(o, kernel_dims, off);
            bool ok = true;
            for (int a = 0; a < sd; ++a) {
                const int q = c[a + 1] + kernel_dims[a] / 2 - off[a];
                if (q % stride[a] != 0) {
                    ok = false;
                    break;
                }
                const int j = q / stride[a];
                if (j < 0 || j >= rb.output_shape[a]) {
                    ok = false;
                    break;
                }
                out_c[a + 1] = j;
            }
            if (ok)
                incidences.push_back(
                    {pack_key(out_c), static_cast<std::int32_t>(i), static_cast<std::int32_t>(o)});
        }
    }

    // unique sorted keys become output rows (already lexicographic by packing)
    std::vector<std::uint64_t> keys;
    keys.reserve(incidences.size());
    for (const auto& inc : incidences) keys.push_back(inc.key);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    rb.n_out = static_cast<std::int64_t>(keys.size());
    rb.output_coords.resize(keys.size() * static_cast<std::size_t>(rb.ndim));
    CoordIndex row_of;
    row_of.reserve(keys.size() * 2);
    for (std::size_t r = 0; r < keys.size(); ++r) {
        unpack_key(keys[r], rb.ndim,
                   {rb.output_coords.data() + r * rb.ndim, static_cast<std::size_t>(rb.ndim)});
        row_of.emplace(keys[r], static_cast<std::int32_t>(r));
    }
    for (const auto& inc : incidences)
        rb.pairs[static_cast<std::size_t>(inc.offset)].emplace_back(inc.in_row,
                                                                    row_of.at(inc.key));
    sort_pairs(rb);
    return rb;
}

Rulebook build_rulebook_transposed(const SparseTensor& t, std::span<const int> kernel_dims,
                                   std::span<const int> stride, const SparseTensor& paired) {
    const int sd = t.spatial_dims();
    if (static_cast<int>(kernel_dims.size()) != sd || static_cast<int>(stride.size()) != sd)
        raise(Errc::geometry_mismatch, "kernel/stride rank != tensor spatial rank");
    if (paired.spatial_dims() != sd || paired.batch_size != t.batch_size)
        raise(Errc::geometry_mismatch, "paired tensor layout incompatible");
    const auto expect = conv_output_shape(paired.spatial_shape, kernel_dims, stride);
    if (!std::equal(expect.begin(), expect.end(), t.spatial_shape.begin(),
                    t.spatial_shape.end()))
        raise(Errc::geometry_mismatch,
              "input shape is not the strided image of the paired active set");

    Rulebook rb;
    rb.ndim = t.ndim();
    rb.n_in = t.n_active();
    rb.n_out = paired.n_active();
    rb.output_coords = paired.coords;
    rb.output_shape = paired.spatial_shape;
    rb.output_batch_size = paired.batch_size;
    rb.output_slice_height = paired.slice_height;

    int kvol = 1;
    for (int e : kernel_dims) kvol *= e;
    rb.pairs.resize(static_cast<std::size_t>(kvol));

    const CoordIndex target = index_coords(paired);
    std::vector<int> off(sd);
    std::vector<std::int32_t> fine(rb.ndim);
    // coarse site j spreads to fine sites y = j*stride - pad + o
    for (std::int64_t i = 0; i < t.n_active(); ++i) {
        const auto c = t.coord(i);
        fine[0] = c[0];
        for (int o = 0; o < kvol; ++o) {
            offset_components(o, kernel_dims, off);
            bool ok = true;
            for (int a = 0; a < sd; ++a) {
                fine[a + 1] = c[a + 1] * stride[a] - kernel_dims[a] / 2 + off[a];
                if (fine[a + 1] < 0 || fine[a + 1] >= paired.spatial_shape[a]) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            const auto it = target.find(pack_key(fine));
            if (it != target.end())
                rb.pairs[static_cast<std::size_t>(o)].emplace_back(static_cast<std::int32_t>(i),
                                                                   it->second);
        }
    }
    sort_pairs(rb);
    return rb;
}

SparseTensor conv_forward(const SparseTensor& t, const ConvLayer& layer, const Rulebook& rb) {
    layer.validate();
    if (layer.in_channels != t.channels)
        raise(Errc::channel_mismatch, layer.name + ": expects " +
                                          std::to_string(layer.in_channels) + " channels, got " +
                                          std::to_string(t.channels));
    if (rb.n_in != t.n_active() || rb.ndim != t.ndim())
        raise(Errc::geometry_mismatch, layer.name + ": rulebook built for a different tensor");
    if (static_cast<int>(rb.pairs.size()) != layer.kernel_volume())
        raise(Errc::geometry_mismatch, layer.name + ": rulebook kernel volume mismatch");

    const int cin = layer.in_channels;
    const int cout = layer.out_channels;
    const std::int64_t n_out = rb.n_out;

    // flatten pairs into (out, offset, in) triples sorted by output row; the
    // per-offset pair lists are already sorted by output row
    struct Contribution {
        std::int32_t out, offset, in;
    };
    std::vector<Contribution> contribs;
    contribs.reserve(static_cast<std::size_t>(rb.pair_count()));
    for (std::int32_t o = 0; o < static_cast<std::int32_t>(rb.pairs.size()); ++o)
        for (const auto& [in_row, out_row] : rb.pairs[static_cast<std::size_t>(o)])
            contribs.push_back({out_row, o, in_row});
    std::sort(contribs.begin(), contribs.end(), [](const Contribution& a, const Contribution& b) {
        if (a.out != b.out) return a.out < b.out;
        if (a.offset != b.offset) return a.offset < b.offset;
        return a.in < b.in;
    });
    std::vector<std::int64_t> row_begin(static_cast<std::size_t>(n_out) + 1, 0);
    for (const auto& c : contribs) ++row_begin[static_cast<std::size_t>(c.out) + 1];
    for (std::size_t r = 1; r < row_begin.size(); ++r) row_begin[r] += row_begin[r - 1];

    std::vector<float> out_features(static_cast<std::size_t>(n_out) * cout);
    const float* w = layer.weights.data();
    const float* in_f = t.features.data();

    parallel_for(n_out, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> acc(static_cast<std::size_t>(cout));
        for (std::int64_t j = lo; j < hi; ++j) {
            if (layer.bias.empty())
                std::fill(acc.begin(), acc.end(), 0.0);
            else
                for (int c = 0; c < cout; ++c) acc[static_cast<std::size_t>(c)] = layer.bias[c];
            for (std::int64_t p = row_begin[j]; p < row_begin[j + 1]; ++p) {
                const auto& con = contribs[static_cast<std::size_t>(p)];
                const float* wo = w + static_cast<std::int64_t>(con.offset) * cin * cout;
                const float* row = in_f + static_cast<std::int64_t>(con.in) * cin;
                for (int ci = 0; ci < cin; ++ci) {
                    const double v = row[ci];
                    const float* wrow = wo + static_cast<std::int64_t>(ci) * cout;
                    for (int co = 0; co < cout; ++co) acc[static_cast<std::size_t>(co)] += v * wrow[co];
                }
            }
            float* dst = out_features.data() + j * cout;
            for (int c = 0; c < cout; ++c) dst[c] = static_cast<float>(acc[static_cast<std::size_t>(c)]);
        }
    });

    return make_trusted(rb.output_coords, std::move(out_features), cout, rb.output_shape,
                        rb.output_batch_size, rb.output_slice_height);
}

SparseTensor subm_conv(const SparseTensor& t, const ConvLayer& layer) {
    if (layer.kind != ConvKind::submanifold)
        raise(Errc::geometry_mismatch, layer.name + ": not a submanifold layer");
    return conv_forward(t, layer, build_rulebook_subm(t, layer.kernel_dims));
}

SparseTensor strided_conv(const SparseTensor& t, const ConvLayer& layer) {
    if (layer.kind != ConvKind::strided)
        raise(Errc::geometry_mismatch, layer.name + ": not a strided layer");
    return conv_forward(t, layer, build_rulebook_strided(t, layer.kernel_dims, layer.stride));
}

SparseTensor transposed_conv_forward(const SparseTensor& t, const ConvLayer& layer,
                                     const SparseTensor* paired) {
    if (layer.kind != ConvKind::transposed)
        raise(Errc::geometry_mismatch, layer.name + ": not a transposed layer");
    if (paired == nullptr)
        raise(Errc::missing_paired_active_set,
              layer.name + ": no recorded pre-downsample active set");
    return conv_forward(t, layer,
                        build_rulebook_transposed(t, layer.kernel_dims, layer.stride, *paired));
}

SparseTensor pointwise_conv(const SparseTensor& t, const ConvLayer& layer) {
    layer.validate();
    if (layer.kernel_volume() != 1)
        raise(Errc::geometry_mismatch, layer.name + ": pointwise_conv requires a 1x1 kernel");
    if (layer.in_channels != t.channels)
        raise(Errc::channel_mismatch, layer.name + ": expects " +
                                          std::to_string(layer.in_channels) + " channels, got " +
                                          std::to_string(t.channels));
    const int cin = layer.in_channels;
    const int cout = layer.out_channels;
    std::vector<float> out(static_cast<std::size_t>(t.n_active()) * cout);
    const float* w = layer.weights.data();
    parallel_for(t.n_active(), [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> acc(static_cast<std::size_t>(cout));
        for (std::int64_t i = lo; i < hi; ++i) {
            if (layer.bias.empty())
                std::fill(acc.begin(), acc.end(), 0.0);
            else
                for (int c = 0; c < cout; ++c) acc[static_cast<std::size_t>(c)] = layer.bias[c];
            const float* row = t.features.data() + i * cin;
            for (int ci = 0; ci < cin; ++ci) {
                const double v = row[ci];
                const float* wrow = w + static_cast<std::int64_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) acc[static_cast<std::size_t>(co)] += v * wrow[co];
            }
            float* dst = out.data() + i * cout;
            for (int c = 0; c < cout; ++c) dst[c] = static_cast<float>(acc[static_cast<std::size_t>(c)]);
        }
    });
    return make_trusted(t.coords, std::move(out), cout, t.spatial_shape, t.batch_size,
                        t.slice_height);
}

SparseTensor relu(SparseTensor t) {
    for (float& f : t.features) f = f < 0.0f ? 0.0f : f;
    return t;
}

SparseTensor add(const SparseTensor& a, const SparseTensor& b) {
    if (!a.same_layout(b) || a.coords != b.coords)
        raise(Errc::geometry_mismatch, "add requires identical active sets");
    SparseTensor out = a;
    for (std::size_t i = 0; i < out.features.size(); ++i) out.features[i] += b.features[i];
    return out;
}

} // namespace ps
