#include "pointslice/blocks.hpp"

#include <algorithm>
#include <unordered_map>

#include "pointslice/slice.hpp"
#include "pointslice/weights.hpp"

namespace ps {

void BackboneConfig::validate() const {
    if (stem_block_count < 1) raise(Errc::invalid_spec, "stem_block_count must be >= 1");
    if (edb_count < 0) raise(Errc::invalid_spec, "edb_count must be >= 0");
    if (kernel_size != 3 && kernel_size != 5)
        raise(Errc::invalid_spec, "kernel_size must be 3 or 5");
    if (afd_kernel < 3 || afd_kernel % 2 == 0)
        raise(Errc::invalid_spec, "afd_kernel must be odd and >= 3");
    int prev = 0;
    for (int p : sin_positions) {
        if (p < 1 || p > stem_block_count)
            raise(Errc::invalid_spec, "sin_positions must lie in [1, stem_block_count]");
        if (p <= prev) raise(Errc::invalid_spec, "sin_positions must be strictly increasing");
        prev = p;
    }
    if (channels.size() != sin_positions.size() + 1)
        raise(Errc::invalid_spec, "channels must have len(sin_positions)+1 entries");
    for (int c : channels)
        if (c < 1) raise(Errc::invalid_spec, "channel widths must be positive");
}

namespace {

void observe(ForwardObserver* obs, const std::string& name, const SparseTensor& out,
             std::size_t extra_live_bytes) {
    if (obs) obs->on_layer(name, out, out.feature_bytes() + extra_live_bytes);
}

} // namespace

SparseTensor srb_forward(const SparseTensor& t, const ConvLayer& conv1, const ConvLayer& conv2) {
    if (conv1.kind != ConvKind::submanifold || conv2.kind != ConvKind::submanifold)
        raise(Errc::geometry_mismatch, "SRB layers must be submanifold");
    if (conv1.in_channels != t.channels || conv1.out_channels != conv2.in_channels ||
        conv2.out_channels != t.channels)
        raise(Errc::channel_mismatch, "SRB channel chain must map C -> C");
    // both convs share geometry, so one rulebook serves both
    const Rulebook rb = build_rulebook_subm(t, conv1.kernel_dims);
    SparseTensor h = relu(conv_forward(t, conv1, rb));
    h = conv_forward(h, conv2, rb);
    return relu(add(h, t));
}

SparseTensor sin_forward(const SparseTensor& t, const ConvLayer& layer) {
    if (!t.slice_height) raise(Errc::missing_slice_height, "SIN input must be a slice tensor");
    if (layer.kernel_dims.size() != 3)
        raise(Errc::geometry_mismatch, layer.name + ": SIN layer must be 3D");
    const SparseTensor vox = unslice(t);
    SparseTensor out;
    if (layer.kind == ConvKind::submanifold)
        out = subm_conv(vox, layer);
    else if (layer.kind == ConvKind::strided)
        out = strided_conv(vox, layer);
    else
        raise(Errc::geometry_mismatch, layer.name + ": SIN layer must be submanifold or strided");
    return slice(out);
}

SparseTensor edb_forward(const SparseTensor& t, const EdbWeights& w, ForwardObserver* obs,
                         const std::string& prefix) {
    if (!w.down || !w.up) raise(Errc::incomplete_weights, prefix + ": down/up layer missing");
    SparseTensor cur = t;
    if (w.sin) {
        cur = relu(sin_forward(cur, *w.sin));
        observe(obs, prefix + ".sin", cur, 0);
    }
    const SparseTensor& skip = cur; // held across the block
    SparseTensor down = relu(strided_conv(skip, *w.down));
    observe(obs, prefix + ".down", down, skip.feature_bytes());
    for (std::size_t i = 0; i < w.bottom_srbs.size(); ++i) {
        down = srb_forward(down, *w.bottom_srbs[i].first, *w.bottom_srbs[i].second);
        observe(obs, prefix + ".srb" + std::to_string(i + 1), down, skip.feature_bytes());
    }
    SparseTensor up = transposed_conv_forward(down, *w.up, &skip);
    observe(obs, prefix + ".up", up, skip.feature_bytes());
    return relu(add(up, skip));
}

SparseTensor afd_diffuse(const SparseTensor& t, int kernel) {
    if (!t.is_2d()) raise(Errc::shape_mismatch, "afd_diffuse expects a 2D tensor");
    if (kernel < 3 || kernel % 2 == 0)
        raise(Errc::invalid_spec, "AFD kernel must be odd and >= 3");
    const int r = kernel / 2;
    const std::int64_t n = t.n_active();
    if (n == 0) return t;

    std::unordered_map<std::uint64_t, std::int32_t> input_row;
    input_row.reserve(static_cast<std::size_t>(n) * 2);
    for (std::int64_t i = 0; i < n; ++i) input_row.emplace(pack_key(t.coord(i)), i);

    // dilate: every in-bounds footprint position of every active site
    std::vector<std::uint64_t> keys;
    keys.reserve(static_cast<std::size_t>(n) * kernel * kernel);
    std::int32_t c[3];
    for (std::int64_t i = 0; i < n; ++i) {
        const auto site = t.coord(i);
        c[0] = site[0];
        for (int dy = -r; dy <= r; ++dy) {
            c[1] = site[1] + dy;
            if (c[1] < 0 || c[1] >= t.spatial_shape[0]) continue;
            for (int dx = -r; dx <= r; ++dx) {
                c[2] = site[2] + dx;
                if (c[2] < 0 || c[2] >= t.spatial_shape[1]) continue;
                keys.push_back(pack_key(c));
            }
        }
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    const int ch = t.channels;
    std::vector<std::int32_t> coords(keys.size() * 3);
    std::vector<float> features(keys.size() * static_cast<std::size_t>(ch), 0.0f);
    std::vector<double> acc(static_cast<std::size_t>(ch));
    for (std::size_t rix = 0; rix < keys.size(); ++rix) {
        std::int32_t* dst_c = coords.data() + rix * 3;
        unpack_key(keys[rix], 3, {dst_c, 3});
        float* dst = features.data() + rix * ch;
        const auto hit = input_row.find(keys[rix]);
        if (hit != input_row.end()) { // original sites keep exact features
            const auto f = t.feature(hit->second);
            std::copy(f.begin(), f.end(), dst);
            continue;
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        int found = 0;
        for (int dy = -r; dy <= r; ++dy) {
            c[0] = dst_c[0];
            c[1] = dst_c[1] + dy;
            if (c[1] < 0 || c[1] >= t.spatial_shape[0]) continue;
            for (int dx = -r; dx <= r; ++dx) {
                c[2] = dst_c[2] + dx;
                if (c[2] < 0 || c[2] >= t.spatial_shape[1]) continue;
                const auto nb = input_row.find(pack_key(c));
                if (nb == input_row.end()) continue;
                const auto f = t.feature(nb->second);
                for (int k = 0; k < ch; ++k) acc[static_cast<std::size_t>(k)] += f[k];
                ++found;
            }
        }
        for (int k = 0; k < ch; ++k)
            dst[k] = static_cast<float>(acc[static_cast<std::size_t>(k)] / found);
    }
    return make_trusted(std::move(coords), std::move(features), ch, t.spatial_shape,
                        t.batch_size, t.slice_height);
}

SparseTensor bev_collapse_max(const SparseTensor& t) {
    std::int32_t height = 0;
    if (t.is_3d())
        height = t.spatial_shape[0];
    else if (t.slice_height)
        height = *t.slice_height;
    else
        raise(Errc::missing_slice_height, "collapse needs a 3D tensor or slice metadata");

    const std::int64_t n = t.n_active();
    const std::int32_t out_batch = t.is_3d() ? t.batch_size : t.batch_size / height;
    const std::vector<std::int32_t> out_shape =
        t.is_3d() ? std::vector<std::int32_t>{t.spatial_shape[1], t.spatial_shape[2]}
                  : t.spatial_shape;

    std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
    std::int32_t c[3];
    for (std::int64_t i = 0; i < n; ++i) {
        const auto site = t.coord(i);
        if (t.is_3d()) {
            c[0] = site[0];
            c[1] = site[2];
            c[2] = site[3];
        } else {
            c[0] = site[0] / height;
            c[1] = site[1];
            c[2] = site[2];
        }
        keys[static_cast<std::size_t>(i)] = pack_key(c);
    }
    std::vector<std::uint64_t> uniq = keys;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::unordered_map<std::uint64_t, std::int32_t> row_of;
    row_of.reserve(uniq.size() * 2);
    for (std::size_t r = 0; r < uniq.size(); ++r)
        row_of.emplace(uniq[r], static_cast<std::int32_t>(r));

    const int ch = t.channels;
    std::vector<std::int32_t> coords(uniq.size() * 3);
    for (std::size_t r = 0; r < uniq.size(); ++r)
        unpack_key(uniq[r], 3, {coords.data() + r * 3, 3});
    std::vector<float> features(uniq.size() * static_cast<std::size_t>(ch));
    std::vector<bool> seen(uniq.size(), false);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t r = row_of.at(keys[static_cast<std::size_t>(i)]);
        const auto f = t.feature(i);
        float* dst = features.data() + static_cast<std::size_t>(r) * ch;
        if (!seen[static_cast<std::size_t>(r)]) {
            std::copy(f.begin(), f.end(), dst);
            seen[static_cast<std::size_t>(r)] = true;
        } else {
            for (int k = 0; k < ch; ++k) dst[k] = std::max(dst[k], f[k]);
        }
    }
    return make_trusted(std::move(coords), std::move(features), ch, out_shape, out_batch);
}

SparseTensor backbone_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                              const WeightStore& weights, ForwardObserver* obs) {
    cfg.validate();
    if (!voxels.is_3d()) raise(Errc::shape_mismatch, "backbone input must be a 3D voxel tensor");
    if (voxels.channels != cfg.channels[0])
        raise(Errc::channel_mismatch, "backbone input must carry channels[0]=" +
                                          std::to_string(cfg.channels[0]) + " features, got " +
                                          std::to_string(voxels.channels));

    // geometry comes from the same plan that init_weights consumes
    HeadSpec dummy_head;
    std::unordered_map<std::string, LayerSpec> spec_of;
    for (auto& s : build_layer_plan(cfg, dummy_head, Repr::slice))
        spec_of.emplace(s.name, std::move(s));
    const auto layer = [&](const std::string& name) {
        const auto it = spec_of.find(name);
        if (it == spec_of.end()) raise(Errc::incomplete_weights, name);
        LayerSpec spec = it->second;
        spec.has_bias = weights.find(name + ".bias") != nullptr; // bias is per-layer optional
        return make_conv_layer(weights, spec);
    };

    SparseTensor t = slice(voxels);
    observe(obs, "slice", t, 0);

    int sin_rank = 0;
    for (int b = 1; b <= cfg.stem_block_count; ++b) {
        const std::string base = "stem.srb" + std::to_string(b);
        const ConvLayer c1 = layer(base + ".conv1");
        const ConvLayer c2 = layer(base + ".conv2");
        t = srb_forward(t, c1, c2);
        observe(obs, base, t, 0);
        if (sin_rank < static_cast<int>(cfg.sin_positions.size()) &&
            cfg.sin_positions[static_cast<std::size_t>(sin_rank)] == b) {
            const std::string name = "stem.sin" + std::to_string(sin_rank + 1);
            t = relu(sin_forward(t, layer(name)));
            observe(obs, name, t, 0);
            ++sin_rank;
        }
    }

    const bool with_sin = !cfg.sin_positions.empty();
    std::vector<ConvLayer> held; // keeps layer storage alive for EdbWeights pointers
    for (int e = 1; e <= cfg.edb_count; ++e) {
        const std::string base = "edb" + std::to_string(e);
        held.clear();
        held.reserve(4 + 2 * kEdbBottomSrbCount);
        EdbWeights w;
        if (with_sin) {
            held.push_back(layer(base + ".sin"));
            w.sin = &held.back();
        }
        held.push_back(layer(base + ".down"));
        w.down = &held.back();
        for (int j = 1; j <= kEdbBottomSrbCount; ++j) {
            held.push_back(layer(base + ".srb" + std::to_string(j) + ".conv1"));
            held.push_back(layer(base + ".srb" + std::to_string(j) + ".conv2"));
        }
        held.push_back(layer(base + ".up"));
        w.up = &held.back();
        // pointers resolved after all pushes so reallocation cannot bite
        std::size_t ix = with_sin ? 1 : 0;
        w.sin = with_sin ? &held[0] : nullptr;
        w.down = &held[ix++];
        for (int j = 0; j < kEdbBottomSrbCount; ++j) {
            w.bottom_srbs.emplace_back(&held[ix], &held[ix + 1]);
            ix += 2;
        }
        w.up = &held[ix];
        t = edb_forward(t, w, obs, base);
        observe(obs, base, t, 0);
    }

    observe(obs, "pre_collapse", t, 0);
    SparseTensor bev = bev_collapse_max(t);
    observe(obs, "collapse", bev, 0);
    bev = afd_diffuse(bev, cfg.afd_kernel);
    observe(obs, "afd", bev, 0);
    return bev;
}

} // namespace ps
