#include "pointslice/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "pointslice/head.hpp"
#include "pointslice/slice.hpp"

namespace ps {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0;
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Collects the per-layer trace and the peak of the live-byte figure.
struct StatsObserver final : ForwardObserver {
    std::int64_t peak_sites = 0;
    std::size_t peak_bytes = 0;
    std::vector<std::string>* trace = nullptr;
    std::string prefix;

    void on_layer(const std::string& name, const SparseTensor& out,
                  std::size_t live_bytes) override {
        peak_sites = std::max(peak_sites, out.n_active());
        peak_bytes = std::max(peak_bytes, live_bytes);
        if (trace)
            trace->push_back(prefix + name + " n_active=" + std::to_string(out.n_active()) +
                             " channels=" + std::to_string(out.channels) +
                             " live_bytes=" + std::to_string(live_bytes));
    }
};

ConvLayer encoder_layer(const WeightStore& weights, const BackboneConfig& cfg) {
    const LayerSpec spec{"encoder", {1, 1, 1}, kRawVoxelChannels, cfg.channels[0],
                         {1, 1, 1}, ConvKind::submanifold, true};
    return make_conv_layer(weights, spec);
}

// shared stem/EDB skeleton for the two baseline drivers; `planar` selects
// 2D (pillar) vs 3D (voxel3d) convolutions
SparseTensor baseline_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                              const WeightStore& weights, Repr repr, ForwardObserver* obs) {
    cfg.validate();
    HeadSpec dummy;
    std::unordered_map<std::string, LayerSpec> spec_of;
    for (auto& s : build_layer_plan(cfg, dummy, repr)) spec_of.emplace(s.name, std::move(s));
    const auto layer = [&](const std::string& name) {
        const auto it = spec_of.find(name);
        if (it == spec_of.end()) raise(Errc::incomplete_weights, name);
        LayerSpec spec = it->second;
        spec.has_bias = weights.find(name + ".bias") != nullptr;
        return make_conv_layer(weights, spec);
    };
    const auto observe = [&](const std::string& name, const SparseTensor& out,
                             std::size_t extra) {
        if (obs) obs->on_layer(name, out, out.feature_bytes() + extra);
    };

    const bool planar = repr == Repr::pillar;
    SparseTensor t = planar ? slice(voxels) : voxels; // pillar: H=1 fold is trivial
    if (planar && voxels.spatial_shape[0] != 1)
        raise(Errc::config_incompatible, "pillar baseline expects an H=1 voxelization");
    observe("input", t, 0);

    int sin_rank = 0;
    for (int b = 1; b <= cfg.stem_block_count; ++b) {
        const std::string base = "stem.srb" + std::to_string(b);
        t = srb_forward(t, layer(base + ".conv1"), layer(base + ".conv2"));
        observe(base, t, 0);
        if (sin_rank < static_cast<int>(cfg.sin_positions.size()) &&
            cfg.sin_positions[static_cast<std::size_t>(sin_rank)] == b) {
            const std::string name = "stem.down" + std::to_string(sin_rank + 1);
            t = relu(strided_conv(t, layer(name)));
            observe(name, t, 0);
            ++sin_rank;
        }
    }

    const bool with_entry = repr == Repr::voxel3d && !cfg.sin_positions.empty();
    for (int e = 1; e <= cfg.edb_count; ++e) {
        const std::string base = "edb" + std::to_string(e);
        std::vector<ConvLayer> held;
        held.reserve(2 + 2 * kEdbBottomSrbCount + (with_entry ? 1 : 0));
        if (with_entry) held.push_back(layer(base + ".entry"));
        held.push_back(layer(base + ".down"));
        for (int j = 1; j <= kEdbBottomSrbCount; ++j) {
            held.push_back(layer(base + ".srb" + std::to_string(j) + ".conv1"));
            held.push_back(layer(base + ".srb" + std::to_string(j) + ".conv2"));
        }
        held.push_back(layer(base + ".up"));

        std::size_t ix = 0;
        SparseTensor cur = t;
        if (with_entry) {
            cur = relu(subm_conv(cur, held[ix++]));
            observe(base + ".entry", cur, 0);
        }
        const SparseTensor& skip = cur;
        SparseTensor down = relu(strided_conv(skip, held[ix++]));
        observe(base + ".down", down, skip.feature_bytes());
        for (int j = 1; j <= kEdbBottomSrbCount; ++j) {
            down = srb_forward(down, held[ix], held[ix + 1]);
            ix += 2;
            observe(base + ".srb" + std::to_string(j), down, skip.feature_bytes());
        }
        SparseTensor up = transposed_conv_forward(down, held[ix], &skip);
        observe(base + ".up", up, skip.feature_bytes());
        t = relu(add(up, skip));
        observe(base, t, 0);
    }

    observe("pre_collapse", t, 0);
    SparseTensor bev = bev_collapse_max(t);
    observe("collapse", bev, 0);
    bev = afd_diffuse(bev, cfg.afd_kernel);
    observe("afd", bev, 0);
    return bev;
}

} // namespace

SparseTensor voxel3d_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                             const WeightStore& weights, ForwardObserver* obs) {
    return baseline_forward(voxels, cfg, weights, Repr::voxel3d, obs);
}

SparseTensor pillar_forward(const SparseTensor& voxels, const BackboneConfig& cfg,
                            const WeightStore& weights, ForwardObserver* obs) {
    return baseline_forward(voxels, cfg, weights, Repr::pillar, obs);
}

void check_matched_configs(const BackboneConfig& cfg, const HeadSpec& head) {
    // channel schedule and downsampling factors must agree layer-for-layer
    const auto schedule = [&](Repr repr) {
        std::vector<std::pair<int, int>> chans;
        std::vector<int> down_xy;
        for (const auto& s : build_layer_plan(cfg, head, repr)) {
            chans.emplace_back(s.cin, s.cout);
            int f = 1;
            for (std::size_t a = s.stride.size() >= 3 ? 1 : 0; a < s.stride.size(); ++a)
                f *= s.stride[a];
            if (s.kind == ConvKind::strided) down_xy.push_back(f);
        }
        return std::make_pair(chans, down_xy);
    };
    const auto a = schedule(Repr::slice);
    const auto b = schedule(Repr::voxel3d);
    const auto c = schedule(Repr::pillar);
    if (a.second != b.second || a.second != c.second)
        raise(Errc::config_incompatible, "downsampling factors differ across representations");
    if (a.first != b.first)
        raise(Errc::config_incompatible, "channel schedules differ between slice and voxel3d");
    // pillar has no slice-interaction layer; compare with runs collapsed
    const auto spine = [](const std::vector<std::pair<int, int>>& v) {
        std::vector<std::pair<int, int>> out;
        for (const auto& p : v)
            if (out.empty() || out.back() != p) out.push_back(p);
        return out;
    };
    if (spine(a.first) != spine(c.first))
        raise(Errc::config_incompatible, "channel schedules differ between slice and pillar");
}

BenchReport run_bench(const PipelineConfig& cfg, int repetitions, std::uint64_t weight_seed,
                      std::vector<std::string>* trace_lines) {
    if (repetitions < 3) raise(Errc::invalid_spec, "bench needs at least 3 repetitions");
    check_matched_configs(cfg.backbone, cfg.head);

    const Scene scene = gen_scene(cfg.scene);
    BenchReport report;

    for (const Repr repr : {Repr::slice, Repr::pillar, Repr::voxel3d}) {
        const auto plan = build_layer_plan(cfg.backbone, cfg.head, repr);
        const WeightStore weights = init_weights(plan, weight_seed);

        const VoxelGridSpec grid = repr == Repr::pillar ? pillar_spec(cfg.grid) : cfg.grid;
        const ConvLayer enc = encoder_layer(weights, cfg.backbone);
        const auto forward = [&](const SparseTensor& encoded, ForwardObserver* obs) {
            switch (repr) {
                case Repr::slice: return backbone_forward(encoded, cfg.backbone, weights, obs);
                case Repr::pillar: return pillar_forward(encoded, cfg.backbone, weights, obs);
                case Repr::voxel3d: return voxel3d_forward(encoded, cfg.backbone, weights, obs);
            }
            raise(Errc::invalid_spec, "unreachable");
        };

        const SparseTensor raw = voxelize({scene.cloud}, grid);
        const SparseTensor encoded = encode_features(raw, enc);

        // warmup pass doubles as the instrumented pass
        StatsObserver obs;
        obs.trace = trace_lines;
        obs.prefix = std::string(repr_name(repr)) + ".";
        obs.peak_sites = std::max(raw.n_active(), encoded.n_active());
        obs.peak_bytes = raw.feature_bytes() + encoded.feature_bytes();
        (void)forward(encoded, &obs);

        std::vector<double> backbone_ms, e2e_ms;
        for (int r = 0; r < repetitions; ++r) {
            const auto t0 = Clock::now();
            (void)forward(encoded, nullptr);
            backbone_ms.push_back(ms_since(t0));

            const auto t1 = Clock::now();
            const SparseTensor raw2 = voxelize({scene.cloud}, grid);
            const SparseTensor enc2 = encode_features(raw2, enc);
            const SparseTensor bev = forward(enc2, nullptr);
            const HeadOutput ho = head_forward(bev, weights, cfg.head);
            const auto dets = decode(ho, cfg.head, grid);
            (void)nms_bev(dets, cfg.head.nms_iou);
            e2e_ms.push_back(ms_since(t1));
        }

        RepresentationStats stats;
        stats.param_count = count_params(weights).total;
        stats.backbone_ms_mean = mean(backbone_ms);
        stats.backbone_ms_median = median(backbone_ms);
        stats.e2e_ms_mean = mean(e2e_ms);
        stats.e2e_ms_median = median(e2e_ms);
        stats.peak_active_sites = obs.peak_sites;
        stats.peak_feature_bytes = static_cast<std::int64_t>(obs.peak_bytes);
        switch (repr) {
            case Repr::slice: report.slice = stats; break;
            case Repr::pillar: report.pillar = stats; break;
            case Repr::voxel3d: report.voxel3d = stats; break;
        }
    }

    if (report.voxel3d.param_count > 0) {
        report.slice_param_ratio = static_cast<double>(report.slice.param_count) /
                                   static_cast<double>(report.voxel3d.param_count);
        report.pillar_param_ratio = static_cast<double>(report.pillar.param_count) /
                                    static_cast<double>(report.voxel3d.param_count);
    }
    if (report.slice.backbone_ms_median > 0)
        report.slice_speedup = report.voxel3d.backbone_ms_median / report.slice.backbone_ms_median;
    if (report.pillar.backbone_ms_median > 0)
        report.pillar_speedup = report.voxel3d.backbone_ms_median / report.pillar.backbone_ms_median;
    if (report.voxel3d.peak_feature_bytes > 0)
        report.slice_memory_ratio = static_cast<double>(report.slice.peak_feature_bytes) /
                                    static_cast<double>(report.voxel3d.peak_feature_bytes);
    return report;
}

namespace {

nlohmann::json stats_json(const RepresentationStats& s) {
    return {
        {"param_count", s.param_count},
        {"backbone_ms_mean", s.backbone_ms_mean},
        {"backbone_ms_median", s.backbone_ms_median},
        {"e2e_ms_mean", s.e2e_ms_mean},
        {"e2e_ms_median", s.e2e_ms_median},
        {"peak_active_sites", s.peak_active_sites},
        {"peak_feature_bytes", s.peak_feature_bytes},
    };
}

RepresentationStats stats_from(const nlohmann::json& j) {
    RepresentationStats s;
    s.param_count = j.at("param_count").get<std::int64_t>();
    s.backbone_ms_mean = j.at("backbone_ms_mean").get<double>();
    s.backbone_ms_median = j.at("backbone_ms_median").get<double>();
    s.e2e_ms_mean = j.at("e2e_ms_mean").get<double>();
    s.e2e_ms_median = j.at("e2e_ms_median").get<double>();
    s.peak_active_sites = j.at("peak_active_sites").get<std::int64_t>();
    s.peak_feature_bytes = j.at("peak_feature_bytes").get<std::int64_t>();
    return s;
}

} // namespace

std::string BenchReport::to_json() const {
    nlohmann::json j;
    j["slice"] = stats_json(slice);
    j["pillar"] = stats_json(pillar);
    j["voxel3d"] = stats_json(voxel3d);
    nlohmann::json r;
    if (slice_param_ratio) r["slice_param_ratio"] = *slice_param_ratio;
    if (slice_speedup) r["slice_speedup"] = *slice_speedup;
    if (slice_memory_ratio) r["slice_memory_ratio"] = *slice_memory_ratio;
    if (pillar_param_ratio) r["pillar_param_ratio"] = *pillar_param_ratio;
    if (pillar_speedup) r["pillar_speedup"] = *pillar_speedup;
    j["ratios_vs_voxel3d"] = r;
    j["memory_note"] = memory_note;
    return j.dump(2);
}

BenchReport BenchReport::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    BenchReport rep;
    rep.slice = stats_from(j.at("slice"));
    rep.pillar = stats_from(j.at("pillar"));
    rep.voxel3d = stats_from(j.at("voxel3d"));
    const auto& r = j.at("ratios_vs_voxel3d");
    if (r.contains("slice_param_ratio")) rep.slice_param_ratio = r["slice_param_ratio"].get<double>();
    if (r.contains("slice_speedup")) rep.slice_speedup = r["slice_speedup"].get<double>();
    if (r.contains("slice_memory_ratio"))
        rep.slice_memory_ratio = r["slice_memory_ratio"].get<double>();
    if (r.contains("pillar_param_ratio"))
        rep.pillar_param_ratio = r["pillar_param_ratio"].get<double>();
    if (r.contains("pillar_speedup")) rep.pillar_speedup = r["pillar_speedup"].get<double>();
    rep.memory_note = j.at("memory_note").get<std::string>();
    return rep;
}

} // namespace ps
