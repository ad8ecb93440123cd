#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pointslice/bench.hpp"
#include "pointslice/config.hpp"
#include "pointslice/head.hpp"
#include "pointslice/oracle.hpp"
#include "pointslice/parallel.hpp"
#include "pointslice/rng.hpp"
#include "pointslice/slice.hpp"
#include "pointslice/weights.hpp"

using namespace ps;

namespace {

int exit_code_for(Errc c) {
    switch (c) {
        case Errc::io_error:
            return 2;
        case Errc::bad_magic:
        case Errc::truncated_file:
        case Errc::duplicate_tensor_name:
            return 3;
        case Errc::config_error:
        case Errc::invalid_spec:
        case Errc::config_incompatible:
            return 4;
        default:
            return 1;
    }
}

PipelineConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return default_pipeline_config();
    return load_pipeline_config(Config::parse_file(path));
}

ConvLayer encoder_layer(const WeightStore& weights, const BackboneConfig& cfg) {
    LayerSpec spec{"encoder", {1, 1, 1}, kRawVoxelChannels, cfg.channels[0],
                   {1, 1, 1}, ConvKind::submanifold, true};
    spec.has_bias = weights.find("encoder.bias") != nullptr;
    return make_conv_layer(weights, spec);
}

int run_gen(const std::string& config_path, std::int64_t seed_override,
            const std::string& out_path) {
    PipelineConfig cfg = load_config_or_default(config_path);
    if (seed_override >= 0) cfg.scene.seed = static_cast<std::uint64_t>(seed_override);
    const Scene scene = gen_scene(cfg.scene);
    write_xyzi(out_path, scene.cloud);
    std::fprintf(stderr, "wrote %lld points to %s\n",
                 static_cast<long long>(scene.cloud.size()), out_path.c_str());
    return 0;
}

int run_init(const std::string& config_path, std::int64_t seed, const std::string& out_path) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    const auto plan = build_layer_plan(cfg.backbone, cfg.head, Repr::slice);
    const WeightStore weights = init_weights(plan, static_cast<std::uint64_t>(seed));
    save_weights(out_path, weights);
    const ParamCounts counts = count_params(weights);
    std::fprintf(stderr, "wrote %zu tensors (%lld parameters) to %s\n",
                 weights.tensors.size(), static_cast<long long>(counts.total),
                 out_path.c_str());
    return 0;
}

int run_infer(const std::string& cloud_path, const std::string& weights_path,
              const std::string& config_path) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    const PointCloud cloud = read_xyzi(cloud_path);
    const WeightStore weights = load_weights(weights_path);

    const SparseTensor raw = voxelize({cloud}, cfg.grid);
    const SparseTensor encoded = encode_features(raw, encoder_layer(weights, cfg.backbone));
    const SparseTensor bev = backbone_forward(encoded, cfg.backbone, weights);
    const HeadOutput head = head_forward(bev, weights, cfg.head);
    const auto dets = decode(head, cfg.head, cfg.grid);
    const auto kept = nms_bev(dets, cfg.head.nms_iou);
    std::string out;
    for (const Detection& d : kept) {
        out += detection_jsonl(d);
        out += '\n';
    }
    std::fwrite(out.data(), 1, out.size(), stdout);
    return 0;
}

int run_bench_cmd(const std::string& config_path, int repetitions, std::int64_t seed,
                  bool trace) {
    const PipelineConfig cfg = load_config_or_default(config_path);
    std::vector<std::string> trace_lines;
    const BenchReport report =
        run_bench(cfg, repetitions, static_cast<std::uint64_t>(seed), trace ? &trace_lines : nullptr);
    if (trace)
        for (const auto& line : trace_lines) std::fprintf(stderr, "%s\n", line.c_str());
    std::printf("%s\n", report.to_json().c_str());
    return 0;
}

// small randomized property sweep backed by the dense reference
// implementations; a fast smoke check, not the acceptance suite
int run_check(std::uint64_t seed, int cases) {
    SplitMix64 rng(seed);
    int failures = 0;
    const auto report = [&](const std::string& name, bool ok) {
        std::printf("%s %s\n", ok ? "ok  " : "FAIL", name.c_str());
        if (!ok) ++failures;
    };

    {
        bool ok = true;
        for (int it = 0; it < cases * 10; ++it) {
            std::vector<std::int32_t> shape{
                static_cast<std::int32_t>(rng.uniform_int(1, 8)),
                static_cast<std::int32_t>(rng.uniform_int(1, 16)),
                static_cast<std::int32_t>(rng.uniform_int(1, 16))};
            std::int64_t cells = 2;
            for (auto s : shape) cells *= s;
            std::vector<std::int32_t> coords;
            std::vector<float> feats;
            const std::int64_t n = rng.uniform_int(0, std::min<std::int64_t>(cells / 2, 64));
            std::set<std::vector<std::int32_t>> seen;
            for (std::int64_t i = 0; i < n; ++i) {
                std::vector<std::int32_t> c{
                    static_cast<std::int32_t>(rng.uniform_int(0, 1)),
                    static_cast<std::int32_t>(rng.uniform_int(0, shape[0] - 1)),
                    static_cast<std::int32_t>(rng.uniform_int(0, shape[1] - 1)),
                    static_cast<std::int32_t>(rng.uniform_int(0, shape[2] - 1))};
                if (!seen.insert(c).second) continue;
                coords.insert(coords.end(), c.begin(), c.end());
                feats.push_back(rng.uniform_f(-1, 1));
            }
            const SparseTensor t = from_coords(coords, feats, 1, shape, 2);
            if (!tensors_equal(unslice(slice(t)), t)) ok = false;
        }
        report("slice/unslice roundtrip", ok);
    }

    {
        bool ok = true;
        for (int it = 0; it < cases; ++it) {
            SparseTensor t = from_coords({}, {}, 2, {10, 10}, 1);
            {
                std::vector<std::int32_t> coords;
                std::vector<float> feats;
                std::set<std::pair<int, int>> seen;
                for (int i = 0; i < 20; ++i) {
                    const int y = static_cast<int>(rng.uniform_int(0, 9));
                    const int x = static_cast<int>(rng.uniform_int(0, 9));
                    if (!seen.insert({y, x}).second) continue;
                    coords.insert(coords.end(), {0, y, x});
                    feats.insert(feats.end(), {rng.uniform_f(-1, 1), rng.uniform_f(-1, 1)});
                }
                t = from_coords(coords, feats, 2, {10, 10}, 1);
            }
            ConvLayer l;
            l.name = "chk";
            l.kernel_dims = {3, 3};
            l.in_channels = 2;
            l.out_channels = 3;
            l.stride = {1, 1};
            l.kind = ConvKind::submanifold;
            l.weights.resize(9 * 2 * 3);
            for (float& w : l.weights) w = rng.uniform_f(-0.5, 0.5);
            const SparseTensor out = subm_conv(t, l);
            const DenseTensor ref =
                oracle::mask_to_sites(oracle::dense_conv(to_dense(t), l), t);
            const DenseTensor got = to_dense(out);
            for (std::size_t i = 0; i < got.data.size(); ++i)
                if (std::fabs(got.data[i] - ref.data[i]) > 1e-4f) ok = false;

            ConvLayer s = l;
            s.kind = ConvKind::strided;
            s.stride = {2, 2};
            const SparseTensor sout = strided_conv(t, s);
            const DenseTensor sref =
                oracle::mask_to_sites(oracle::dense_conv(to_dense(t), s), sout);
            const DenseTensor sgot = to_dense(sout);
            for (std::size_t i = 0; i < sgot.data.size(); ++i)
                if (std::fabs(sgot.data[i] - sref.data[i]) > 1e-4f) ok = false;
        }
        report("sparse conv vs dense reference", ok);
    }

    {
        bool ok = true;
        for (int it = 0; it < cases * 20; ++it) {
            const BevBox a{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(0.5, 5),
                           rng.uniform(0.5, 3), rng.uniform(-3.14, 3.14)};
            const BevBox b{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(0.5, 5),
                           rng.uniform(0.5, 3), rng.uniform(-3.14, 3.14)};
            if (std::fabs(rotated_iou(a, b) - oracle::polygon_clip_iou(a, b)) > 1e-6) ok = false;
        }
        report("rotated IoU vs polygon-clip reference", ok);
    }

    {
        BackboneConfig cfg;
        cfg.stem_block_count = 2;
        cfg.sin_positions = {2};
        cfg.channels = {4, 8};
        const auto plan = build_layer_plan(cfg, HeadSpec{}, Repr::slice);
        const WeightStore w = init_weights(plan, rng.next_u64());
        const std::string tmp = "check_weights.psw";
        save_weights(tmp, w);
        const WeightStore back = load_weights(tmp);
        std::remove(tmp.c_str());
        report("weight file roundtrip", w == back);
    }

    std::printf("%d check(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PointSlice: sparse slice-based point-cloud inference engine"};
    app.require_subcommand(1);

    int workers = 0; // 0: use env or default
    app.add_option("-w,--workers", workers, "intra-op worker threads (default 1)");

    std::string config_path, out_path, cloud_path, weights_path;
    std::int64_t seed = -1;
    int repetitions = 5;
    bool trace = false;
    std::uint64_t check_seed = 1;
    int check_cases = 10;

    auto* gen = app.add_subcommand("gen", "generate a synthetic scene (.xyzi)");
    gen->add_option("--config", config_path, "config file");
    gen->add_option("--seed", seed, "scene seed override");
    gen->add_option("-o,--out", out_path, "output .xyzi path")->required();

    auto* init = app.add_subcommand("init", "initialize a weight file (.psw)");
    init->add_option("--config", config_path, "config file");
    init->add_option("--seed", seed, "weight seed")->default_val(1);
    init->add_option("-o,--out", out_path, "output .psw path")->required();

    auto* infer = app.add_subcommand("infer", "run inference, detections as JSONL on stdout");
    infer->add_option("--cloud", cloud_path, "input .xyzi")->required();
    infer->add_option("--weights", weights_path, "weight file (.psw)")->required();
    infer->add_option("--config", config_path, "config file");

    auto* bench = app.add_subcommand("bench", "slice vs pillar vs voxel3d comparison, JSON on stdout");
    bench->add_option("--config", config_path, "config file");
    bench->add_option("--repetitions", repetitions, "timed repetitions (>= 3)");
    bench->add_option("--seed", seed, "weight seed")->default_val(1);
    bench->add_flag("--trace", trace, "print per-layer trace lines to stderr");

    auto* check = app.add_subcommand("check", "run randomized property checks");
    check->add_option("--seed", check_seed, "check seed");
    check->add_option("--cases", check_cases, "cases per check");

    CLI11_PARSE(app, argc, argv);

    if (workers <= 0) {
        if (const char* env = std::getenv("POINTSLICE_WORKERS")) workers = std::atoi(env);
    }
    set_workers(workers > 0 ? workers : 1);

    try {
        if (gen->parsed()) return run_gen(config_path, seed, out_path);
        if (init->parsed()) return run_init(config_path, seed, out_path);
        if (infer->parsed()) return run_infer(cloud_path, weights_path, config_path);
        if (bench->parsed()) return run_bench_cmd(config_path, repetitions, seed, trace);
        if (check->parsed()) return run_check(check_seed, check_cases);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
