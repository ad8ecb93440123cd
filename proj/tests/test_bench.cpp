#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "pointslice/bench.hpp"
#include "pointslice/config.hpp"
#include "pointslice/scene.hpp"
#include "pointslice/weights.hpp"

using namespace ps;

TEST_SUITE("bench") {

TEST_CASE("gen_scene without objects emits exactly the ground points") {
    SceneSpec spec;
    spec.n_objects = 0;
    spec.ground_points = 1000;
    const Scene scene = gen_scene(spec);
    CHECK(scene.cloud.size() == 1000);
    for (std::int64_t i = 0; i < scene.cloud.size(); ++i)
        CHECK(std::fabs(scene.cloud.point(i)[2]) <= spec.ground_z_noise);
}

TEST_CASE("gen_scene is deterministic per seed") {
    SceneSpec spec;
    spec.seed = 99;
    spec.n_objects = 5;
    spec.ground_points = 500;
    const Scene a = gen_scene(spec);
    const Scene b = gen_scene(spec);
    CHECK(a.cloud.points == b.cloud.points);
    spec.seed = 100;
    const Scene c = gen_scene(spec);
    CHECK(a.cloud.points != c.cloud.points);
}

TEST_CASE("object points lie on their generating box surfaces") {
    // compact scene: float32 storage at |coord| <= 5 m rounds by < 5e-7 m,
    // keeping the 1e-6 surface tolerance meaningful
    SceneSpec spec;
    spec.seed = 42;
    spec.n_objects = 20;
    spec.ground_points = 0;
    spec.area_min = {-6, -6};
    spec.area_max = {6, 6};
    spec.object_size_min = {1.0, 0.6, 0.8};
    spec.object_size_max = {2.0, 1.2, 1.5};
    const Scene scene = gen_scene(spec);
    REQUIRE(scene.objects.size() == 20);

    std::int64_t covered = 0;
    for (const SceneBox& box : scene.objects) {
        CHECK(box.point_count > 0);
        for (std::int64_t i = box.first_point; i < box.first_point + box.point_count; ++i) {
            const auto p = scene.cloud.point(i);
            const double c = std::cos(box.yaw), s = std::sin(box.yaw);
            const double dx = p[0] - box.center[0], dy = p[1] - box.center[1];
            const double lx = c * dx + s * dy;
            const double ly = -s * dx + c * dy;
            const double lz = p[2] - box.center[2];
            CHECK(std::fabs(lx) <= box.size[0] / 2 + 1e-6);
            CHECK(std::fabs(ly) <= box.size[1] / 2 + 1e-6);
            CHECK(std::fabs(lz) <= box.size[2] / 2 + 1e-6);
            const bool on_face = std::fabs(std::fabs(lx) - box.size[0] / 2) <= 1e-6 ||
                                 std::fabs(std::fabs(ly) - box.size[1] / 2) <= 1e-6 ||
                                 std::fabs(std::fabs(lz) - box.size[2] / 2) <= 1e-6;
            CHECK(on_face);
        }
        covered += box.point_count;
    }
    CHECK(covered == scene.cloud.size());
}

TEST_CASE("init_weights is deterministic and respects the fan-in bound") {
    const std::vector<LayerSpec> plan{
        {"a", {3, 3}, 32, 64, {1, 1}, ConvKind::submanifold, true}};
    const WeightStore w1 = init_weights(plan, 7);
    const WeightStore w2 = init_weights(plan, 7);
    CHECK(w1 == w2);
    const WeightStore w3 = init_weights(plan, 8);
    CHECK(!(w1 == w3));

    const double bound = 1.0 / std::sqrt(288.0); // 3*3*32
    for (float v : w1.at("a.weight").values) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
}

TEST_CASE("init_weights sample mean is within 3 sigma of zero") {
    const std::vector<LayerSpec> plan{
        {"big", {3, 3}, 128, 128, {1, 1}, ConvKind::submanifold, false}};
    const WeightStore w = init_weights(plan, 21);
    const auto& vals = w.at("big.weight").values; // 147456 samples
    double mean = 0;
    for (float v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    const double bound = 1.0 / std::sqrt(9.0 * 128);
    const double sigma_mean = bound / std::sqrt(3.0 * static_cast<double>(vals.size()));
    CHECK(std::fabs(mean) <= 3 * sigma_mean);
}

TEST_CASE("count_params arithmetic") {
    std::vector<LayerSpec> plan{{"c2d", {3, 3}, 32, 64, {1, 1}, ConvKind::submanifold, true},
                                {"c3d", {3, 3, 3}, 32, 64, {1, 1, 1}, ConvKind::submanifold,
                                 true}};
    const WeightStore w = init_weights(plan, 1);
    const ParamCounts counts = count_params(w);
    REQUIRE(counts.per_layer.size() == 2);
    CHECK(counts.per_layer[0].first == "c2d");
    CHECK(counts.per_layer[0].second == 3 * 3 * 32 * 64 + 64);   // 18496
    CHECK(counts.per_layer[1].second == 27 * 32 * 64 + 64);      // 55360
    CHECK(counts.total == 18496 + 55360);
    // weight-only ratio is exactly 1/3 at kernel 3
    CHECK((counts.per_layer[0].second - 64) * 3 == counts.per_layer[1].second - 64);
}

TEST_CASE("parameter ratio and per-layer 1/k hold for the default config") {
    const BackboneConfig cfg;
    const HeadSpec head;
    const auto slice_plan = build_layer_plan(cfg, head, Repr::slice);
    const auto voxel_plan = build_layer_plan(cfg, head, Repr::voxel3d);
    const ParamCounts a = count_params(init_weights(slice_plan, 3));
    const ParamCounts b = count_params(init_weights(voxel_plan, 3));
    CHECK(static_cast<double>(a.total) / static_cast<double>(b.total) < 0.85);

    // converted layers: same name in both plans but 2D vs 3D kernels
    for (const auto& s : slice_plan)
        for (const auto& v : voxel_plan)
            if (s.name == v.name && s.kernel.size() == 2 && v.kernel.size() == 3) {
                const std::int64_t w2 =
                    static_cast<std::int64_t>(s.kernel[0]) * s.kernel[1] * s.cin * s.cout;
                const std::int64_t w3 = static_cast<std::int64_t>(v.kernel[0]) * v.kernel[1] *
                                        v.kernel[2] * v.cin * v.cout;
                CHECK(w2 * s.kernel[0] == w3);
            }
}

TEST_CASE("parameter monotonicity across representations and configs") {
    for (const int ks : {3, 5}) {
        BackboneConfig cfg;
        cfg.kernel_size = ks;
        const HeadSpec head;
        const auto p_slice = count_params(init_weights(build_layer_plan(cfg, head, Repr::slice), 1));
        const auto p_pillar =
            count_params(init_weights(build_layer_plan(cfg, head, Repr::pillar), 1));
        const auto p_voxel =
            count_params(init_weights(build_layer_plan(cfg, head, Repr::voxel3d), 1));
        CHECK(p_slice.total < p_voxel.total);
        CHECK(p_pillar.total <= p_slice.total);
    }
}

TEST_CASE("psw file: empty store is exactly 8 bytes and round-trips") {
    const std::string path = "empty.psw";
    save_weights(path, WeightStore{});
    std::FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f);
    std::fseek(f, 0, SEEK_END);
    CHECK(std::ftell(f) == 8);
    std::fclose(f);
    CHECK(load_weights(path).tensors.empty());
    std::remove(path.c_str());
}

TEST_CASE("psw round-trip is bit-exact") {
    BackboneConfig cfg;
    cfg.stem_block_count = 2;
    cfg.sin_positions = {1};
    cfg.channels = {4, 8};
    const WeightStore w = init_weights(build_layer_plan(cfg, HeadSpec{}, Repr::slice), 77);
    const std::string path = "roundtrip.psw";
    save_weights(path, w);
    const WeightStore back = load_weights(path);
    CHECK(w == back);
    std::remove(path.c_str());
}

TEST_CASE("psw error paths: magic, truncation, duplicate names") {
    const std::string path = "bad.psw";
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f);
    std::fwrite("NOPE\x01\x00\x00\x00", 1, 8, f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("BadMagic"), Error);

    WeightTensor t;
    t.dims = {2};
    t.values = {1.f, 2.f};
    WeightStore w;
    w.add("x", t);
    save_weights(path, w);
    // chop the last byte
    f = std::fopen(path.c_str(), "rb");
    std::fseek(f, 0, SEEK_END);
    const long n = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<char> buf(static_cast<std::size_t>(n));
    REQUIRE(std::fread(buf.data(), 1, buf.size(), f) == buf.size());
    std::fclose(f);
    f = std::fopen(path.c_str(), "wb");
    std::fwrite(buf.data(), 1, buf.size() - 1, f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(load_weights(path), doctest::Contains("TruncatedFile"), Error);

    CHECK_THROWS_WITH_AS(w.add("x", t), doctest::Contains("DuplicateTensorName"), Error);
    std::remove(path.c_str());
}

TEST_CASE("bench report JSON round-trips through its own parser") {
    BenchReport r;
    r.slice.param_count = 123;
    r.slice.backbone_ms_mean = 1.5;
    r.slice.backbone_ms_median = 1.25;
    r.slice.e2e_ms_mean = 2.5;
    r.slice.e2e_ms_median = 2.25;
    r.slice.peak_active_sites = 999;
    r.slice.peak_feature_bytes = 4096;
    r.voxel3d.param_count = 456;
    r.slice_param_ratio = 123.0 / 456.0;
    r.slice_speedup = 1.7;
    const BenchReport back = BenchReport::from_json(r.to_json());
    CHECK(back.slice.param_count == 123);
    CHECK(back.slice.backbone_ms_median == 1.25);
    CHECK(back.voxel3d.param_count == 456);
    REQUIRE(back.slice_param_ratio.has_value());
    CHECK(*back.slice_param_ratio == doctest::Approx(123.0 / 456.0));
    REQUIRE(back.slice_speedup.has_value());
    CHECK(!back.pillar_speedup.has_value());
    CHECK(back.memory_note.find("proxy") != std::string::npos);
}

TEST_CASE("matched-config fairness check passes for defaults") {
    CHECK_NOTHROW(check_matched_configs(BackboneConfig{}, HeadSpec{}));
}

TEST_CASE("run_bench on a tiny scene: determinism of counts, report sanity") {
    PipelineConfig cfg;
    cfg.grid.range_min = {-8, -8, -1};
    cfg.grid.range_max = {8, 8, 2};
    cfg.grid.voxel_size = {0.25, 0.25, 0.375};
    cfg.backbone.channels = {8, 12, 16, 20};
    cfg.head.bev_stride = 8;
    cfg.scene.seed = 5;
    cfg.scene.n_objects = 2;
    cfg.scene.ground_points = 2000;
    cfg.scene.area_min = {-8, -8};
    cfg.scene.area_max = {8, 8};
    cfg.scene.object_size_min = {1.0, 0.8, 0.8};
    cfg.scene.object_size_max = {2.0, 1.2, 1.2};

    const BenchReport a = run_bench(cfg, 3, 11);
    const BenchReport b = run_bench(cfg, 3, 11);
    CHECK(a.slice.param_count == b.slice.param_count);
    CHECK(a.pillar.param_count == b.pillar.param_count);
    CHECK(a.voxel3d.param_count == b.voxel3d.param_count);
    CHECK(a.slice.peak_active_sites == b.slice.peak_active_sites);
    CHECK(a.voxel3d.peak_active_sites == b.voxel3d.peak_active_sites);
    CHECK(a.slice.peak_feature_bytes == b.slice.peak_feature_bytes);

    CHECK(a.slice.param_count < a.voxel3d.param_count);
    CHECK(a.pillar.param_count <= a.slice.param_count);
    CHECK(a.slice.backbone_ms_median > 0);
    REQUIRE(a.slice_param_ratio.has_value());
    CHECK(*a.slice_param_ratio < 1.0);

    // report serialization of a real run
    const BenchReport back = BenchReport::from_json(a.to_json());
    CHECK(back.slice.param_count == a.slice.param_count);
    CHECK(back.voxel3d.peak_feature_bytes == a.voxel3d.peak_feature_bytes);
}

TEST_CASE("run_bench rejects too few repetitions") {
    PipelineConfig cfg;
    CHECK_THROWS_AS(run_bench(cfg, 2, 1), Error);
}

TEST_CASE("config parser basics") {
    const Config cfg = Config::parse_text("a.x = 5\n# comment\nb.y = 1.5, 2.5 # tail\nflag = true\n");
    CHECK(cfg.get_int("a.x", 0) == 5);
    CHECK(cfg.get_doubles("b.y", {}) == std::vector<double>{1.5, 2.5});
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_int("missing", 7) == 7);
    CHECK_THROWS_AS(Config::parse_text("novalue\n"), Error);
    CHECK_THROWS_AS(Config::parse_text("a = 1\na = 2\n"), Error);
    CHECK_THROWS_AS(cfg.require_known({"a.x"}), Error);
}

TEST_CASE("pipeline config applies keys over defaults and rejects unknowns") {
    const Config cfg = Config::parse_text(
        "backbone.channels = 4, 8, 12, 16\nhead.num_classes = 2\nscene.seed = 9\n");
    const PipelineConfig pc = load_pipeline_config(cfg);
    CHECK(pc.backbone.channels == std::vector<int>{4, 8, 12, 16});
    CHECK(pc.head.num_classes == 2);
    CHECK(pc.scene.seed == 9);
    CHECK(pc.grid.grid_dims()[0] == 40); // defaults survive

    CHECK_THROWS_WITH_AS(load_pipeline_config(Config::parse_text("bogus.key = 1\n")),
                         doctest::Contains("ConfigError"), Error);
    // sin positions can be emptied
    const PipelineConfig no_sin = load_pipeline_config(
        Config::parse_text("backbone.sin_positions =\nbackbone.channels = 16\n"));
    CHECK(no_sin.backbone.sin_positions.empty());
}

} // TEST_SUITE
