#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "pointslice/dense.hpp"
#include "pointslice/oracle.hpp"
#include "pointslice/parallel.hpp"
#include "pointslice/slice.hpp"
#include "test_util.hpp"

using namespace ps;
using testutil::coord_set;
using testutil::identity_layer;
using testutil::random_layer;
using testutil::random_tensor;

namespace {

// Brute-force O(N^2 * K) enumeration of submanifold pairs: (i -> j) at
// offset o iff coord(i) == coord(j) + o - k/2 in the same batch entry.
std::set<std::tuple<int, int, int>> brute_subm_pairs(const SparseTensor& t,
                                                     std::span<const int> kernel) {
    std::set<std::tuple<int, int, int>> out;
    const int sd = t.spatial_dims();
    int kvol = 1;
    for (int e : kernel) kvol *= e;
    for (std::int64_t j = 0; j < t.n_active(); ++j)
        for (std::int64_t i = 0; i < t.n_active(); ++i)
            for (int o = 0; o < kvol; ++o) {
                int rem = o;
                bool match = t.coord(i)[0] == t.coord(j)[0];
                std::vector<int> off(static_cast<std::size_t>(sd));
                for (int a = sd - 1; a >= 0; --a) {
                    off[static_cast<std::size_t>(a)] = rem % kernel[a];
                    rem /= kernel[a];
                }
                for (int a = 0; a < sd && match; ++a)
                    match = t.coord(i)[a + 1] ==
                            t.coord(j)[a + 1] + off[static_cast<std::size_t>(a)] - kernel[a] / 2;
                if (match) out.insert({o, static_cast<int>(i), static_cast<int>(j)});
            }
    return out;
}

std::set<std::tuple<int, int, int>> rulebook_pairs(const Rulebook& rb) {
    std::set<std::tuple<int, int, int>> out;
    for (std::size_t o = 0; o < rb.pairs.size(); ++o)
        for (const auto& [i, j] : rb.pairs[o]) out.insert({static_cast<int>(o), i, j});
    return out;
}

float max_diff_vs_dense(const SparseTensor& sparse_out, const DenseTensor& dense_masked) {
    const DenseTensor lhs = to_dense(sparse_out);
    REQUIRE(lhs.shape == dense_masked.shape);
    float m = 0;
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        m = std::max(m, std::fabs(lhs.data[i] - dense_masked.data[i]));
    return m;
}

} // namespace

TEST_SUITE("spconv") {

TEST_CASE("subm rulebook: isolated site pairs only with the center offset") {
    for (const int k : {3, 5}) {
        const SparseTensor t = from_coords({0, 4, 4}, {1.f}, 1, {9, 9}, 1);
        const Rulebook rb = build_rulebook_subm(t, std::vector<int>{k, k});
        CHECK(rb.pair_count() == 1);
        const int center = (k * k) / 2;
        CHECK(rb.pairs[static_cast<std::size_t>(center)].size() == 1);
    }
}

TEST_CASE("subm rulebook: two sites one apart give 2 center + 2 cross pairs") {
    const SparseTensor t = from_coords({0, 3, 3, 0, 3, 4}, {1.f, 2.f}, 1, {8, 8}, 1);
    const Rulebook rb = build_rulebook_subm(t, std::vector<int>{3, 3});
    CHECK(rb.pair_count() == 4);
    CHECK(rb.pairs[4].size() == 2); // center offset
}

TEST_CASE("subm rulebook rejects even kernels") {
    const SparseTensor t = from_coords({0, 0, 0}, {1.f}, 1, {4, 4}, 1);
    CHECK_THROWS_WITH_AS(build_rulebook_subm(t, std::vector<int>{2, 2}),
                         doctest::Contains("EvenKernel"), Error);
}

TEST_CASE("subm rulebook matches brute-force enumeration") {
    SplitMix64 rng(37);
    for (int it = 0; it < 30; ++it) {
        const SparseTensor t = random_tensor(rng, {8, 8}, 2, 1, 0.25);
        const Rulebook rb = build_rulebook_subm(t, std::vector<int>{3, 3});
        CHECK(rulebook_pairs(rb) == brute_subm_pairs(t, std::vector<int>{3, 3}));
    }
    for (int it = 0; it < 10; ++it) {
        const SparseTensor t = random_tensor(rng, {4, 6, 6}, 1, 1, 0.15);
        const Rulebook rb = build_rulebook_subm(t, std::vector<int>{3, 3, 3});
        CHECK(rulebook_pairs(rb) == brute_subm_pairs(t, std::vector<int>{3, 3, 3}));
    }
}

TEST_CASE("strided rulebook: empty input gives empty output") {
    const SparseTensor t = from_coords({}, {}, 1, {16, 16}, 1);
    const Rulebook rb = build_rulebook_strided(t, std::vector<int>{3, 3}, std::vector<int>{2, 2});
    CHECK(rb.n_out == 0);
    CHECK(rb.pair_count() == 0);
}

TEST_CASE("strided rulebook: single site at (5,3), k3 s2 on 16x16") {
    const SparseTensor t = from_coords({0, 5, 3}, {1.f}, 1, {16, 16}, 1);
    const Rulebook rb = build_rulebook_strided(t, std::vector<int>{3, 3}, std::vector<int>{2, 2});
    CHECK(rb.output_shape == std::vector<std::int32_t>{8, 8});
    std::set<std::pair<int, int>> sites;
    for (std::int64_t r = 0; r < rb.n_out; ++r)
        sites.insert({rb.output_coords[r * 3 + 1], rb.output_coords[r * 3 + 2]});
    CHECK(sites == std::set<std::pair<int, int>>{{2, 1}, {2, 2}, {3, 1}, {3, 2}});
}

TEST_CASE("strided rulebook active set matches the dense occupancy mask") {
    SplitMix64 rng(41);
    for (int it = 0; it < 25; ++it) {
        const SparseTensor t = random_tensor(rng, {10, 10}, 2, 1, 0.15);
        const Rulebook rb =
            build_rulebook_strided(t, std::vector<int>{3, 3}, std::vector<int>{2, 2});

        ConvLayer ones = random_layer(rng, "occ", {3, 3}, 1, 1, {2, 2}, ConvKind::strided, false);
        for (float& w : ones.weights) w = 1.0f;
        const DenseTensor occ_out = oracle::dense_conv(oracle::occupancy(t), ones);

        std::set<std::vector<std::int32_t>> dense_sites;
        const auto st = occ_out.strides();
        for (std::int64_t b = 0; b < occ_out.shape[0]; ++b)
            for (std::int64_t y = 0; y < occ_out.shape[1]; ++y)
                for (std::int64_t x = 0; x < occ_out.shape[2]; ++x)
                    if (occ_out.data[static_cast<std::size_t>(b * st[0] + y * st[1] + x * st[2])] >
                        0.0f)
                        dense_sites.insert({static_cast<std::int32_t>(b),
                                            static_cast<std::int32_t>(y),
                                            static_cast<std::int32_t>(x)});
        std::set<std::vector<std::int32_t>> sparse_sites;
        for (std::int64_t r = 0; r < rb.n_out; ++r)
            sparse_sites.insert({rb.output_coords[r * 3], rb.output_coords[r * 3 + 1],
                                 rb.output_coords[r * 3 + 2]});
        CHECK(sparse_sites == dense_sites);
    }
}

TEST_CASE("conv_forward: identity kernel reproduces features") {
    SplitMix64 rng(43);
    const SparseTensor t = random_tensor(rng, {8, 8}, 2, 4, 0.2);
    const ConvLayer id = identity_layer("id", {3, 3}, 4, {1, 1}, ConvKind::submanifold);
    CHECK(tensors_equal(subm_conv(t, id), t));
}

TEST_CASE("conv_forward: all-ones kernel sums adjacent unit features") {
    ConvLayer ones;
    ones.name = "ones";
    ones.kernel_dims = {3, 3};
    ones.in_channels = ones.out_channels = 1;
    ones.stride = {1, 1};
    ones.kind = ConvKind::submanifold;
    ones.weights.assign(9, 1.0f);
    const SparseTensor t = from_coords({0, 3, 3, 0, 3, 4}, {1.f, 1.f}, 1, {8, 8}, 1);
    const SparseTensor out = subm_conv(t, ones);
    CHECK(out.feature(0)[0] == 2.0f);
    CHECK(out.feature(1)[0] == 2.0f);
}

TEST_CASE("submanifold preserves the active set exactly") {
    SplitMix64 rng(47);
    for (int it = 0; it < 40; ++it) {
        const SparseTensor t = random_tensor(rng, {9, 9}, 2, 3, rng.uniform(0.02, 0.4));
        const ConvLayer l = random_layer(rng, "s", {3, 3}, 3, 5, {1, 1}, ConvKind::submanifold);
        const SparseTensor out = subm_conv(t, l);
        CHECK(out.coords == t.coords);
    }
}

TEST_CASE("dense equivalence: submanifold 2D and 3D") {
    SplitMix64 rng(53);
    for (int it = 0; it < 30; ++it) {
        const bool threed = it % 2 == 0;
        const SparseTensor t = threed ? random_tensor(rng, {5, 7, 7}, 2, 3, 0.1)
                                      : random_tensor(rng, {12, 12}, 2, 3, 0.15);
        const std::vector<int> kd = threed ? std::vector<int>{3, 3, 3} : std::vector<int>{3, 3};
        const std::vector<int> s1(kd.size(), 1);
        const ConvLayer l = random_layer(rng, "s", kd, 3, 4, s1, ConvKind::submanifold);
        const SparseTensor out = subm_conv(t, l);
        // oracle: dense conv masked to the input active set
        const DenseTensor ref = oracle::mask_to_sites(oracle::dense_conv(to_dense(t), l), t);
        CHECK(max_diff_vs_dense(out, ref) <= 1e-4f);
    }
}

TEST_CASE("dense equivalence: strided 2D and 3D") {
    SplitMix64 rng(59);
    for (int it = 0; it < 30; ++it) {
        const bool threed = it % 2 == 0;
        const SparseTensor t = threed ? random_tensor(rng, {6, 8, 8}, 1, 2, 0.1)
                                      : random_tensor(rng, {10, 10}, 2, 2, 0.2);
        const std::vector<int> kd = threed ? std::vector<int>{3, 3, 3} : std::vector<int>{3, 3};
        const std::vector<int> s2(kd.size(), 2);
        const ConvLayer l = random_layer(rng, "st", kd, 2, 3, s2, ConvKind::strided);
        const SparseTensor out = strided_conv(t, l);
        const DenseTensor ref = oracle::mask_to_sites(oracle::dense_conv(to_dense(t), l), out);
        CHECK(max_diff_vs_dense(out, ref) <= 1e-4f);
    }
}

TEST_CASE("transposed conv restores the recorded active set") {
    SplitMix64 rng(61);
    const SparseTensor fine = from_coords({0, 5, 3}, {2.f}, 1, {16, 16}, 1);
    const ConvLayer down = identity_layer("down", {3, 3}, 1, {2, 2}, ConvKind::strided);
    const SparseTensor coarse = strided_conv(fine, down);

    ConvLayer up = identity_layer("up", {3, 3}, 1, {2, 2}, ConvKind::transposed);
    const SparseTensor restored = transposed_conv_forward(coarse, up, &fine);
    CHECK(restored.coords == fine.coords);

    ConvLayer zero_up = up;
    std::fill(zero_up.weights.begin(), zero_up.weights.end(), 0.0f);
    const SparseTensor zeroed = transposed_conv_forward(coarse, zero_up, &fine);
    CHECK(zeroed.coords == fine.coords);
    for (float v : zeroed.features) CHECK(v == 0.0f);

    CHECK_THROWS_WITH_AS(transposed_conv_forward(coarse, up, nullptr),
                         doctest::Contains("MissingPairedActiveSet"), Error);
}

TEST_CASE("dense equivalence: transposed conv masked to the recorded set") {
    SplitMix64 rng(67);
    for (int it = 0; it < 20; ++it) {
        const bool threed = it % 2 == 0;
        const SparseTensor fine = threed ? random_tensor(rng, {4, 8, 8}, 1, 2, 0.1)
                                         : random_tensor(rng, {12, 12}, 2, 2, 0.2);
        const std::vector<int> kd = threed ? std::vector<int>{3, 3, 3} : std::vector<int>{3, 3};
        const std::vector<int> s2(kd.size(), 2);
        const ConvLayer down = random_layer(rng, "d", kd, 2, 3, s2, ConvKind::strided);
        const SparseTensor coarse = strided_conv(fine, down);
        if (coarse.n_active() == 0) continue;

        const ConvLayer up = random_layer(rng, "u", kd, 3, 2, s2, ConvKind::transposed);
        const SparseTensor out = transposed_conv_forward(coarse, up, &fine);
        CHECK(out.coords == fine.coords);

        std::vector<std::int64_t> fine_spatial;
        for (auto s : fine.spatial_shape) fine_spatial.push_back(s);
        const DenseTensor ref = oracle::mask_to_sites(
            oracle::dense_transposed_conv(to_dense(coarse), up, fine_spatial), fine);
        CHECK(max_diff_vs_dense(out, ref) <= 1e-4f);
    }
}

TEST_CASE("depth-1 equivalence: 2D conv on slices == 1xkxk 3D conv on voxels") {
    SplitMix64 rng(71);
    for (int it = 0; it < 40; ++it) {
        const int k = it % 2 == 0 ? 3 : 5;
        const SparseTensor t = random_tensor(rng, {6, 10, 10}, 2, 3, 0.1);

        const ConvLayer l3 =
            random_layer(rng, "c3", {1, k, k}, 3, 4, {1, 1, 1}, ConvKind::submanifold);
        ConvLayer l2;
        l2.name = "c2";
        l2.kernel_dims = {k, k};
        l2.in_channels = 3;
        l2.out_channels = 4;
        l2.stride = {1, 1};
        l2.kind = ConvKind::submanifold;
        l2.weights = l3.weights; // same offset-major payload: z extent is 1
        l2.bias = l3.bias;

        const SparseTensor via_slices = subm_conv(slice(t), l2);
        const SparseTensor via_voxels = slice(subm_conv(t, l3));
        CHECK(via_slices.coords == via_voxels.coords);
        CHECK(max_feature_diff(via_slices, via_voxels) <= 1e-5f);
    }
}

TEST_CASE("linearity of conv_forward on matched active sets") {
    SplitMix64 rng(73);
    for (int it = 0; it < 20; ++it) {
        const SparseTensor t1 = random_tensor(rng, {10, 10}, 1, 3, 0.2);
        SparseTensor t2 = t1;
        for (float& f : t2.features) f = rng.uniform_f(-1.0, 1.0);
        const float a = rng.uniform_f(-2.0, 2.0);

        const ConvLayer l =
            random_layer(rng, "lin", {3, 3}, 3, 2, {1, 1}, ConvKind::submanifold, false);
        SparseTensor combo = t1;
        for (std::size_t i = 0; i < combo.features.size(); ++i)
            combo.features[i] = a * t1.features[i] + t2.features[i];

        const SparseTensor lhs = subm_conv(combo, l);
        const SparseTensor o1 = subm_conv(t1, l);
        const SparseTensor o2 = subm_conv(t2, l);
        SparseTensor rhs = o1;
        for (std::size_t i = 0; i < rhs.features.size(); ++i)
            rhs.features[i] = a * o1.features[i] + o2.features[i];
        CHECK(max_feature_diff(lhs, rhs) <= 1e-5f);
    }
}

TEST_CASE("determinism: identical results for any worker count") {
    SplitMix64 rng(79);
    const SparseTensor t = random_tensor(rng, {16, 16}, 2, 8, 0.3);
    const ConvLayer l = random_layer(rng, "w", {3, 3}, 8, 8, {1, 1}, ConvKind::submanifold);
    set_workers(1);
    const SparseTensor a = subm_conv(t, l);
    set_workers(4);
    const SparseTensor b = subm_conv(t, l);
    const SparseTensor c = subm_conv(t, l);
    set_workers(1);
    CHECK(tensors_equal(a, b));
    CHECK(tensors_equal(a, c));
}

TEST_CASE("geometry and channel errors") {
    SplitMix64 rng(83);
    const SparseTensor t = random_tensor(rng, {8, 8}, 1, 3, 0.2);
    const ConvLayer wrong_cin =
        random_layer(rng, "w", {3, 3}, 4, 2, {1, 1}, ConvKind::submanifold);
    CHECK_THROWS_WITH_AS(subm_conv(t, wrong_cin), doctest::Contains("ChannelMismatch"), Error);

    const ConvLayer ok = random_layer(rng, "ok", {3, 3}, 3, 2, {1, 1}, ConvKind::submanifold);
    const SparseTensor other = random_tensor(rng, {8, 8}, 1, 3, 0.4);
    const Rulebook rb = build_rulebook_subm(other, ok.kernel_dims);
    if (other.n_active() != t.n_active())
        CHECK_THROWS_WITH_AS(conv_forward(t, ok, rb), doctest::Contains("GeometryMismatch"),
                             Error);
}

} // TEST_SUITE
