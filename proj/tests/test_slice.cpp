#include <doctest.h>

#include "pointslice/conv.hpp"
#include "pointslice/slice.hpp"
#include "test_util.hpp"

using namespace ps;
using testutil::random_tensor;

TEST_SUITE("slice") {

TEST_CASE("degenerate single-slice grid: b2d equals b") {
    const SparseTensor t = from_coords({0, 0, 2, 3, 1, 0, 1, 1}, {1.f, 2.f}, 1, {1, 4, 4}, 2);
    const SparseTensor s = slice(t);
    CHECK(s.batch_size == 2);
    REQUIRE(s.slice_height.has_value());
    CHECK(*s.slice_height == 1);
    CHECK(s.coord(0)[0] == 0);
    CHECK(s.coord(1)[0] == 1);
    CHECK(s.coord(0)[1] == 2);
    CHECK(s.coord(0)[2] == 3);
}

TEST_CASE("direct fold arithmetic: (1,3,5,6) with H=4 maps to (7,5,6)") {
    const SparseTensor t = from_coords({1, 3, 5, 6}, {1.f}, 1, {4, 8, 8}, 2);
    const SparseTensor s = slice(t);
    CHECK(s.batch_size == 8);
    CHECK(s.coord(0)[0] == 7);
    CHECK(s.coord(0)[1] == 5);
    CHECK(s.coord(0)[2] == 6);
    CHECK(s.spatial_shape == std::vector<std::int32_t>{8, 8});
}

TEST_CASE("unfold arithmetic: b2d=7 with H=4 maps to (b=1, z=3)") {
    const SparseTensor s = from_coords({7, 5, 6}, {1.f}, 1, {8, 8}, 8, 4);
    const SparseTensor t = unslice(s);
    CHECK(t.coord(0)[0] == 1);
    CHECK(t.coord(0)[1] == 3);
    CHECK(t.batch_size == 2);
    CHECK(t.spatial_shape == std::vector<std::int32_t>{4, 8, 8});
}

TEST_CASE("unfold with H=1 puts everything in slice zero") {
    const SparseTensor s = from_coords({1, 2, 3}, {1.f}, 1, {4, 4}, 3, 1);
    const SparseTensor t = unslice(s);
    CHECK(t.coord(0)[0] == 1);
    CHECK(t.coord(0)[1] == 0);
}

TEST_CASE("unslice error paths") {
    const SparseTensor no_meta = from_coords({0, 0, 0}, {1.f}, 1, {4, 4}, 4);
    CHECK_THROWS_WITH_AS(unslice(no_meta), doctest::Contains("MissingSliceHeight"), Error);
    const SparseTensor t3d = from_coords({}, {}, 1, {2, 2, 2}, 1);
    CHECK_THROWS_AS(unslice(t3d), Error);
}

TEST_CASE("roundtrip: unslice(slice(t)) is bit-exact over random 3D tensors") {
    SplitMix64 rng(23);
    for (int it = 0; it < 300; ++it) {
        const std::int32_t h = static_cast<std::int32_t>(rng.uniform_int(1, 12));
        const std::int32_t w = static_cast<std::int32_t>(rng.uniform_int(1, 24));
        const std::int32_t l = static_cast<std::int32_t>(rng.uniform_int(1, 24));
        const std::int32_t b = static_cast<std::int32_t>(rng.uniform_int(1, 4));
        const SparseTensor t = random_tensor(rng, {h, w, l}, b, 4, rng.uniform(0.01, 0.3));
        const SparseTensor s = slice(t);
        CHECK(s.n_active() == t.n_active());
        CHECK(tensors_equal(unslice(s), t));
    }
}

TEST_CASE("roundtrip: slice(unslice(s)) is bit-exact over random slice tensors") {
    SplitMix64 rng(29);
    for (int it = 0; it < 300; ++it) {
        const std::int32_t h = static_cast<std::int32_t>(rng.uniform_int(1, 8));
        const std::int32_t b = static_cast<std::int32_t>(rng.uniform_int(1, 3));
        SparseTensor s = random_tensor(rng, {16, 16}, b * h, 2, 0.1);
        s.slice_height = h;
        CHECK(tensors_equal(slice(unslice(s)), s));
    }
}

TEST_CASE("a 2D convolution never leaks across slices") {
    // impulse response: one active site, dense all-ones kernel; every output
    // stays in the impulse's slice because conv matches on the batch index
    SplitMix64 rng(31);
    for (int it = 0; it < 50; ++it) {
        const std::int32_t h = 4;
        std::vector<std::int32_t> coords;
        std::vector<float> feats;
        // impulse in slice z=1 of frame 0 plus bystander sites in other slices
        coords.insert(coords.end(), {0, 1, 5, 5});
        feats.push_back(1.0f);
        for (std::int32_t z = 0; z < h; ++z) {
            if (z == 1) continue;
            coords.insert(coords.end(), {0, z, 5, 5});
            feats.push_back(0.0f);
        }
        const SparseTensor t =
            from_coords(std::move(coords), std::move(feats), 1, {h, 12, 12}, 1);
        const SparseTensor s = slice(t);

        ConvLayer ones = testutil::random_layer(rng, "ones", {3, 3}, 1, 1, {1, 1},
                                                ConvKind::submanifold, false);
        for (float& w : ones.weights) w = 1.0f;
        const SparseTensor out = subm_conv(s, ones);
        for (std::int64_t i = 0; i < out.n_active(); ++i) {
            const bool impulse_slice = out.coord(i)[0] == 0 * h + 1;
            if (!impulse_slice) CHECK(out.feature(i)[0] == 0.0f);
        }
    }
}

} // TEST_SUITE
