#include <doctest.h>

#include <set>

#include "pointslice/dense.hpp"
#include "pointslice/sparse_tensor.hpp"
#include "test_util.hpp"

using namespace ps;
using testutil::random_tensor;

TEST_SUITE("sparse") {

TEST_CASE("from_coords accepts the empty tensor") {
    const SparseTensor t = from_coords({}, {}, 8, {4, 4, 4}, 1);
    CHECK(t.n_active() == 0);
    CHECK(t.channels == 8);
    CHECK(t.is_3d());
}

TEST_CASE("from_coords accepts a single site") {
    std::vector<float> f(8, 1.5f);
    const SparseTensor t = from_coords({0, 1, 2, 3}, f, 8, {4, 4, 4}, 1);
    CHECK(t.n_active() == 1);
    CHECK(t.coord(0)[3] == 3);
}

TEST_CASE("from_coords rejects duplicates") {
    CHECK_THROWS_WITH_AS(from_coords({0, 0, 0, 0, 0, 0, 0, 0}, {1.f, 2.f}, 1, {4, 4, 4}, 1),
                         doctest::Contains("DuplicateCoordinate"), Error);
}

TEST_CASE("from_coords rejects out-of-bounds and shape mismatches") {
    CHECK_THROWS_AS(from_coords({0, 4, 0, 0}, {1.f}, 1, {4, 4, 4}, 1), Error);
    CHECK_THROWS_AS(from_coords({1, 0, 0, 0}, {1.f}, 1, {4, 4, 4}, 1), Error); // batch
    CHECK_THROWS_AS(from_coords({0, 0, -1, 0}, {1.f}, 1, {4, 4, 4}, 1), Error);
    CHECK_THROWS_AS(from_coords({0, 0, 0, 0}, {1.f, 2.f}, 1, {4, 4, 4}, 1), Error); // rows
    // slice_height must divide batch_size
    CHECK_THROWS_AS(from_coords({0, 0, 0}, {1.f}, 1, {4, 4}, 3, 2), Error);
}

TEST_CASE("construction fuzz: no violating tensor is accepted") {
    SplitMix64 rng(7);
    int rejected = 0;
    for (int it = 0; it < 300; ++it) {
        SparseTensor base = random_tensor(rng, {6, 6, 6}, 2, 3, 0.05);
        if (base.n_active() == 0) continue;
        std::vector<std::int32_t> coords = base.coords;
        const auto mode = rng.uniform_int(0, 2);
        const std::int64_t row = rng.uniform_int(0, base.n_active() - 1);
        if (mode == 0) { // duplicate an existing row
            coords.insert(coords.end(), coords.begin() + row * 4, coords.begin() + (row + 1) * 4);
            base.features.insert(base.features.end(), 3, 0.0f);
        } else if (mode == 1) { // push a coordinate past its bound
            const int axis = static_cast<int>(rng.uniform_int(1, 3));
            coords[row * 4 + axis] = 6;
        } else { // negative batch
            coords[row * 4] = -1;
        }
        CHECK_THROWS_AS(
            from_coords(std::move(coords), base.features, 3, base.spatial_shape, 2), Error);
        ++rejected;
    }
    CHECK(rejected > 100);
}

TEST_CASE("to_dense of empty tensor is all zeros") {
    const SparseTensor t = from_coords({}, {}, 1, {2, 2}, 1);
    const DenseTensor a = to_dense(t);
    CHECK(a.shape == std::vector<std::int64_t>{1, 2, 2, 1});
    for (float v : a.data) CHECK(v == 0.0f);
}

TEST_CASE("to_dense places a single site") {
    const SparseTensor t = from_coords({0, 1, 1}, {5.0f}, 1, {2, 2}, 1);
    const DenseTensor a = to_dense(t);
    int nonzero = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != 0.0f) {
            ++nonzero;
            CHECK(a.data[i] == 5.0f);
            CHECK(i == 3); // (0,1,1,0) row-major in 1x2x2x1
        }
    CHECK(nonzero == 1);
}

TEST_CASE("to_dense rejects oversized grids") {
    const SparseTensor t = from_coords({}, {}, 64, {1024, 1024}, 32);
    CHECK_THROWS_WITH_AS(to_dense(t), doctest::Contains("OracleSizeExceeded"), Error);
}

TEST_CASE("from_dense on zeros and a single channel hit") {
    DenseTensor a;
    a.shape = {1, 4, 4, 2};
    a.data.assign(32, 0.0f);
    CHECK(from_dense(a).n_active() == 0);
    a.data[(3 * 4 + 2) * 2 + 0] = 1.0f; // position (0,3,2), channel 0
    const SparseTensor t = from_dense(a);
    REQUIRE(t.n_active() == 1);
    CHECK(t.coord(0)[1] == 3);
    CHECK(t.coord(0)[2] == 2);
}

TEST_CASE("roundtrip: from_dense(to_dense(t)) == t on random 2D tensors") {
    SplitMix64 rng(11);
    for (int it = 0; it < 100; ++it) {
        const SparseTensor t = random_tensor(rng, {8, 8}, 2, 3, 0.2);
        // random_tensor never emits all-zero rows with probability ~1, but
        // force nonzero to keep the dense active-set definition aligned
        SparseTensor s = t;
        for (std::int64_t i = 0; i < s.n_active(); ++i)
            if (s.feature(i)[0] == 0.0f) s.feature(i)[0] = 1.0f;
        CHECK(tensors_equal(from_dense(to_dense(s)), s));
    }
}

TEST_CASE("roundtrip: to_dense(from_dense(a)) == a on random arrays") {
    SplitMix64 rng(13);
    for (int it = 0; it < 100; ++it) {
        DenseTensor a;
        a.shape = {2, 5, 6, 3};
        a.data.resize(static_cast<std::size_t>(a.size()));
        for (float& v : a.data)
            v = rng.next_double() < 0.7 ? 0.0f : rng.uniform_f(-2.0, 2.0);
        const DenseTensor b = to_dense(from_dense(a));
        CHECK(b.shape == a.shape);
        CHECK(b.data == a.data);
    }
}

TEST_CASE("pack_key basics") {
    const std::int32_t zero4[4] = {0, 0, 0, 0};
    CHECK(pack_key(zero4) == 0);
    const std::int32_t c[4] = {3, 7, 1, 9};
    std::int32_t back[4];
    unpack_key(pack_key(c), 4, back);
    CHECK(std::equal(c, c + 4, back));
    const std::int32_t big[4] = {0, 1 << 16, 0, 0};
    CHECK_THROWS_WITH_AS(pack_key(big), doctest::Contains("ComponentOverflow"), Error);
}

TEST_CASE("pack_key is collision-free over random in-range coords") {
    SplitMix64 rng(17);
    std::set<std::uint64_t> seen3, seen4;
    std::set<std::vector<std::int32_t>> coords3, coords4;
    for (int i = 0; i < 100000; ++i) {
        std::int32_t c4[4], c3[3];
        for (int a = 0; a < 4; ++a)
            c4[a] = static_cast<std::int32_t>(rng.uniform_int(0, (1 << 16) - 1));
        c3[0] = static_cast<std::int32_t>(rng.uniform_int(0, (1 << 22) - 1));
        c3[1] = static_cast<std::int32_t>(rng.uniform_int(0, (1 << 21) - 1));
        c3[2] = static_cast<std::int32_t>(rng.uniform_int(0, (1 << 21) - 1));
        if (coords4.insert({c4[0], c4[1], c4[2], c4[3]}).second)
            CHECK(seen4.insert(pack_key(c4)).second);
        if (coords3.insert({c3[0], c3[1], c3[2]}).second)
            CHECK(seen3.insert(pack_key(c3)).second);
    }
}

TEST_CASE("pack_key preserves lexicographic order") {
    SplitMix64 rng(19);
    for (int i = 0; i < 1000; ++i) {
        std::int32_t a[4], b[4];
        for (int k = 0; k < 4; ++k) {
            a[k] = static_cast<std::int32_t>(rng.uniform_int(0, 100));
            b[k] = static_cast<std::int32_t>(rng.uniform_int(0, 100));
        }
        const bool lex = std::lexicographical_compare(a, a + 4, b, b + 4);
        CHECK((pack_key(a) < pack_key(b)) == lex);
    }
}

TEST_CASE("canonical order: construction sorts rows") {
    const SparseTensor t =
        from_coords({0, 3, 3, 3, 0, 1, 2, 3, 0, 2, 0, 0}, {3.f, 1.f, 2.f}, 1, {4, 4, 4}, 1);
    CHECK(t.coord(0)[1] == 1);
    CHECK(t.coord(1)[1] == 2);
    CHECK(t.coord(2)[1] == 3);
    CHECK(t.feature(0)[0] == 1.f);
    CHECK(t.feature(2)[0] == 3.f);
}

} // TEST_SUITE
