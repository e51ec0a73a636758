#include <doctest.h>

#include <random>

#include "conmo/mask_algebra.hpp"
#include "conmo/synth.hpp"
#include "oracles.hpp"

using namespace conmo;

namespace {

RegionMask mask3(unsigned bits) {
    RegionMask m(3, 3);
    for (unsigned k = 0; k < 9; ++k) m.set(k / 3, k % 3, (bits >> k) & 1u);
    return m;
}

SceneSpec crossing_scene() {
    SceneSpec s;
    s.dims = {6, 2, 16, 16};
    s.background_drift.assign(6, {});
    BlobSpec a{"A", {}, 3.0, {1.0, 0.0}};
    BlobSpec b{"B", {}, 3.0, {0.0, 1.0}};
    for (int f = 0; f < 6; ++f) {
        a.trajectory.push_back({8.0, 2.0 + 2.4 * f});
        b.trajectory.push_back({3.0 + 2.0 * f, 13.0 - 2.0 * f});
    }
    s.blobs = {a, b};
    return s;
}

}  // namespace

TEST_SUITE("mask-algebra") {

TEST_CASE("set operations on every pair of 3x3 masks") {
    for (unsigned p = 0; p < 512; ++p) {
        const auto a = mask3(p);
        const auto ga = oracle::to_grid(a);
        CHECK(mask_union(a, a) == a);
        CHECK(set_difference(a, a).empty());
        CHECK(set_difference(a, RegionMask(3, 3)) == a);
        CHECK(oracle::to_grid(complement(a)) == oracle::cellwise(oracle::Grid(3, std::vector<int>(3, 1)), ga, oracle::op_andnot));
        for (unsigned q = 0; q < 512; ++q) {
            const auto b = mask3(q);
            const auto gb = oracle::to_grid(b);
            const auto u = mask_union(a, b);
            if (oracle::to_grid(u) != oracle::cellwise(ga, gb, oracle::op_or)) FAIL("union " << p << " " << q);
            if (u != mask_union(b, a)) FAIL("union not commutative " << p << " " << q);
            if (oracle::to_grid(mask_intersection(a, b)) != oracle::cellwise(ga, gb, oracle::op_and))
                FAIL("intersection " << p << " " << q);
            if (oracle::to_grid(set_difference(a, b)) != oracle::cellwise(ga, gb, oracle::op_andnot))
                FAIL("difference " << p << " " << q);
            const RegionMask others[] = {b};
            if (oracle::to_grid(exclusive_region(a, others)) != oracle::exclusive(ga, {gb}))
                FAIL("exclusive " << p << " " << q);
        }
    }
}

TEST_CASE("union is associative") {
    std::mt19937_64 rng(1);
    for (int n = 0; n < 200; ++n) {
        auto a = oracle::random_mask(rng, 5, 6), b = oracle::random_mask(rng, 5, 6), c = oracle::random_mask(rng, 5, 6);
        CHECK(mask_union(mask_union(a, b), c) == mask_union(a, mask_union(b, c)));
    }
}

TEST_CASE("random 64x64 masks against the per-pixel oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> density(0.05, 0.95);
    for (int n = 0; n < 1000; ++n) {
        const auto a = oracle::random_mask(rng, 64, 64, density(rng));
        const auto b = oracle::random_mask(rng, 64, 64, density(rng));
        const auto c = oracle::random_mask(rng, 64, 64, density(rng));
        const auto ga = oracle::to_grid(a), gb = oracle::to_grid(b), gc = oracle::to_grid(c);
        REQUIRE(oracle::to_grid(mask_union(a, b)) == oracle::cellwise(ga, gb, oracle::op_or));
        REQUIRE(oracle::to_grid(set_difference(a, b)) == oracle::cellwise(ga, gb, oracle::op_andnot));
        const RegionMask others[] = {b, c};
        REQUIRE(oracle::to_grid(exclusive_region(a, others)) == oracle::exclusive(ga, {gb, gc}));
    }
}

TEST_CASE("union and difference examples") {
    RegionMask empty(4, 4);
    CHECK(mask_union(empty, empty).empty());
    std::mt19937_64 rng(8);
    for (int n = 0; n < 20; ++n) {
        auto a = oracle::random_mask(rng, 8, 8), b = oracle::random_mask(rng, 8, 8);
        CHECK(oracle::to_grid(mask_union(a, b)) == oracle::cellwise(oracle::to_grid(a), oracle::to_grid(b), oracle::op_or));
        CHECK(oracle::to_grid(set_difference(a, b)) ==
              oracle::cellwise(oracle::to_grid(a), oracle::to_grid(b), oracle::op_andnot));
    }
    CHECK_THROWS_AS(mask_union(RegionMask(2, 2), RegionMask(2, 3)), Error);
}

TEST_CASE("exclusive region examples") {
    std::mt19937_64 rng(9);
    auto s = oracle::random_mask(rng, 8, 8);
    CHECK(exclusive_region(s, {}) == s);
    const RegionMask full[] = {RegionMask(8, 8, true)};
    CHECK(exclusive_region(s, full).empty());
    // two others with partial overlap
    auto o1 = oracle::random_mask(rng, 8, 8, 0.3), o2 = oracle::random_mask(rng, 8, 8, 0.3);
    const RegionMask others[] = {o1, o2};
    CHECK(oracle::to_grid(exclusive_region(s, others)) ==
          oracle::exclusive(oracle::to_grid(s), {oracle::to_grid(o1), oracle::to_grid(o2)}));
}

TEST_CASE("pair region examples and symmetry") {
    std::mt19937_64 rng(10);
    std::vector<RegionMask> fr;
    for (int f = 0; f < 4; ++f) fr.push_back(oracle::random_mask(rng, 8, 8, 0.3));
    MaskTrack s("s", fr);
    CHECK(pair_region(s, {}, 2, 2) == s.frame(2));
    CHECK(pair_region(s, {}, 1, 3) == mask_union(s.frame(1), s.frame(3)));
    CHECK(union_pair_region(s, 1, 3) == mask_union(s.frame(1), s.frame(3)));
    CHECK_THROWS_AS(pair_region(s, {}, 0, 4), Error);

    std::vector<MaskTrack> all{s};
    for (int k = 0; k < 2; ++k) {
        std::vector<RegionMask> o;
        for (int f = 0; f < 4; ++f) o.push_back(oracle::random_mask(rng, 8, 8, 0.3));
        all.emplace_back("o" + std::to_string(k), o);
    }
    const std::span<const MaskTrack> others(all.data() + 1, 2);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(pair_region(s, others, i, j) == pair_region(s, others, j, i));
            CHECK(oracle::to_grid(pair_region(s, others, i, j)) == oracle::pair_region(all, 0, i, j));
        }
}

TEST_CASE("pair region on a rendered crossing scene") {
    const auto scene = render_scene(crossing_scene());
    const auto& m = scene.masks;
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<MaskTrack> others{m[1 - k]};
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                CHECK(oracle::to_grid(pair_region(m[k], others, i, j)) == oracle::pair_region(m, k, i, j));
    }
}

TEST_CASE("background track") {
    CHECK(background_track({}, 3, 4, 5) == MaskTrack("background", std::vector<RegionMask>(3, RegionMask(4, 5, true))));
    std::vector<RegionMask> left, right;
    for (int f = 0; f < 2; ++f) {
        RegionMask l(4, 4), r(4, 4);
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) (x < 2 ? l : r).set(y, x, true);
        left.push_back(l);
        right.push_back(r);
    }
    std::vector<MaskTrack> tiles{MaskTrack("l", left), MaskTrack("r", right)};
    for (const auto& f : background_track(tiles).frame_masks()) CHECK(f.empty());

    const auto scene = render_scene(crossing_scene());
    const auto bg = background_track(scene.masks);
    for (std::size_t f = 0; f < 6; ++f) {
        oracle::Grid expect(16, std::vector<int>(16, 1));
        for (const auto& s : scene.masks)
            for (std::size_t y = 0; y < 16; ++y)
                for (std::size_t x = 0; x < 16; ++x)
                    if (s.frame(f).at(y, x)) expect[y][x] = 0;
        CHECK(oracle::to_grid(bg.frame(f)) == expect);
        for (std::size_t g = 0; g < 6; ++g)
            CHECK(oracle::to_grid(background_pair_region(bg, f, g)) ==
                  oracle::background_pair_region(scene.masks, f, g, 16, 16));
    }
}

TEST_CASE("shift edits") {
    MaskTrack t("a", 2, 8, 8);
    t.frame(0).set(4, 4, true);
    t.frame(1).set(0, 7, true);
    CHECK(apply_edit(t, MaskEdit::shift(0, 0)) == t);
    const auto s = apply_edit(t, MaskEdit::shift(2, 0));
    CHECK(s.frame(0).at(4, 6));
    CHECK(s.frame(0).area() == 1);
    CHECK(s.frame(1).empty());

    std::mt19937_64 rng(4);
    for (int n = 0; n < 50; ++n) {
        std::vector<RegionMask> fr{oracle::random_mask(rng, 10, 12, 0.4), oracle::random_mask(rng, 10, 12, 0.4)};
        MaskTrack r("r", fr);
        const int dx = static_cast<int>(rng() % 9) - 4, dy = static_cast<int>(rng() % 9) - 4;
        const auto fwd = apply_edit(r, MaskEdit::shift(dx, dy));
        const auto back = apply_edit(fwd, MaskEdit::shift(-dx, -dy));
        for (std::size_t f = 0; f < 2; ++f) {
            CHECK(fwd.frame(f).area() <= r.frame(f).area());
            for (int y = 0; y < 10; ++y)
                for (int x = 0; x < 12; ++x) {
                    const bool stays = y + dy >= 0 && y + dy < 10 && x + dx >= 0 && x + dx < 12;
                    if (stays) CHECK(back.frame(f).at(y, x) == r.frame(f).at(y, x));
                    if (stays) CHECK(fwd.frame(f).at(y + dy, x + dx) == r.frame(f).at(y, x));
                }
        }
    }
}

TEST_CASE("scaling a centered square by two") {
    MaskTrack t("a", 2, 16, 16);
    for (std::size_t f = 0; f < 2; ++f)
        for (std::size_t y = 6; y < 10; ++y)
            for (std::size_t x = 6; x < 10; ++x) t.frame(f).set(y, x, true);
    const auto s = apply_edit(t, MaskEdit::scale(2.0));
    // Independent rasterizer: nearest source cell of every output cell, about centroid (7.5, 7.5).
    oracle::Grid expect(16, std::vector<int>(16, 0));
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const int sy = static_cast<int>(std::floor(7.5 + (y - 7.5) / 2.0 + 0.5));
            const int sx = static_cast<int>(std::floor(7.5 + (x - 7.5) / 2.0 + 0.5));
            expect[y][x] = sy >= 6 && sy < 10 && sx >= 6 && sx < 10;
        }
    for (std::size_t f = 0; f < 2; ++f) {
        CHECK(oracle::to_grid(s.frame(f)) == expect);
        // 4x the area, give or take the 36-cell ring around an 8x8 square
        const double area = static_cast<double>(s.frame(f).area());
        CHECK(std::abs(area - 4.0 * 16.0) <= 36.0);
    }
    CHECK_THROWS_AS(apply_edit(t, MaskEdit::scale(0.0)), Error);
    CHECK_THROWS_AS(apply_edit(t, MaskEdit::scale(2.0, PixelPoint{16.0, 0.0})), Error);
    CHECK(apply_edit(t, MaskEdit::scale(1.0)) == t);
}

TEST_CASE("centroid of a mask") {
    RegionMask m(10, 10);
    CHECK_FALSE(mask_centroid(m).has_value());
    m.set(3, 7, true);
    CHECK(mask_centroid(m)->row == 3.0);
    CHECK(mask_centroid(m)->col == 7.0);
}

}
