#include <doctest.h>

#include <nlohmann/json.hpp>

#include "conmo/motion_features.hpp"
#include "conmo/synth.hpp"
#include "oracles.hpp"
#include "scenes.hpp"
#include "test_util.hpp"

using namespace conmo;

TEST_SUITE("synth") {

TEST_CASE("no blobs and no drift gives a static texture") {
    SceneSpec s;
    s.dims = {3, 2, 8, 8};
    s.texture_seed = 1;
    const auto r = render_scene(s);
    CHECK(r.masks.empty());
    for (std::size_t f = 1; f < 3; ++f)
        for (std::size_t k = 0; k < s.dims.frame_size(); ++k) CHECK(r.latents.frame(f).data[k] == r.latents.frame(0).data[k]);
    BackgroundTexture tex(2, 8, 8, 1, 0.25);
    CHECK(r.latents.at(2, 1, 3, 5) == tex.value(1, 3.0, 5.0));
    CHECK(render_scene(s).latents == r.latents);
}

TEST_CASE("rasterized disks and signatures") {
    SceneSpec s;
    s.dims = {5, 3, 20, 20};
    s.texture_seed = 2;
    s.blobs.push_back(scenes::blob("A", 3.5, {1.0, -0.5, 2.0}, {5.2, 4.7}, {14.1, 13.3}, 5));
    const auto r = render_scene(s);
    const auto plain = render_scene(SceneSpec{s.dims, {}, {}, 2, 0.25});
    for (std::size_t f = 0; f < 5; ++f) {
        const auto& c = s.blobs[0].trajectory[f];
        const auto g = oracle::disk(20, 20, c.row, c.col, 3.5);
        CHECK(oracle::to_grid(r.masks[0].frame(f)) == g);
        for (std::size_t y = 0; y < 20; ++y)
            for (std::size_t x = 0; x < 20; ++x)
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    const double expect = plain.latents.at(f, ch, y, x) + (g[y][x] ? s.blobs[0].signature[ch] : 0.0);
                    CHECK(r.latents.at(f, ch, y, x) == expect);
                }
        const auto [cy, cx] = oracle::centroid(g);
        CHECK(std::abs(centroid_trajectory(r.masks[0])[f]->row - c.row) <= 0.5);
        CHECK(std::abs(centroid_trajectory(r.masks[0])[f]->col - c.col) <= 0.5);
        CHECK(centroid_trajectory(r.masks[0])[f]->row == doctest::Approx(cy));
        CHECK(centroid_trajectory(r.masks[0])[f]->col == doctest::Approx(cx));
    }
    CHECK_FALSE(r.clipped[0]);
}

TEST_CASE("trajectory (2,2) to (2,10) over five frames") {
    SceneSpec s;
    s.dims = {5, 1, 16, 16};
    s.blobs.push_back(scenes::blob("A", 2.0, {1.0}, {2, 2}, {2, 10}, 5));
    const auto r = render_scene(s);
    const auto t = centroid_trajectory(r.masks[0]);
    for (std::size_t f = 0; f < 5; ++f) {
        CHECK(std::abs(t[f]->row - 2.0) <= 0.5);
        CHECK(std::abs(t[f]->col - (2.0 + 2.0 * f)) <= 0.5);
    }
}

TEST_CASE("identical blobs give identical masks and later blobs occlude") {
    SceneSpec s;
    s.dims = {2, 2, 12, 12};
    s.blobs.push_back(scenes::blob("A", 3.0, {1, 0}, {6, 6}, {6, 7}, 2));
    s.blobs.push_back(scenes::blob("B", 3.0, {0, 1}, {6, 6}, {6, 7}, 2));
    const auto r = render_scene(s);
    CHECK(r.masks[0].frame_masks() == r.masks[1].frame_masks());
    const auto bare = render_scene(SceneSpec{s.dims, {}, {}, 0, 0.25});
    CHECK(r.latents.at(0, 0, 6, 6) == bare.latents.at(0, 0, 6, 6));
    CHECK(r.latents.at(0, 1, 6, 6) == bare.latents.at(0, 1, 6, 6) + 1.0);
}

TEST_CASE("centroid examples") {
    MaskTrack t("a", 2, 16, 16);
    t.frame(0).set(3, 7, true);
    const auto d = oracle::disk(16, 16, 8, 8, 4.0);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) t.frame(1).set(y, x, d[y][x]);
    const auto c = centroid_trajectory(t);
    CHECK(c[0]->row == 3.0);
    CHECK(c[0]->col == 7.0);
    CHECK(c[1]->row == 8.0);
    CHECK(c[1]->col == 8.0);
    MaskTrack e("e", 2, 4, 4);
    CHECK_FALSE(centroid_trajectory(e)[0].has_value());
}

TEST_CASE("static scene and pure drift descriptors") {
    SceneSpec still;
    still.dims = {4, 3, 24, 24};
    still.texture_seed = 5;
    still.blobs.push_back(scenes::blob("A", 3, {1, 1, 1}, {6, 6}, {6, 6}, 4));
    still.blobs.push_back(scenes::blob("B", 4, {0, 2, 0}, {15, 15}, {15, 15}, 4));
    const auto r = render_scene(still);
    for (const auto& d : extract_descriptors(r.latents, r.masks, 0))
        for (const auto& [p, v] : d.deltas)
            for (double x : v) CHECK(std::abs(x) <= 1e-6);

    SceneSpec drift;
    drift.dims = {4, 3, 24, 24};
    drift.texture_seed = 5;
    for (int f = 0; f < 4; ++f) drift.background_drift.push_back({0.0, double(f)});
    const auto rd = render_scene(drift);
    const auto ds = extract_descriptors(rd.latents, rd.masks, 0);
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].is_background());
    double total = 0;
    for (const auto& [p, v] : ds[0].deltas)
        for (double x : v) total += std::abs(x);
    CHECK(total > 1e-3);

    // contrast scales the deltas linearly
    drift.texture_amplitude = 0.5;
    const auto rd2 = render_scene(drift);
    const auto ds2 = extract_descriptors(rd2.latents, rd2.masks, 0);
    for (const auto& [p, v] : ds[0].deltas)
        for (std::size_t c = 0; c < 3; ++c) CHECK(ds2[0].deltas.at(p)[c] == doctest::Approx(2.0 * v[c]).epsilon(1e-9));

    // a flat background hides the camera
    drift.texture_amplitude = 0.0;
    const auto flat = render_scene(drift);
    const auto flat_ds = extract_descriptors(flat.latents, flat.masks, 0);
    for (const auto& [p, v] : flat_ds[0].deltas)
        for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("scene spec json") {
    const auto spec = load_scene_spec(testutil::source_path("configs/two_blob_scene.json"));
    CHECK(spec.dims == VideoDims{8, 4, 32, 32});
    REQUIRE(spec.blobs.size() == 2);
    CHECK(spec.blobs[0].trajectory.front().col == 6.0);
    CHECK(spec.blobs[0].trajectory.back().col == 24.0);
    const auto again = scene_from_json(scene_to_json(spec));
    CHECK(render_scene(again).latents == render_scene(spec).latents);
    CHECK_THROWS_AS(scene_from_json(nlohmann::json::parse(R"({"frames": 2})")), Error);
    auto bad = scene_to_json(spec);
    bad["blobs"][0]["radius"] = -1;
    CHECK_THROWS_AS(scene_from_json(bad), Error);

    Trajectory t{PixelPoint{1, 2}, std::nullopt};
    const auto back = trajectory_from_json(trajectory_to_json(t));
    CHECK(back[0]->col == 2.0);
    CHECK_FALSE(back[1].has_value());
}

TEST_CASE("pgm dump") {
    const auto dir = testutil::scratch_dir("pgm");
    SceneSpec s;
    s.dims = {2, 1, 4, 6};
    s.texture_seed = 1;
    dump_pgm(render_scene(s).latents, 0, dir, "f");
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        ++n;
        CHECK(oracle::read_bytes(e.path()).substr(0, 2) == "P5");
    }
    CHECK(n == 2);
}

}
