#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "conmo/synth.hpp"

namespace scenes {

inline std::vector<conmo::PixelPoint> line(conmo::PixelPoint a, conmo::PixelPoint b, std::size_t frames) {
    std::vector<conmo::PixelPoint> out;
    for (std::size_t f = 0; f < frames; ++f) {
        const double t = frames == 1 ? 0.0 : double(f) / double(frames - 1);
        out.push_back({a.row + t * (b.row - a.row), a.col + t * (b.col - a.col)});
    }
    return out;
}

inline conmo::BlobSpec blob(std::string id, double radius, std::vector<double> sig, conmo::PixelPoint from,
                            conmo::PixelPoint to, std::size_t frames) {
    return conmo::BlobSpec{std::move(id), line(from, to, frames), radius, std::move(sig)};
}

// Two blobs crossing each other's paths at random angles on an 8-frame 32x32
// canvas, with random orthogonal-ish signatures.
inline conmo::SceneSpec random_crossing(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    conmo::SceneSpec s;
    s.dims = {8, 4, 32, 32};
    s.texture_seed = rng();
    auto sig = [&] {
        std::vector<double> v(4);
        double norm = 0;
        for (auto& x : v) {
            x = n(rng);
            norm += x * x;
        }
        for (auto& x : v) x *= 2.0 / std::sqrt(norm);
        return v;
    };
    const double ra = 3.0 + 2.0 * u(rng), rb = 3.0 + 2.0 * u(rng);
    const double row_a = 10.0 + 12.0 * u(rng), col_b = 10.0 + 12.0 * u(rng);
    // A travels left to right, B top to bottom; both pass the middle.
    s.blobs.push_back(blob("A", ra, sig(), {row_a, 5.0}, {32.0 - row_a, 26.0}, 8));
    s.blobs.push_back(blob("B", rb, sig(), {5.0, col_b}, {26.0, 32.0 - col_b}, 8));
    return s;
}

inline conmo::SceneSpec only(const conmo::SceneSpec& s, std::size_t k) {
    auto out = s;
    out.blobs = {s.blobs[k]};
    return out;
}

}  // namespace scenes
