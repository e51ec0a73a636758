#pragma once

// Brute-force reference implementations. Deliberately naive: nested loops over
// plain vectors, nothing shared with the library beyond the data types.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "conmo/guidance.hpp"
#include "conmo/motion_features.hpp"
#include "conmo/synth.hpp"
#include "conmo/tensor.hpp"

namespace oracle {

using Grid = std::vector<std::vector<int>>;  // [row][col] in {0, 1}

inline Grid to_grid(const conmo::RegionMask& m) {
    Grid g(m.height(), std::vector<int>(m.width(), 0));
    for (std::size_t y = 0; y < m.height(); ++y)
        for (std::size_t x = 0; x < m.width(); ++x) g[y][x] = m.at(y, x) ? 1 : 0;
    return g;
}

inline conmo::RegionMask from_grid(const Grid& g) {
    conmo::RegionMask m(g.size(), g.at(0).size());
    for (std::size_t y = 0; y < g.size(); ++y)
        for (std::size_t x = 0; x < g[y].size(); ++x) m.set(y, x, g[y][x] != 0);
    return m;
}

inline conmo::RegionMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p = 0.5) {
    std::bernoulli_distribution coin(p);
    conmo::RegionMask m(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m.set(y, x, coin(rng));
    return m;
}

inline Grid cellwise(const Grid& a, const Grid& b, int (*op)(int, int)) {
    Grid out = a;
    for (std::size_t y = 0; y < a.size(); ++y)
        for (std::size_t x = 0; x < a[y].size(); ++x) out[y][x] = op(a[y][x], b[y][x]);
    return out;
}
inline int op_or(int a, int b) { return a | b; }
inline int op_and(int a, int b) { return a & b; }
inline int op_andnot(int a, int b) { return a & (1 - b); }

// subject_i AND NOT (o1 OR o2 OR ...), evaluated per cell.
inline Grid exclusive(const Grid& subject, const std::vector<Grid>& others) {
    Grid out = subject;
    for (std::size_t y = 0; y < subject.size(); ++y) {
        for (std::size_t x = 0; x < subject[y].size(); ++x) {
            int covered = 0;
            for (const auto& o : others) covered |= o[y][x];
            out[y][x] = subject[y][x] && !covered ? 1 : 0;
        }
    }
    return out;
}

inline Grid pair_region(const std::vector<conmo::MaskTrack>& subjects, std::size_t k, std::size_t i, std::size_t j,
                        bool legacy = false) {
    const auto& s = subjects[k];
    std::vector<Grid> others_i, others_j;
    if (!legacy) {
        for (std::size_t m = 0; m < subjects.size(); ++m) {
            if (m == k) continue;
            others_i.push_back(to_grid(subjects[m].frame(i)));
            others_j.push_back(to_grid(subjects[m].frame(j)));
        }
    }
    const Grid a = exclusive(to_grid(s.frame(i)), others_j);
    const Grid b = exclusive(to_grid(s.frame(j)), others_i);
    return cellwise(a, b, op_or);
}

// Cells covered by no subject in frame i and no subject in frame j.
inline Grid background_pair_region(const std::vector<conmo::MaskTrack>& subjects, std::size_t i, std::size_t j,
                                   std::size_t h, std::size_t w) {
    Grid out(h, std::vector<int>(w, 1));
    for (const auto& s : subjects)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                if (s.frame(i).at(y, x) || s.frame(j).at(y, x)) out[y][x] = 0;
    return out;
}

inline std::size_t area(const Grid& g) {
    std::size_t n = 0;
    for (const auto& row : g)
        for (int v : row) n += static_cast<std::size_t>(v);
    return n;
}

// Per-channel mean of frame f over the cells of g.
inline std::vector<double> region_mean(const conmo::LatentVideo& v, std::size_t f, const Grid& g) {
    std::vector<double> sum(v.channels(), 0.0);
    double n = 0;
    for (std::size_t y = 0; y < v.height(); ++y) {
        for (std::size_t x = 0; x < v.width(); ++x) {
            if (!g[y][x]) continue;
            n += 1;
            for (std::size_t c = 0; c < v.channels(); ++c) sum[c] += v.at(f, c, y, x);
        }
    }
    for (auto& s : sum) s /= n;
    return sum;
}

inline std::vector<double> delta(const conmo::LatentVideo& v, std::size_t i, std::size_t j, const Grid& g) {
    auto a = region_mean(v, i, g);
    const auto b = region_mean(v, j, g);
    for (std::size_t c = 0; c < a.size(); ++c) a[c] -= b[c];
    return a;
}

// Delta map over i < j pairs with non-empty regions.
using PairMap = std::map<std::pair<std::size_t, std::size_t>, std::vector<double>>;

inline PairMap subject_deltas(const conmo::LatentVideo& v, const std::vector<conmo::MaskTrack>& subjects,
                              std::size_t k, bool legacy = false) {
    PairMap out;
    for (std::size_t i = 0; i < v.frames(); ++i)
        for (std::size_t j = i + 1; j < v.frames(); ++j) {
            const auto g = pair_region(subjects, k, i, j, legacy);
            if (area(g) > 0) out[{i, j}] = delta(v, i, j, g);
        }
    return out;
}

inline PairMap background_deltas(const conmo::LatentVideo& v, const std::vector<conmo::MaskTrack>& subjects) {
    PairMap out;
    for (std::size_t i = 0; i < v.frames(); ++i)
        for (std::size_t j = i + 1; j < v.frames(); ++j) {
            const auto g = background_pair_region(subjects, i, j, v.height(), v.width());
            if (area(g) > 0) out[{i, j}] = delta(v, i, j, g);
        }
    return out;
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    return s;
}

// Sum over pairs present in both maps of |a - b|^2.
inline double pair_map_distance(const PairMap& a, const PairMap& b) {
    double s = 0;
    for (const auto& [p, va] : a) {
        auto it = b.find(p);
        if (it != b.end()) s += sq_dist(va, it->second);
    }
    return s;
}

// Guidance energy evaluated from scratch: per source, regions from the target
// masks, i < j pairs present on both sides, weighted squared mismatch.
inline double guidance_loss(const conmo::LatentVideo& z, const conmo::GuidanceTarget& t) {
    double total = 0;
    const auto& subjects = t.target_masks;
    for (const auto& ref : t.reference) {
        PairMap target;
        if (ref.source_id == conmo::kBackgroundId) {
            target = background_deltas(z, subjects);
        } else {
            std::size_t k = 0;
            while (subjects[k].subject_id() != ref.source_id) ++k;
            target = subject_deltas(z, subjects, k, t.mode == conmo::RegionMode::Union);
        }
        const auto wit = t.weights.find(ref.source_id);
        const double w = wit == t.weights.end() ? 1.0 : wit->second;
        for (const auto& [p, d] : target) {
            auto r = ref.deltas.find(p);
            if (r != ref.deltas.end()) total += w * sq_dist(r->second, d);
        }
    }
    return total;
}

// Disk rasterizer: every cell whose center is within r of (cy, cx).
inline Grid disk(std::size_t h, std::size_t w, double cy, double cx, double r) {
    Grid g(h, std::vector<int>(w, 0));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dy = double(y) - cy, dx = double(x) - cx;
            g[y][x] = dy * dy + dx * dx <= r * r ? 1 : 0;
        }
    return g;
}

inline std::pair<double, double> centroid(const Grid& g) {
    double sy = 0, sx = 0, n = 0;
    for (std::size_t y = 0; y < g.size(); ++y)
        for (std::size_t x = 0; x < g[y].size(); ++x)
            if (g[y][x]) {
                sy += double(y);
                sx += double(x);
                n += 1;
            }
    return {sy / n, sx / n};
}

inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline conmo::LatentVideo random_video(std::mt19937_64& rng, conmo::VideoDims dims) {
    std::normal_distribution<double> n(0.0, 1.0);
    conmo::LatentVideo v(dims);
    for (auto& x : v.data()) x = n(rng);
    return v;
}

}  // namespace oracle
