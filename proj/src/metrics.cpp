#include "conmo/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace conmo {

namespace {

PixelPoint displacement(const PixelPoint& from, const PixelPoint& to) { return {to.row - from.row, to.col - from.col}; }

double norm(const PixelPoint& p) { return std::hypot(p.row, p.col); }

}  // namespace

double trajectory_rmse(std::span<const PixelPoint> a, std::span<const PixelPoint> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "trajectories differ in length");
    if (a.empty()) throw Error(ErrorCode::LengthMismatch, "trajectories must not be empty");
    double sum = 0.0;
    for (std::size_t f = 0; f < a.size(); ++f) {
        const double dr = a[f].row - b[f].row;
        const double dc = a[f].col - b[f].col;
        sum += dr * dr + dc * dc;
    }
    return std::sqrt(sum / static_cast<double>(a.size()));
}

double displacement_similarity(std::span<const PixelPoint> a, std::span<const PixelPoint> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "trajectories differ in length");
    if (a.size() < 2) throw Error(ErrorCode::LengthMismatch, "need at least two frames");
    constexpr double eps = 1e-12;
    double sum = 0.0;
    std::size_t counted = 0;
    bool a_moves = false;
    bool b_moves = false;
    for (std::size_t f = 0; f + 1 < a.size(); ++f) {
        const auto da = displacement(a[f], a[f + 1]);
        const auto db = displacement(b[f], b[f + 1]);
        const double na = norm(da);
        const double nb = norm(db);
        a_moves = a_moves || na > eps;
        b_moves = b_moves || nb > eps;
        if (na <= eps || nb <= eps) continue;
        sum += (da.row * db.row + da.col * db.col) / (na * nb);
        ++counted;
    }
    if (counted == 0) return (!a_moves && !b_moves) ? 1.0 : 0.0;
    return sum / static_cast<double>(counted);
}

DescriptorDistance descriptor_distance(const MotionDescriptor& d1, const MotionDescriptor& d2) {
    if (d1.n_frames != d2.n_frames) throw Error(ErrorCode::DimMismatch, "descriptors differ in frame count");
    DescriptorDistance out;
    for (const auto& [pair, v1] : d1.deltas) {
        if (pair.first > pair.second) continue;
        auto it = d2.deltas.find(pair);
        if (it == d2.deltas.end()) continue;
        const auto& v2 = it->second;
        if (v1.size() != v2.size()) throw Error(ErrorCode::LengthMismatch, "delta lengths differ");
        for (std::size_t c = 0; c < v1.size(); ++c) {
            const double r = v1[c] - v2[c];
            out.distance += r * r;
        }
        ++out.compared_pairs;
    }
    out.vacuous = out.compared_pairs == 0;
    return out;
}

TrajectoryReport compare_trajectories(const Trajectory& a, const Trajectory& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "trajectories differ in length");
    std::vector<PixelPoint> pa;
    std::vector<PixelPoint> pb;
    for (std::size_t f = 0; f < a.size(); ++f) {
        if (!a[f] || !b[f]) continue;
        pa.push_back(*a[f]);
        pb.push_back(*b[f]);
    }
    TrajectoryReport report;
    report.n_frames_compared = pa.size();
    if (pa.empty()) {
        report.rmse_px = std::numeric_limits<double>::infinity();
        report.displacement_similarity = 0.0;
        return report;
    }
    report.rmse_px = trajectory_rmse(pa, pb);
    report.displacement_similarity = pa.size() >= 2 ? displacement_similarity(pa, pb) : 1.0;
    return report;
}

double mean_displacement(const Trajectory& t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f + 1 < t.size(); ++f) {
        if (!t[f] || !t[f + 1]) continue;
        sum += norm(displacement(*t[f], *t[f + 1]));
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

MaskTrack detect_subject_track(const LatentVideo& latents, std::span<const double> signature, std::string subject_id,
                               double threshold) {
    if (signature.size() != latents.channels()) {
        throw Error(ErrorCode::LengthMismatch, "signature length differs from channel count");
    }
    double sig_sq = 0.0;
    for (double s : signature) sig_sq += s * s;
    if (sig_sq == 0.0) throw Error(ErrorCode::InvalidArgument, "signature must be nonzero");
    MaskTrack track(std::move(subject_id), latents.frames(), latents.height(), latents.width());
    for (std::size_t f = 0; f < latents.frames(); ++f) {
        auto& mask = track.frame(f);
        for (std::size_t y = 0; y < latents.height(); ++y) {
            for (std::size_t x = 0; x < latents.width(); ++x) {
                double proj = 0.0;
                for (std::size_t c = 0; c < latents.channels(); ++c) proj += latents.at(f, c, y, x) * signature[c];
                if (proj / sig_sq >= threshold) mask.set(y, x, true);
            }
        }
    }
    return track;
}

nlohmann::json to_json(const TrajectoryReport& report) {
    nlohmann::json j;
    j["rmse_px"] = std::isfinite(report.rmse_px) ? nlohmann::json(report.rmse_px) : nlohmann::json(nullptr);
    j["displacement_similarity"] = report.displacement_similarity;
    j["n_frames_compared"] = report.n_frames_compared;
    return j;
}

nlohmann::json to_json(const DescriptorDistance& distance) {
    return {{"distance", distance.distance}, {"compared_pairs", distance.compared_pairs}, {"vacuous", distance.vacuous}};
}

}  // namespace conmo
