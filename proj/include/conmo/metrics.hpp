#pragma once

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conmo/motion_features.hpp"
#include "conmo/synth.hpp"

namespace conmo {

/// Root mean squared Euclidean distance between paired points.
double trajectory_rmse(std::span<const PixelPoint> a, std::span<const PixelPoint> b);

/// Mean cosine similarity of per-frame displacements over frames where both
/// displacements are nonzero. 1 when both paths are static throughout, 0
/// when only one of them moves.
double displacement_similarity(std::span<const PixelPoint> a, std::span<const PixelPoint> b);

struct DescriptorDistance {
    double distance = 0.0;         // sum of squared L2 over shared i < j pairs
    std::size_t compared_pairs = 0;
    bool vacuous = false;          // no shared pair
};

DescriptorDistance descriptor_distance(const MotionDescriptor& d1, const MotionDescriptor& d2);

struct TrajectoryReport {
    double rmse_px = 0.0;
    double displacement_similarity = 1.0;
    std::size_t n_frames_compared = 0;
};

/// Compares two trajectories on the frames where both have a point.
/// Throws LengthMismatch on unequal lengths.
TrajectoryReport compare_trajectories(const Trajectory& a, const Trajectory& b);

/// Mean |displacement| between consecutive present frames.
double mean_displacement(const Trajectory& t);

/// Cells whose latent projects onto `signature` with coefficient >= threshold.
MaskTrack detect_subject_track(const LatentVideo& latents, std::span<const double> signature, std::string subject_id,
                               double threshold = 0.5);

nlohmann::json to_json(const TrajectoryReport& report);
nlohmann::json to_json(const DescriptorDistance& distance);

}  // namespace conmo
