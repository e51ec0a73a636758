#pragma once

#include <cstdint>
#include <vector>

#include "conmo/diffusion.hpp"

namespace conmo {

struct EditSettings {
    GuidanceConfig guidance = GuidanceConfig::with_default_window(20);
    NoiseMode noise = NoiseMode::Shared;
    std::uint64_t seed = 0;
    RegionMode mode = RegionMode::Exclusive;
    /// false samples from the initial noise with no guidance at all.
    bool guided = true;
};

struct EditResult {
    LatentVideo output;
    std::vector<TraceRecord> trace;
};

/// Guided sampling of a target video from a reference inversion trajectory
/// [z_0 .. z_n], the reference masks and an edit plan.
EditResult run_edit(const std::vector<LatentVideo>& reference_trajectory, const std::vector<MaskTrack>& reference_masks,
                    const EditPlan& plan, const NoiseSchedule& schedule, const Denoiser& denoiser,
                    const EditSettings& settings);

}  // namespace conmo
