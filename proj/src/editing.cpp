#include "conmo/editing.hpp"

namespace conmo {

EditResult run_edit(const std::vector<LatentVideo>& reference_trajectory, const std::vector<MaskTrack>& reference_masks,
                    const EditPlan& plan, const NoiseSchedule& schedule, const Denoiser& denoiser,
                    const EditSettings& settings) {
    if (reference_trajectory.size() != static_cast<std::size_t>(schedule.n_steps()) + 1) {
        throw Error(ErrorCode::LengthMismatch, "reference trajectory has " + std::to_string(reference_trajectory.size()) +
                                                   " latents, schedule expects " +
                                                   std::to_string(schedule.n_steps() + 1));
    }
    for (const auto& m : reference_masks) check_compatible(reference_trajectory.front(), m);
    settings.guidance.validate();

    EditResult result;
    const auto zT = make_initial_noise(reference_trajectory.back(), settings.noise, settings.seed);
    if (!settings.guided) {
        result.output = ddim_sample(zT, schedule, denoiser);
        return result;
    }
    GuidedSampling sampling{settings.guidance,
                            reference_guidance(reference_trajectory, reference_masks, plan,
                                               settings.guidance.per_source_weight, settings.mode),
                            &result.trace};
    result.output = ddim_sample(zT, schedule, denoiser, &sampling);
    return result;
}

}  // namespace conmo
