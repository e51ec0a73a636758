#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "conmo/guidance.hpp"

namespace conmo {

struct GradcheckOptions {
    std::uint64_t seed = 7;
    std::size_t instances = 20;
    /// Upper bounds; each instance draws its dims in [2..frames] x [1..channels] x [4..height] x [4..width].
    VideoDims max_dims{4, 4, 16, 16};
    std::size_t max_subjects = 3;
    double h = 1e-3;
    double tolerance = 1e-4;
    /// Test hook: negate the analytic gradient before comparing.
    bool inject_sign_flip = false;
    /// Every source weight set to zero.
    bool zero_weights = false;
};

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::size_t instances = 0;
    std::size_t worst_instance = 0;
    std::size_t worst_element = 0;
    VideoDims worst_dims;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool vacuous = false;  // all weights zero; nothing was really checked
    bool passed = false;
};

/// A randomized guidance problem: overlapping blob masks, random latents,
/// random reference deltas with some pairs dropped.
struct GuidanceInstance {
    LatentVideo latents;
    GuidanceTarget target;
};

GuidanceInstance random_guidance_instance(std::mt19937_64& rng, const VideoDims& dims, std::size_t n_subjects);

/// |a - b| / max(|a|, |b|), with denominators below `floor` replaced by `floor`.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Compares guidance_gradient against central differences of guidance_loss
/// over every latent element of `options.instances` random problems.
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace conmo
