#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "conmo/motion_features.hpp"
#include "conmo/tensor.hpp"

namespace conmo {

struct GuidanceConfig {
    double step_size = 1.0;
    /// When set, the applied step is step_size / curvature_bound(terms), so
    /// the default of 1.0 makes every inner step a descent step.
    bool normalize_step = true;
    int n_inner_steps = 3;
    /// Guidance is active for timesteps t with t_end <= t <= t_start.
    int t_start = 20;
    int t_end = 5;
    std::map<std::string, double> per_source_weight;  // missing ids weigh 1
    double w_c = 0.0;

    bool active_at(int t) const { return t <= t_start && t >= t_end; }
    double weight_of(const std::string& source_id) const;
    void validate() const;

    /// Window covering the first 80% of the n_steps denoising steps.
    static GuidanceConfig with_default_window(int n_steps);
};

/// Reference motion and the target-side regions it is enforced on.
struct GuidanceTarget {
    std::vector<MotionDescriptor> reference;
    /// Every subject's target-side track (possibly edited), in subject order.
    /// The background region is derived from these.
    std::vector<MaskTrack> target_masks;
    std::map<std::string, double> weights;  // missing ids weigh 1
    RegionMode mode = RegionMode::Exclusive;

    double weight_of(const std::string& source_id) const;
};

/// One (source, pair) contribution to the guidance energy.
struct GuidanceTerm {
    std::size_t source = 0;  // index into GuidanceTarget::reference
    PairCells cells;
    FeatureVector reference_delta;
    double weight = 1.0;
};

/// Terms valid on both the reference and target sides, ordered by source then
/// pair. Throws NoValidPairs when empty.
std::vector<GuidanceTerm> compile_terms(const GuidanceTarget& target, const VideoDims& dims);

/// Sum over sources of weight * sum over shared valid pairs i < j of
/// |reference delta - target delta|^2.
double guidance_loss(const LatentVideo& target_latents, const GuidanceTarget& target);
double guidance_loss(const LatentVideo& target_latents, std::span<const GuidanceTerm> terms);

/// Exact gradient of guidance_loss with respect to every latent element.
LatentVideo guidance_gradient(const LatentVideo& target_latents, const GuidanceTarget& target);
LatentVideo guidance_gradient(const LatentVideo& target_latents, std::span<const GuidanceTerm> terms);

struct GuidedUpdate {
    LatentVideo latents;
    /// Loss before the first step followed by the loss after each step.
    std::vector<double> losses;

    double loss_before() const { return losses.front(); }
    double loss_after() const { return losses.back(); }
};

/// n_inner_steps of steepest descent z <- z - step * grad.
GuidedUpdate guided_update(const LatentVideo& target_latents, const GuidanceTarget& target,
                           const GuidanceConfig& config);

/// Upper bound on the loss curvature: 4 * sum(weight / area) over terms.
double curvature_bound(std::span<const GuidanceTerm> terms);

}  // namespace conmo
