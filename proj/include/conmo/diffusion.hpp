#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "conmo/guidance.hpp"
#include "conmo/tensor.hpp"

namespace conmo {

/// Cumulative signal coefficients alpha_bar[0..n_steps], alpha_bar[0] = 1,
/// strictly decreasing and positive.
class NoiseSchedule {
public:
    /// alpha_bar[t] = max((1 - t / (n_steps + 1))^2, floor).
    static NoiseSchedule make(int n_steps, double floor = 1e-4);
    explicit NoiseSchedule(std::vector<double> alpha_bar);

    int n_steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
    const std::vector<double>& values() const noexcept { return alpha_bar_; }

private:
    std::vector<double> alpha_bar_;
};

/// Noise predictor. Must be deterministic and shape preserving.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual LatentVideo predict_noise(const LatentVideo& latents, int timestep, double alpha_bar) const = 0;
};

class ZeroNoiseDenoiser final : public Denoiser {
public:
    LatentVideo predict_noise(const LatentVideo& latents, int timestep, double alpha_bar) const override;
};

/// Closed-form denoiser for a prior that is an isotropic Gaussian mixture
/// centred on the atlas videos with standard deviation `bandwidth`.
///
/// With z = sqrt(a) x0 + sqrt(1 - a) eps the component likelihood is
/// N(sqrt(a) x_k, v I), v = a s^2 + 1 - a, and the posterior noise mean is
///   sum_k r_k sqrt(1 - a) (z - sqrt(a) x_k) / v
/// with responsibilities r_k from a log-sum-exp softmax.
class GaussianAtlasDenoiser final : public Denoiser {
public:
    explicit GaussianAtlasDenoiser(std::vector<LatentVideo> atlas, double bandwidth = 0.5);

    LatentVideo predict_noise(const LatentVideo& latents, int timestep, double alpha_bar) const override;
    std::vector<double> responsibilities(const LatentVideo& latents, double alpha_bar) const;

    const std::vector<LatentVideo>& atlas() const noexcept { return atlas_; }
    double bandwidth() const noexcept { return bandwidth_; }

private:
    std::vector<LatentVideo> atlas_;
    double bandwidth_;
};

/// Deterministic inversion z_0 -> z_n. Returns [z_0, z_1, ..., z_n].
/// refinements > 0 solves each step implicitly: z_{t+1} is re-estimated with the
/// noise predicted at z_{t+1} itself, so ddim_sample undoes the step up to the
/// fixed-point residual.
std::vector<LatentVideo> ddim_invert(const LatentVideo& z0, const NoiseSchedule& schedule, const Denoiser& denoiser,
                                     int refinements = 0);

struct TraceRecord {
    int timestep = 0;
    int inner_step = 0;
    double loss = 0.0;
};

/// Guidance hook for sampling: target_at(t) supplies the reference deltas
/// for timestep t and the target-side regions.
struct GuidedSampling {
    GuidanceConfig config;
    std::function<GuidanceTarget(int)> target_at;
    std::vector<TraceRecord>* trace = nullptr;
};

/// Deterministic reverse process z_n -> z_0. At active timesteps the latents
/// are first moved by guided_update, then denoised.
LatentVideo ddim_sample(const LatentVideo& zT, const NoiseSchedule& schedule, const Denoiser& denoiser,
                        const GuidedSampling* guidance = nullptr);

enum class NoiseMode { Shared, Fresh };

/// Shared returns the reference's terminal latent; fresh draws a seeded
/// standard normal tensor of the same shape.
LatentVideo make_initial_noise(const LatentVideo& reference_zT, NoiseMode mode, std::uint64_t seed);

/// Builds per-timestep guidance targets from a reference inversion
/// trajectory: descriptors are extracted at t with the reference masks,
/// recomposed by the plan and enforced on the plan's target-side masks.
/// Results are cached per timestep.
std::function<GuidanceTarget(int)> reference_guidance(std::vector<LatentVideo> reference_trajectory,
                                                      std::vector<MaskTrack> reference_masks, EditPlan plan,
                                                      std::map<std::string, double> weights,
                                                      RegionMode mode = RegionMode::Exclusive);

}  // namespace conmo
