#include "conmo/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "conmo/parallel.hpp"

namespace conmo {

NoiseSchedule NoiseSchedule::make(int n_steps, double floor) {
    if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 0");
    if (!(floor > 0.0 && floor < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha_bar floor must be in (0, 1)");
    std::vector<double> a(static_cast<std::size_t>(n_steps) + 1);
    for (int t = 0; t <= n_steps; ++t) {
        const double r = 1.0 - static_cast<double>(t) / static_cast<double>(n_steps + 1);
        a[static_cast<std::size_t>(t)] = std::max(r * r, floor);
    }
    return NoiseSchedule(std::move(a));
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.empty() || alpha_bar_.front() != 1.0) {
        throw Error(ErrorCode::InvalidArgument, "alpha_bar must start at 1");
    }
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        if (!(alpha_bar_[t] > 0.0 && alpha_bar_[t] < alpha_bar_[t - 1])) {
            throw Error(ErrorCode::InvalidArgument, "alpha_bar must be positive and strictly decreasing");
        }
    }
}

LatentVideo ZeroNoiseDenoiser::predict_noise(const LatentVideo& latents, int, double) const {
    return LatentVideo(latents.dims());
}

GaussianAtlasDenoiser::GaussianAtlasDenoiser(std::vector<LatentVideo> atlas, double bandwidth)
    : atlas_(std::move(atlas)), bandwidth_(bandwidth) {
    if (atlas_.empty()) throw Error(ErrorCode::InvalidArgument, "atlas must not be empty");
    if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) {
        throw Error(ErrorCode::InvalidArgument, "bandwidth must be positive");
    }
    for (const auto& member : atlas_) {
        if (member.dims() != atlas_.front().dims()) {
            throw Error(ErrorCode::DimMismatch, "atlas members differ in shape");
        }
    }
}

std::vector<double> GaussianAtlasDenoiser::responsibilities(const LatentVideo& latents, double alpha_bar) const {
    if (latents.dims() != atlas_.front().dims()) {
        throw Error(ErrorCode::DimMismatch, "latents " + to_string(latents.dims()) + " vs atlas " +
                                                to_string(atlas_.front().dims()));
    }
    const double sa = std::sqrt(alpha_bar);
    const double var = alpha_bar * bandwidth_ * bandwidth_ + 1.0 - alpha_bar;
    std::vector<double> logits(atlas_.size());
    parallel_for(atlas_.size(), [&](std::size_t k) {
        auto z = latents.data();
        auto x = atlas_[k].data();
        double sq = 0.0;
        for (std::size_t e = 0; e < z.size(); ++e) {
            const double d = z[e] - sa * x[e];
            sq += d * d;
        }
        logits[k] = -sq / (2.0 * var);
    });
    const double peak = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - peak);
        norm += l;
    }
    for (auto& l : logits) l /= norm;
    return logits;
}

LatentVideo GaussianAtlasDenoiser::predict_noise(const LatentVideo& latents, int, double alpha_bar) const {
    const auto r = responsibilities(latents, alpha_bar);
    const double sa = std::sqrt(alpha_bar);
    const double var = alpha_bar * bandwidth_ * bandwidth_ + 1.0 - alpha_bar;
    const double scale = std::sqrt(std::max(0.0, 1.0 - alpha_bar)) / var;
    LatentVideo eps(latents.dims());
    auto out = eps.data();
    auto z = latents.data();
    // eps = scale * (z - sqrt(a) * sum_k r_k x_k)
    std::vector<double> mean(z.size(), 0.0);
    for (std::size_t k = 0; k < atlas_.size(); ++k) {
        if (r[k] == 0.0) continue;
        auto x = atlas_[k].data();
        for (std::size_t e = 0; e < z.size(); ++e) mean[e] += r[k] * x[e];
    }
    for (std::size_t e = 0; e < z.size(); ++e) out[e] = scale * (z[e] - sa * mean[e]);
    return eps;
}

namespace {

LatentVideo checked_noise(const Denoiser& denoiser, const LatentVideo& z, int t, double a) {
    auto eps = denoiser.predict_noise(z, t, a);
    if (eps.dims() != z.dims()) throw Error(ErrorCode::DimMismatch, "denoiser changed the latent shape");
    eps.validate();
    return eps;
}

// z_to = sqrt(a_to) * x0_hat + sqrt(1 - a_to) * eps, x0_hat = (z - sqrt(1 - a_from) eps) / sqrt(a_from).
LatentVideo ddim_step(const LatentVideo& z, const LatentVideo& eps, double a_from, double a_to) {
    const double s_from = std::sqrt(a_from);
    const double n_from = std::sqrt(1.0 - a_from);
    const double s_to = std::sqrt(a_to);
    const double n_to = std::sqrt(1.0 - a_to);
    LatentVideo out(z.dims());
    auto o = out.data();
    auto zd = z.data();
    auto ed = eps.data();
    for (std::size_t k = 0; k < o.size(); ++k) {
        const double x0 = (zd[k] - n_from * ed[k]) / s_from;
        o[k] = s_to * x0 + n_to * ed[k];
    }
    out.validate();
    return out;
}

}  // namespace

std::vector<LatentVideo> ddim_invert(const LatentVideo& z0, const NoiseSchedule& schedule, const Denoiser& denoiser,
                                     int refinements) {
    if (refinements < 0) throw Error(ErrorCode::InvalidArgument, "refinements must be >= 0");
    z0.validate();
    std::vector<LatentVideo> trajectory{z0};
    trajectory.reserve(static_cast<std::size_t>(schedule.n_steps()) + 1);
    for (int t = 0; t < schedule.n_steps(); ++t) {
        const auto& z = trajectory.back();
        const double a = schedule.alpha_bar(t);
        const double a_next = schedule.alpha_bar(t + 1);
        auto next = ddim_step(z, checked_noise(denoiser, z, t, a), a, a_next);
        for (int k = 0; k < refinements; ++k) next = ddim_step(z, checked_noise(denoiser, next, t + 1, a_next), a, a_next);
        trajectory.push_back(std::move(next));
    }
    return trajectory;
}

LatentVideo ddim_sample(const LatentVideo& zT, const NoiseSchedule& schedule, const Denoiser& denoiser,
                        const GuidedSampling* guidance) {
    zT.validate();
    if (guidance) {
        guidance->config.validate();
        if (!guidance->target_at) throw Error(ErrorCode::InvalidArgument, "guidance without a target provider");
    }
    LatentVideo z = zT;
    for (int t = schedule.n_steps(); t >= 1; --t) {
        if (guidance && guidance->config.active_at(t)) {
            auto update = guided_update(z, guidance->target_at(t), guidance->config);
            if (guidance->trace) {
                for (std::size_t k = 0; k < update.losses.size(); ++k) {
                    guidance->trace->push_back(TraceRecord{t, static_cast<int>(k), update.losses[k]});
                }
            }
            z = std::move(update.latents);
        }
        const auto eps = checked_noise(denoiser, z, t, schedule.alpha_bar(t));
        z = ddim_step(z, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
    }
    return z;
}

LatentVideo make_initial_noise(const LatentVideo& reference_zT, NoiseMode mode, std::uint64_t seed) {
    if (mode == NoiseMode::Shared) return reference_zT;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LatentVideo out(reference_zT.dims());
    for (auto& v : out.data()) v = normal(rng);
    return out;
}

std::function<GuidanceTarget(int)> reference_guidance(std::vector<LatentVideo> reference_trajectory,
                                                      std::vector<MaskTrack> reference_masks, EditPlan plan,
                                                      std::map<std::string, double> weights, RegionMode mode) {
    plan.validate();
    struct State {
        std::vector<LatentVideo> trajectory;
        std::vector<MaskTrack> masks;
        std::vector<MaskTrack> targets;
        EditPlan plan;
        std::map<std::string, double> weights;
        RegionMode mode;
        std::map<int, std::vector<MotionDescriptor>> cache;
    };
    auto state = std::make_shared<State>();
    state->targets = target_masks(reference_masks, plan);
    state->trajectory = std::move(reference_trajectory);
    state->masks = std::move(reference_masks);
    state->plan = std::move(plan);
    state->weights = std::move(weights);
    state->mode = mode;
    return [state](int t) {
        if (t < 0 || static_cast<std::size_t>(t) >= state->trajectory.size()) {
            throw Error(ErrorCode::IndexOutOfRange, "no reference latent at timestep " + std::to_string(t));
        }
        auto it = state->cache.find(t);
        if (it == state->cache.end()) {
            const auto& z = state->trajectory[static_cast<std::size_t>(t)];
            std::vector<MotionDescriptor> extracted;
            for (std::size_t k = 0; k < state->masks.size(); ++k) {
                if (state->masks[k].empty_everywhere()) continue;
                extracted.push_back(extract_subject_descriptor(z, state->masks, k, t, {state->mode}));
            }
            extracted.push_back(extract_background_descriptor(z, state->masks, t));
            it = state->cache.emplace(t, recompose(extracted, state->plan)).first;
        }
        return GuidanceTarget{it->second, state->targets, state->weights, state->mode};
    };
}

}  // namespace conmo
