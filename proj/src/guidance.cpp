#include "conmo/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "conmo/parallel.hpp"

namespace conmo {

namespace {

double lookup_weight(const std::map<std::string, double>& weights, const std::string& id) {
    auto it = weights.find(id);
    return it == weights.end() ? 1.0 : it->second;
}

std::vector<FeatureVector> target_deltas(const LatentVideo& latents, std::span<const GuidanceTerm> terms) {
    std::vector<FeatureVector> slots(terms.size());
    parallel_for(terms.size(), [&](std::size_t k) { slots[k] = pooled_delta(latents, terms[k].cells); }, 32);
    return slots;
}

}  // namespace

double GuidanceConfig::weight_of(const std::string& source_id) const {
    return lookup_weight(per_source_weight, source_id);
}

void GuidanceConfig::validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) {
        throw Error(ErrorCode::InvalidArgument, "step_size must be positive");
    }
    if (n_inner_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_inner_steps must be >= 0");
    if (t_end < 0 || t_start < t_end) throw Error(ErrorCode::InvalidArgument, "need t_start >= t_end >= 0");
    if (!(w_c >= 0.0) || !std::isfinite(w_c)) throw Error(ErrorCode::InvalidArgument, "w_c must be >= 0");
    for (const auto& [id, w] : per_source_weight) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error(ErrorCode::InvalidArgument, "weight of '" + id + "' must be finite and >= 0");
        }
    }
}

GuidanceConfig GuidanceConfig::with_default_window(int n_steps) {
    GuidanceConfig cfg;
    cfg.t_start = n_steps;
    cfg.t_end = std::max(1, n_steps - static_cast<int>(std::floor(0.8 * n_steps)) + 1);
    return cfg;
}

double GuidanceTarget::weight_of(const std::string& source_id) const { return lookup_weight(weights, source_id); }

std::vector<GuidanceTerm> compile_terms(const GuidanceTarget& target, const VideoDims& dims) {
    for (const auto& m : target.target_masks) {
        if (m.frames() != dims.frames || m.height() != dims.height || m.width() != dims.width) {
            throw Error(ErrorCode::DimMismatch, "target mask '" + m.subject_id() + "' does not match latents");
        }
    }
    std::vector<GuidanceTerm> terms;
    for (std::size_t s = 0; s < target.reference.size(); ++s) {
        const auto& ref = target.reference[s];
        if (ref.n_frames != dims.frames) {
            throw Error(ErrorCode::DimMismatch, "reference '" + ref.source_id + "' frame count differs");
        }
        SourceRegions regions;
        if (ref.is_background()) {
            regions = background_regions(target.target_masks, dims.frames, dims.height, dims.width);
        } else {
            auto it = std::find_if(target.target_masks.begin(), target.target_masks.end(),
                                   [&](const MaskTrack& m) { return m.subject_id() == ref.source_id; });
            if (it == target.target_masks.end()) {
                throw Error(ErrorCode::UnknownSubject, "no target mask for source '" + ref.source_id + "'");
            }
            const auto k = static_cast<std::size_t>(it - target.target_masks.begin());
            regions = subject_regions(target.target_masks, k, target.mode);
        }
        const double weight = target.weight_of(ref.source_id);
        for (auto& pair : regions.pairs) {
            auto it = ref.deltas.find({pair.i, pair.j});
            if (it == ref.deltas.end()) continue;
            if (it->second.size() != dims.channels) {
                throw Error(ErrorCode::LengthMismatch, "reference delta length differs from channel count");
            }
            terms.push_back(GuidanceTerm{s, std::move(pair), it->second, weight});
        }
    }
    if (terms.empty()) throw Error(ErrorCode::NoValidPairs, "no pair is valid on both reference and target sides");
    return terms;
}

double guidance_loss(const LatentVideo& target_latents, std::span<const GuidanceTerm> terms) {
    const auto deltas = target_deltas(target_latents, terms);
    double loss = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        double sq = 0.0;
        for (std::size_t c = 0; c < deltas[k].size(); ++c) {
            const double r = terms[k].reference_delta[c] - deltas[k][c];
            sq += r * r;
        }
        loss += terms[k].weight * sq;
    }
    return loss;
}

double guidance_loss(const LatentVideo& target_latents, const GuidanceTarget& target) {
    return guidance_loss(target_latents, compile_terms(target, target_latents.dims()));
}

LatentVideo guidance_gradient(const LatentVideo& target_latents, std::span<const GuidanceTerm> terms) {
    const auto deltas = target_deltas(target_latents, terms);
    LatentVideo grad(target_latents.dims());
    const auto& dims = target_latents.dims();
    const std::size_t plane = dims.plane_size();
    auto g = grad.data();
    // Accumulated serially in term order so the result is bitwise reproducible.
    for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& term = terms[k];
        const double area = static_cast<double>(term.cells.cells.size());
        const std::size_t base_i = term.cells.i * dims.frame_size();
        const std::size_t base_j = term.cells.j * dims.frame_size();
        for (std::size_t c = 0; c < dims.channels; ++c) {
            const double coeff = 2.0 * term.weight * (deltas[k][c] - term.reference_delta[c]) / area;
            if (coeff == 0.0) continue;
            for (auto cell : term.cells.cells) {
                g[base_i + c * plane + cell] += coeff;
                g[base_j + c * plane + cell] -= coeff;
            }
        }
    }
    return grad;
}

LatentVideo guidance_gradient(const LatentVideo& target_latents, const GuidanceTarget& target) {
    return guidance_gradient(target_latents, compile_terms(target, target_latents.dims()));
}

GuidedUpdate guided_update(const LatentVideo& target_latents, const GuidanceTarget& target,
                           const GuidanceConfig& config) {
    config.validate();
    const auto terms = compile_terms(target, target_latents.dims());
    GuidedUpdate out{target_latents, {}};
    out.losses.push_back(guidance_loss(out.latents, terms));
    double step_size = config.step_size;
    if (config.normalize_step) {
        const double bound = curvature_bound(terms);
        step_size = bound > 0.0 ? config.step_size / bound : 0.0;
    }
    for (int step = 0; step < config.n_inner_steps; ++step) {
        const auto grad = guidance_gradient(out.latents, terms);
        auto z = out.latents.data();
        auto g = grad.data();
        for (std::size_t k = 0; k < z.size(); ++k) z[k] -= step_size * g[k];
        out.latents.validate();
        out.losses.push_back(guidance_loss(out.latents, terms));
    }
    return out;
}

double curvature_bound(std::span<const GuidanceTerm> terms) {
    double bound = 0.0;
    for (const auto& t : terms) bound += 4.0 * t.weight / static_cast<double>(t.cells.cells.size());
    return bound;
}

}  // namespace conmo
