#include "conmo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace conmo {

namespace {

MaskTrack random_blob_track(std::mt19937_64& rng, const VideoDims& dims, std::string id, bool never_empty) {
    std::uniform_real_distribution<double> row(0.0, static_cast<double>(dims.height - 1));
    std::uniform_real_distribution<double> col(0.0, static_cast<double>(dims.width - 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double max_radius = std::max(1.5, static_cast<double>(std::min(dims.height, dims.width)) / 3.0);
    std::uniform_real_distribution<double> radius(1.0, max_radius);
    MaskTrack track(std::move(id), dims.frames, dims.height, dims.width);
    const double r = radius(rng);
    for (std::size_t f = 0; f < dims.frames; ++f) {
        const bool absent = !(never_empty && f == 0) && unit(rng) < 0.15;
        if (absent) continue;
        const double cy = row(rng);
        const double cx = col(rng);
        auto& m = track.frame(f);
        for (std::size_t y = 0; y < dims.height; ++y) {
            for (std::size_t x = 0; x < dims.width; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                if (dy * dy + dx * dx <= r * r) m.set(y, x, true);
            }
        }
        if (m.empty()) m.set(static_cast<std::size_t>(std::lround(cy)), static_cast<std::size_t>(std::lround(cx)), true);
    }
    return track;
}

}  // namespace

GuidanceInstance random_guidance_instance(std::mt19937_64& rng, const VideoDims& dims, std::size_t n_subjects) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GuidanceInstance inst{LatentVideo(dims), {}};
    for (auto& v : inst.latents.data()) v = normal(rng);

    for (std::size_t k = 0; k < n_subjects; ++k) {
        inst.target.target_masks.push_back(random_blob_track(rng, dims, "s" + std::to_string(k), k == 0));
    }
    std::vector<std::string> sources;
    for (const auto& m : inst.target.target_masks) sources.push_back(m.subject_id());
    sources.push_back(kBackgroundId);

    for (const auto& id : sources) {
        MotionDescriptor ref{id, dims.frames, 0, {}};
        for (std::size_t i = 0; i < dims.frames; ++i) {
            for (std::size_t j = i + 1; j < dims.frames; ++j) {
                if (unit(rng) < 0.2) continue;
                FeatureVector delta(dims.channels);
                for (auto& d : delta) d = normal(rng);
                ref.set_pair(i, j, std::move(delta));
            }
        }
        inst.target.weights[id] = 0.5 + 1.5 * unit(rng);
        inst.target.reference.push_back(std::move(ref));
    }
    return inst;
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
    std::mt19937_64 rng(options.seed);
    GradcheckResult result;
    result.vacuous = options.zero_weights;
    const auto& mx = options.max_dims;
    check_dims(mx);
    auto draw = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
    };

    for (std::size_t n = 0; n < options.instances; ++n) {
        VideoDims dims{draw(2, mx.frames), draw(1, mx.channels), draw(std::min<std::size_t>(4, mx.height), mx.height),
                       draw(std::min<std::size_t>(4, mx.width), mx.width)};
        const std::size_t subjects = draw(1, std::max<std::size_t>(1, options.max_subjects));
        auto inst = random_guidance_instance(rng, dims, subjects);
        if (options.zero_weights) {
            for (auto& [_, w] : inst.target.weights) w = 0.0;
        }
        std::vector<GuidanceTerm> terms;
        try {
            terms = compile_terms(inst.target, dims);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoValidPairs) throw;
            continue;
        }
        auto analytic = guidance_gradient(inst.latents, terms);
        if (options.inject_sign_flip) {
            for (auto& g : analytic.data()) g = -g;
        }
        LatentVideo probe = inst.latents;
        auto z = probe.data();
        for (std::size_t e = 0; e < z.size(); ++e) {
            const double saved = z[e];
            z[e] = saved + options.h;
            const double up = guidance_loss(probe, terms);
            z[e] = saved - options.h;
            const double down = guidance_loss(probe, terms);
            z[e] = saved;
            const double numeric = (up - down) / (2.0 * options.h);
            const double err = relative_error(analytic.data()[e], numeric, 1e-6);
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_instance = n;
                result.worst_element = e;
                result.worst_dims = dims;
                result.worst_analytic = analytic.data()[e];
                result.worst_numeric = numeric;
            }
        }
        ++result.instances;
    }
    result.passed = result.instances > 0 && result.max_relative_error < options.tolerance;
    return result;
}

}  // namespace conmo
