#include "conmo/motion_features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "conmo/parallel.hpp"

namespace conmo {

namespace {

std::vector<std::uint32_t> region_cells(const RegionMask& region) {
    std::vector<std::uint32_t> cells;
    auto c = region.cells();
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k]) cells.push_back(static_cast<std::uint32_t>(k));
    }
    return cells;
}

FeatureVector pooled_mean(const FrameView& frame, std::span<const std::uint32_t> cells) {
    if (cells.empty()) throw Error(ErrorCode::EmptyRegion, "pooling over an empty region");
    const std::size_t plane = frame.height * frame.width;
    const double area = static_cast<double>(cells.size());
    FeatureVector out(frame.channels, 0.0);
    for (std::size_t c = 0; c < frame.channels; ++c) {
        const double* base = frame.data.data() + c * plane;
        double sum = 0.0;
        for (auto k : cells) sum += base[k];
        out[c] = sum / area;
    }
    return out;
}

FeatureVector difference(const FeatureVector& a, const FeatureVector& b) {
    FeatureVector out(a.size());
    for (std::size_t c = 0; c < a.size(); ++c) out[c] = a[c] - b[c];
    return out;
}

void check_subjects(std::span<const MaskTrack> subjects, std::size_t frames, std::size_t height,
                    std::size_t width) {
    for (const auto& s : subjects) {
        if (s.frames() != frames || s.height() != height || s.width() != width) {
            throw Error(ErrorCode::DimMismatch, "subject '" + s.subject_id() + "' dims disagree");
        }
    }
}

std::vector<FramePair> ordered_pairs(std::size_t n) {
    std::vector<FramePair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    return pairs;
}

template <typename RegionFn>
SourceRegions build_regions(std::string id, std::size_t frames, std::size_t height, std::size_t width,
                            RegionFn region_of) {
    const auto pairs = ordered_pairs(frames);
    std::vector<std::vector<std::uint32_t>> slots(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t p) { slots[p] = region_cells(region_of(pairs[p].first, pairs[p].second)); }, 8);
    SourceRegions out{std::move(id), frames, height, width, {}};
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (slots[p].empty()) continue;
        out.pairs.push_back(PairCells{pairs[p].first, pairs[p].second, std::move(slots[p])});
    }
    return out;
}

}  // namespace

FeatureVector lsmm(const FrameView& frame, const RegionMask& region) {
    if (region.height() != frame.height || region.width() != frame.width) {
        throw Error(ErrorCode::DimMismatch, "region dims differ from frame dims");
    }
    const auto cells = region_cells(region);
    return pooled_mean(frame, cells);
}

FeatureVector motion_delta(const FrameView& frame_i, const FrameView& frame_j, const RegionMask& region) {
    if (frame_i.channels != frame_j.channels || frame_i.height != frame_j.height || frame_i.width != frame_j.width) {
        throw Error(ErrorCode::DimMismatch, "frames differ in shape");
    }
    return difference(lsmm(frame_i, region), lsmm(frame_j, region));
}

FeatureVector motion_delta(const LatentVideo& latents, const MaskTrack& subject, std::span<const MaskTrack> others,
                           std::size_t i, std::size_t j, RegionMode mode) {
    check_compatible(latents, subject);
    const auto region = mode == RegionMode::Exclusive ? pair_region(subject, others, i, j)
                                                      : union_pair_region(subject, i, j);
    return motion_delta(latents.frame(i), latents.frame(j), region);
}

std::vector<FramePair> MotionDescriptor::valid_pairs() const {
    std::vector<FramePair> out;
    out.reserve(deltas.size());
    for (const auto& [pair, _] : deltas) out.push_back(pair);
    return out;
}

void MotionDescriptor::set_pair(std::size_t i, std::size_t j, FeatureVector delta) {
    if (i == j) throw Error(ErrorCode::InvalidArgument, "diagonal pairs are not stored");
    if (i >= n_frames || j >= n_frames) throw Error(ErrorCode::IndexOutOfRange, "pair outside frame range");
    FeatureVector negated(delta.size());
    for (std::size_t c = 0; c < delta.size(); ++c) negated[c] = -delta[c];
    deltas[{i, j}] = std::move(delta);
    deltas[{j, i}] = std::move(negated);
}

SourceRegions subject_regions(std::span<const MaskTrack> subjects, std::size_t k, RegionMode mode) {
    if (k >= subjects.size()) throw Error(ErrorCode::IndexOutOfRange, "subject index");
    const auto& subject = subjects[k];
    check_subjects(subjects, subject.frames(), subject.height(), subject.width());
    std::vector<MaskTrack> others;
    for (std::size_t m = 0; m < subjects.size(); ++m) {
        if (m != k) others.push_back(subjects[m]);
    }
    return build_regions(subject.subject_id(), subject.frames(), subject.height(), subject.width(),
                         [&](std::size_t i, std::size_t j) {
                             return mode == RegionMode::Exclusive ? pair_region(subject, others, i, j)
                                                                  : union_pair_region(subject, i, j);
                         });
}

SourceRegions background_regions(std::span<const MaskTrack> subjects, std::size_t frames, std::size_t height,
                                 std::size_t width) {
    const auto background = background_track(subjects, frames, height, width);
    return build_regions(kBackgroundId, frames, height, width,
                         [&](std::size_t i, std::size_t j) { return background_pair_region(background, i, j); });
}

FeatureVector pooled_delta(const LatentVideo& latents, const PairCells& pair) {
    return difference(pooled_mean(latents.frame(pair.i), pair.cells), pooled_mean(latents.frame(pair.j), pair.cells));
}

MotionDescriptor descriptor_from_regions(const LatentVideo& latents, const SourceRegions& regions, int timestep) {
    if (regions.n_frames != latents.frames() || regions.height != latents.height() ||
        regions.width != latents.width()) {
        throw Error(ErrorCode::DimMismatch, "regions of '" + regions.source_id + "' do not match latents");
    }
    std::vector<FeatureVector> slots(regions.pairs.size());
    parallel_for(slots.size(), [&](std::size_t p) { slots[p] = pooled_delta(latents, regions.pairs[p]); }, 32);
    MotionDescriptor d{regions.source_id, regions.n_frames, timestep, {}};
    for (std::size_t p = 0; p < slots.size(); ++p) {
        d.set_pair(regions.pairs[p].i, regions.pairs[p].j, std::move(slots[p]));
    }
    return d;
}

MotionDescriptor extract_subject_descriptor(const LatentVideo& latents, std::span<const MaskTrack> subjects,
                                            std::size_t k, int timestep, ExtractOptions options) {
    if (k >= subjects.size()) throw Error(ErrorCode::IndexOutOfRange, "subject index");
    check_compatible(latents, subjects[k]);
    auto regions = subject_regions(subjects, k, options.mode);
    if (regions.pairs.empty()) {
        throw Error(ErrorCode::NoValidPairs, "subject '" + subjects[k].subject_id() + "' has no non-empty pair region");
    }
    return descriptor_from_regions(latents, regions, timestep);
}

MotionDescriptor extract_background_descriptor(const LatentVideo& latents, std::span<const MaskTrack> subjects,
                                               int timestep) {
    for (const auto& s : subjects) check_compatible(latents, s);
    auto regions = background_regions(subjects, latents.frames(), latents.height(), latents.width());
    return descriptor_from_regions(latents, regions, timestep);
}

std::vector<MotionDescriptor> extract_descriptors(const LatentVideo& latents, std::span<const MaskTrack> subjects,
                                                  int timestep, ExtractOptions options) {
    std::vector<MotionDescriptor> out;
    out.reserve(subjects.size() + 1);
    for (std::size_t k = 0; k < subjects.size(); ++k) {
        out.push_back(extract_subject_descriptor(latents, subjects, k, timestep, options));
    }
    out.push_back(extract_background_descriptor(latents, subjects, timestep));
    return out;
}

FeatureVector soft_blend(const FeatureVector& subject_delta, const FeatureVector& camera_delta, double w_c) {
    if (subject_delta.size() != camera_delta.size()) {
        throw Error(ErrorCode::LengthMismatch, "subject and camera deltas differ in length");
    }
    if (!(w_c >= 0.0) || !std::isfinite(w_c)) throw Error(ErrorCode::InvalidArgument, "w_c must be >= 0");
    if (w_c == 0.0) return subject_delta;
    FeatureVector out(subject_delta.size());
    for (std::size_t c = 0; c < out.size(); ++c) {
        out[c] = (subject_delta[c] + w_c * camera_delta[c]) / (w_c + 1.0);
    }
    return out;
}

void EditPlan::validate() const {
    if (!(w_c >= 0.0) || !std::isfinite(w_c)) throw Error(ErrorCode::InvalidArgument, "plan w_c must be >= 0");
    for (const auto& [id, d] : directives) {
        if (d.w_c && (!(*d.w_c >= 0.0) || !std::isfinite(*d.w_c))) {
            throw Error(ErrorCode::InvalidArgument, "soften weight for '" + id + "' must be >= 0");
        }
        if (d.mask_edit && d.mask_edit->kind == MaskEdit::Kind::Scale && !(d.mask_edit->factor > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "scale factor for '" + id + "' must be positive");
        }
    }
}

std::vector<MotionDescriptor> recompose(std::span<const MotionDescriptor> descriptors, const EditPlan& plan) {
    plan.validate();
    const MotionDescriptor* background = nullptr;
    std::set<std::string> subject_ids;
    for (const auto& d : descriptors) {
        if (d.is_background()) {
            background = &d;
        } else {
            subject_ids.insert(d.source_id);
        }
    }
    for (const auto& [id, _] : plan.directives) {
        if (!subject_ids.contains(id)) throw Error(ErrorCode::UnknownSubject, "plan names unknown subject '" + id + "'");
    }

    auto directive_for = [&](const std::string& id) {
        auto it = plan.directives.find(id);
        SubjectDirective d = it == plan.directives.end() ? SubjectDirective{} : it->second;
        if (d.action == SubjectDirective::Action::Keep && plan.w_c > 0.0) {
            d.action = SubjectDirective::Action::Soften;
            d.w_c = plan.w_c;
        }
        return d;
    };

    bool needs_background = plan.camera_only;
    for (const auto& id : subject_ids) {
        if (directive_for(id).action != SubjectDirective::Action::Keep) needs_background = true;
    }
    if (needs_background && background == nullptr) {
        throw Error(ErrorCode::MissingBackground, "plan requires the background descriptor");
    }

    std::vector<MotionDescriptor> out;
    if (plan.camera_only) {
        out.push_back(*background);
        return out;
    }
    for (const auto& d : descriptors) {
        if (d.is_background()) {
            if (plan.include_background) out.push_back(d);
            continue;
        }
        const auto directive = directive_for(d.source_id);
        switch (directive.action) {
            case SubjectDirective::Action::Keep:
                out.push_back(d);
                break;
            case SubjectDirective::Action::Remove: {
                MotionDescriptor replaced = *background;
                replaced.source_id = d.source_id;
                out.push_back(std::move(replaced));
                break;
            }
            case SubjectDirective::Action::Soften: {
                const double w = directive.w_c.value_or(plan.w_c);
                MotionDescriptor blended{d.source_id, d.n_frames, d.timestep, {}};
                for (const auto& [pair, delta] : d.deltas) {
                    if (pair.first > pair.second) continue;
                    auto it = background->deltas.find(pair);
                    if (it == background->deltas.end()) continue;
                    blended.set_pair(pair.first, pair.second, soft_blend(delta, it->second, w));
                }
                out.push_back(std::move(blended));
                break;
            }
        }
    }
    return out;
}

std::vector<MaskTrack> target_masks(std::span<const MaskTrack> subjects, const EditPlan& plan) {
    std::vector<MaskTrack> out;
    out.reserve(subjects.size());
    for (const auto& s : subjects) {
        auto it = plan.directives.find(s.subject_id());
        if (it != plan.directives.end() && it->second.mask_edit) {
            out.push_back(apply_edit(s, *it->second.mask_edit));
        } else {
            out.push_back(s);
        }
    }
    return out;
}

}  // namespace conmo
