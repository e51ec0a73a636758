#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conmo/mask_algebra.hpp"
#include "conmo/tensor.hpp"

namespace conmo {

using FeatureVector = std::vector<double>;
using FramePair = std::pair<std::size_t, std::size_t>;

inline const std::string kBackgroundId = "background";

/// How a subject's pair region is built.
enum class RegionMode {
    Exclusive,  // other subjects' opposing-frame masks are subtracted first
    Union,      // plain union of the subject's two masks (legacy)
};

/// Per-channel mean of one frame over a non-empty region. Throws EmptyRegion.
FeatureVector lsmm(const FrameView& frame, const RegionMask& region);

/// lsmm(frame_i, region) - lsmm(frame_j, region).
FeatureVector motion_delta(const FrameView& frame_i, const FrameView& frame_j, const RegionMask& region);

/// Delta of `subject` between frames i and j over its pair region.
FeatureVector motion_delta(const LatentVideo& latents, const MaskTrack& subject, std::span<const MaskTrack> others,
                           std::size_t i, std::size_t j, RegionMode mode = RegionMode::Exclusive);

/// Pairwise motion deltas of one source (a subject or the background).
///
/// Only pairs with a non-empty region carry a vector. Stored pairs always come
/// in antisymmetric (i, j) / (j, i) couples; the diagonal is never stored.
struct MotionDescriptor {
    std::string source_id;
    std::size_t n_frames = 0;
    int timestep = 0;
    std::map<FramePair, FeatureVector> deltas;

    bool is_background() const { return source_id == kBackgroundId; }
    bool valid(std::size_t i, std::size_t j) const { return deltas.contains({i, j}); }
    std::vector<FramePair> valid_pairs() const;
    std::size_t channels() const { return deltas.empty() ? 0 : deltas.begin()->second.size(); }

    /// Stores delta at (i, j) and its negation at (j, i). Requires i != j.
    void set_pair(std::size_t i, std::size_t j, FeatureVector delta);

    bool operator==(const MotionDescriptor&) const = default;
};

/// Region cells of one frame pair, as flat (row * width + col) offsets.
struct PairCells {
    std::size_t i = 0;
    std::size_t j = 0;
    std::vector<std::uint32_t> cells;
};

/// The non-empty i < j pair regions of one source, independent of latents.
struct SourceRegions {
    std::string source_id;
    std::size_t n_frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<PairCells> pairs;
};

SourceRegions subject_regions(std::span<const MaskTrack> subjects, std::size_t k, RegionMode mode);
/// Background pair regions: cells that are background in both frames.
SourceRegions background_regions(std::span<const MaskTrack> subjects, std::size_t frames, std::size_t height,
                                 std::size_t width);

/// Pooled delta over precomputed cells; the shared kernel of extraction and guidance.
FeatureVector pooled_delta(const LatentVideo& latents, const PairCells& pair);

MotionDescriptor descriptor_from_regions(const LatentVideo& latents, const SourceRegions& regions, int timestep);

struct ExtractOptions {
    RegionMode mode = RegionMode::Exclusive;
};

/// Descriptor of subject k. Throws NoValidPairs if no pair has a region.
MotionDescriptor extract_subject_descriptor(const LatentVideo& latents, std::span<const MaskTrack> subjects,
                                            std::size_t k, int timestep, ExtractOptions options = {});
MotionDescriptor extract_background_descriptor(const LatentVideo& latents, std::span<const MaskTrack> subjects,
                                               int timestep);

/// One descriptor per subject, in order, followed by the background.
std::vector<MotionDescriptor> extract_descriptors(const LatentVideo& latents, std::span<const MaskTrack> subjects,
                                                  int timestep, ExtractOptions options = {});

/// (subject + w_c * camera) / (w_c + 1). w_c == 0 returns `subject` unchanged.
FeatureVector soft_blend(const FeatureVector& subject_delta, const FeatureVector& camera_delta, double w_c);

struct SubjectDirective {
    enum class Action { Keep, Remove, Soften };

    Action action = Action::Keep;
    std::optional<double> w_c;        // Soften weight; falls back to EditPlan::w_c
    std::optional<MaskEdit> mask_edit; // applied to the target-side masks only
};

struct EditPlan {
    std::map<std::string, SubjectDirective> directives;
    bool include_background = true;
    bool camera_only = false;
    /// Applied as a soften to every kept subject when positive.
    double w_c = 0.0;

    void validate() const;
};

/// Applies the plan's descriptor-level directives. Mask edits are left for
/// the guidance side.
std::vector<MotionDescriptor> recompose(std::span<const MotionDescriptor> descriptors, const EditPlan& plan);

/// Target-side mask tracks: the plan's mask edits applied to the subjects.
std::vector<MaskTrack> target_masks(std::span<const MaskTrack> subjects, const EditPlan& plan);

}  // namespace conmo
