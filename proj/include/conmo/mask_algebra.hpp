#pragma once

#include <optional>
#include <span>
#include <vector>

#include "conmo/tensor.hpp"

namespace conmo {

RegionMask mask_union(const RegionMask& a, const RegionMask& b);
RegionMask mask_intersection(const RegionMask& a, const RegionMask& b);
/// Cells true in `a` and false in `b`.
RegionMask set_difference(const RegionMask& a, const RegionMask& b);
RegionMask complement(const RegionMask& a);

/// The subject's mask in one frame minus the union of the other subjects'
/// masks taken from the opposing frame.
RegionMask exclusive_region(const RegionMask& subject_frame_i, std::span<const RegionMask> others_frame_j);

/// Region a subject's pair (i, j) is pooled over: the union of the two
/// exclusive regions. With no other subjects this is the plain union of the
/// subject's masks at i and j.
RegionMask pair_region(const MaskTrack& subject, std::span<const MaskTrack> others, std::size_t i,
                       std::size_t j);

/// Union of the subject's masks at i and j, ignoring other subjects.
RegionMask union_pair_region(const MaskTrack& subject, std::size_t i, std::size_t j);

/// Per-frame complement of the union of all subject masks. With no subjects
/// the dims must be given explicitly.
MaskTrack background_track(std::span<const MaskTrack> subjects);
MaskTrack background_track(std::span<const MaskTrack> subjects, std::size_t frames, std::size_t height,
                           std::size_t width);

/// Cells that are background in both frames.
RegionMask background_pair_region(const MaskTrack& background, std::size_t i, std::size_t j);

struct PixelPoint {
    double row = 0.0;
    double col = 0.0;
};

struct MaskEdit {
    enum class Kind { Shift, Scale };

    Kind kind = Kind::Shift;
    int dx = 0;
    int dy = 0;
    double factor = 1.0;
    /// Scale center. When unset each frame scales about its own mask centroid.
    std::optional<PixelPoint> anchor;

    static MaskEdit shift(int dx, int dy) { return MaskEdit{Kind::Shift, dx, dy, 1.0, std::nullopt}; }
    static MaskEdit scale(double factor, std::optional<PixelPoint> anchor = std::nullopt) {
        return MaskEdit{Kind::Scale, 0, 0, factor, anchor};
    }
};

/// Shift translates true cells and drops those leaving the frame. Scale maps
/// each output cell back through the inverse transform and samples the
/// nearest source cell (round half up). Output dims equal input dims.
MaskTrack apply_edit(const MaskTrack& track, const MaskEdit& edit);

/// Mean (row, col) of the true cells, or nullopt for an empty mask.
std::optional<PixelPoint> mask_centroid(const RegionMask& mask);

}  // namespace conmo
