#include "conmo/mask_algebra.hpp"

#include <cmath>

namespace conmo {

namespace {

void require_same_dims(const RegionMask& a, const RegionMask& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw Error(ErrorCode::DimMismatch, "mask dims differ");
    }
}

template <typename Op>
RegionMask combine(const RegionMask& a, const RegionMask& b, Op op) {
    require_same_dims(a, b);
    RegionMask out(a.height(), a.width());
    auto ca = a.cells();
    auto cb = b.cells();
    auto co = out.cells();
    for (std::size_t k = 0; k < co.size(); ++k) co[k] = op(ca[k] != 0, cb[k] != 0) ? 1 : 0;
    return out;
}

std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

RegionMask scale_frame(const RegionMask& src, double factor, PixelPoint anchor) {
    const auto h = static_cast<std::int64_t>(src.height());
    const auto w = static_cast<std::int64_t>(src.width());
    RegionMask out(src.height(), src.width());
    for (std::int64_t y = 0; y < h; ++y) {
        const auto sy = round_half_up(anchor.row + (static_cast<double>(y) - anchor.row) / factor);
        if (sy < 0 || sy >= h) continue;
        for (std::int64_t x = 0; x < w; ++x) {
            const auto sx = round_half_up(anchor.col + (static_cast<double>(x) - anchor.col) / factor);
            if (sx < 0 || sx >= w) continue;
            if (src.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx))) {
                out.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), true);
            }
        }
    }
    return out;
}

RegionMask shift_frame(const RegionMask& src, int dx, int dy) {
    const auto h = static_cast<std::int64_t>(src.height());
    const auto w = static_cast<std::int64_t>(src.width());
    RegionMask out(src.height(), src.width());
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            if (!src.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) continue;
            const auto ty = y + dy;
            const auto tx = x + dx;
            if (ty < 0 || ty >= h || tx < 0 || tx >= w) continue;
            out.set(static_cast<std::size_t>(ty), static_cast<std::size_t>(tx), true);
        }
    }
    return out;
}

}  // namespace

RegionMask mask_union(const RegionMask& a, const RegionMask& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
}

RegionMask mask_intersection(const RegionMask& a, const RegionMask& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
}

RegionMask set_difference(const RegionMask& a, const RegionMask& b) {
    return combine(a, b, [](bool x, bool y) { return x && !y; });
}

RegionMask complement(const RegionMask& a) {
    RegionMask out(a.height(), a.width());
    auto ca = a.cells();
    auto co = out.cells();
    for (std::size_t k = 0; k < co.size(); ++k) co[k] = ca[k] ? 0 : 1;
    return out;
}

RegionMask exclusive_region(const RegionMask& subject_frame_i, std::span<const RegionMask> others_frame_j) {
    RegionMask out = subject_frame_i;
    for (const auto& other : others_frame_j) out = set_difference(out, other);
    return out;
}

RegionMask pair_region(const MaskTrack& subject, std::span<const MaskTrack> others, std::size_t i,
                       std::size_t j) {
    if (i >= subject.frames() || j >= subject.frames()) {
        throw Error(ErrorCode::IndexOutOfRange, "frame pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                                    ") outside " + std::to_string(subject.frames()) + " frames");
    }
    std::vector<RegionMask> others_i;
    std::vector<RegionMask> others_j;
    others_i.reserve(others.size());
    others_j.reserve(others.size());
    for (const auto& o : others) {
        if (o.frames() != subject.frames()) throw Error(ErrorCode::DimMismatch, "mask track frame counts differ");
        others_i.push_back(o.frame(i));
        others_j.push_back(o.frame(j));
    }
    return mask_union(exclusive_region(subject.frame(i), others_j), exclusive_region(subject.frame(j), others_i));
}

RegionMask union_pair_region(const MaskTrack& subject, std::size_t i, std::size_t j) {
    return pair_region(subject, {}, i, j);
}

MaskTrack background_track(std::span<const MaskTrack> subjects) {
    if (subjects.empty()) {
        throw Error(ErrorCode::InvalidArgument, "background of zero subjects needs explicit dims");
    }
    return background_track(subjects, subjects.front().frames(), subjects.front().height(),
                            subjects.front().width());
}

MaskTrack background_track(std::span<const MaskTrack> subjects, std::size_t frames, std::size_t height,
                           std::size_t width) {
    std::vector<RegionMask> out(frames, RegionMask(height, width, true));
    for (const auto& s : subjects) {
        if (s.frames() != frames || s.height() != height || s.width() != width) {
            throw Error(ErrorCode::DimMismatch, "subject '" + s.subject_id() + "' dims disagree");
        }
        for (std::size_t f = 0; f < frames; ++f) out[f] = set_difference(out[f], s.frame(f));
    }
    return MaskTrack("background", std::move(out));
}

RegionMask background_pair_region(const MaskTrack& background, std::size_t i, std::size_t j) {
    return mask_intersection(background.frame(i), background.frame(j));
}

MaskTrack apply_edit(const MaskTrack& track, const MaskEdit& edit) {
    std::vector<RegionMask> frames;
    frames.reserve(track.frames());
    if (edit.kind == MaskEdit::Kind::Shift) {
        for (const auto& m : track.frame_masks()) frames.push_back(shift_frame(m, edit.dx, edit.dy));
        return MaskTrack(track.subject_id(), std::move(frames));
    }
    if (!(edit.factor > 0.0) || !std::isfinite(edit.factor)) {
        throw Error(ErrorCode::InvalidArgument, "scale factor must be positive");
    }
    if (edit.anchor) {
        const auto& a = *edit.anchor;
        if (a.row < 0.0 || a.col < 0.0 || a.row > static_cast<double>(track.height() - 1) ||
            a.col > static_cast<double>(track.width() - 1)) {
            throw Error(ErrorCode::InvalidArgument, "scale anchor outside the frame");
        }
    }
    for (const auto& m : track.frame_masks()) {
        auto anchor = edit.anchor ? edit.anchor : mask_centroid(m);
        frames.push_back(anchor ? scale_frame(m, edit.factor, *anchor) : m);
    }
    return MaskTrack(track.subject_id(), std::move(frames));
}

std::optional<PixelPoint> mask_centroid(const RegionMask& mask) {
    double sr = 0.0;
    double sc = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < mask.height(); ++y) {
        for (std::size_t x = 0; x < mask.width(); ++x) {
            if (!mask.at(y, x)) continue;
            sr += static_cast<double>(y);
            sc += static_cast<double>(x);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return PixelPoint{sr / static_cast<double>(n), sc / static_cast<double>(n)};
}

}  // namespace conmo
