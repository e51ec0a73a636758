#include "conmo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace conmo {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadValue: return "BadValue";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::EmptyRegion: return "EmptyRegion";
        case ErrorCode::NoValidPairs: return "NoValidPairs";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::UnknownSubject: return "UnknownSubject";
        case ErrorCode::MissingBackground: return "MissingBackground";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

std::string to_string(const VideoDims& dims) {
    std::ostringstream os;
    os << "(" << dims.frames << ", " << dims.channels << ", " << dims.height << ", " << dims.width << ")";
    return os.str();
}

void check_dims(const VideoDims& dims) {
    if (dims.frames < 2 || dims.channels < 1 || dims.height < 1 || dims.width < 1) {
        throw Error(ErrorCode::DimMismatch, "invalid latent dims " + to_string(dims));
    }
}

LatentVideo::LatentVideo(VideoDims dims, double fill) : dims_(dims) {
    check_dims(dims_);
    data_.assign(dims_.total(), fill);
    validate();
}

LatentVideo::LatentVideo(VideoDims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_.total()) {
        throw Error(ErrorCode::DimMismatch, "payload has " + std::to_string(data_.size()) +
                                                " elements, dims " + to_string(dims_) + " need " +
                                                std::to_string(dims_.total()));
    }
    validate();
}

FrameView LatentVideo::frame(std::size_t f) const {
    if (f >= dims_.frames) throw Error(ErrorCode::IndexOutOfRange, "frame " + std::to_string(f));
    const auto n = dims_.frame_size();
    return FrameView{std::span<const double>(data_).subspan(f * n, n), dims_.channels, dims_.height,
                     dims_.width};
}

std::span<double> LatentVideo::frame_data(std::size_t f) {
    if (f >= dims_.frames) throw Error(ErrorCode::IndexOutOfRange, "frame " + std::to_string(f));
    const auto n = dims_.frame_size();
    return std::span<double>(data_).subspan(f * n, n);
}

void LatentVideo::validate() const {
    for (std::size_t k = 0; k < data_.size(); ++k) {
        if (!std::isfinite(data_[k])) {
            throw Error(ErrorCode::NonFinite, "element " + std::to_string(k) + " is not finite");
        }
    }
}

RegionMask::RegionMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), cells_(height * width, fill ? 1 : 0) {
    if (height == 0 || width == 0) throw Error(ErrorCode::DimMismatch, "mask dims must be positive");
}

RegionMask::RegionMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> cells)
    : height_(height), width_(width), cells_(std::move(cells)) {
    if (height == 0 || width == 0) throw Error(ErrorCode::DimMismatch, "mask dims must be positive");
    if (cells_.size() != height * width) throw Error(ErrorCode::DimMismatch, "mask payload length");
    for (auto v : cells_) {
        if (v > 1) throw Error(ErrorCode::BadValue, "mask cell value " + std::to_string(v));
    }
}

std::size_t RegionMask::area() const noexcept {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

MaskTrack::MaskTrack(std::string subject_id, std::size_t frames, std::size_t height, std::size_t width)
    : subject_id_(std::move(subject_id)), frames_(frames, RegionMask(height, width)) {
    if (frames == 0) throw Error(ErrorCode::DimMismatch, "mask track needs at least one frame");
}

MaskTrack::MaskTrack(std::string subject_id, std::vector<RegionMask> frames)
    : subject_id_(std::move(subject_id)), frames_(std::move(frames)) {
    if (frames_.empty()) throw Error(ErrorCode::DimMismatch, "mask track needs at least one frame");
    for (const auto& m : frames_) {
        if (m.height() != frames_.front().height() || m.width() != frames_.front().width()) {
            throw Error(ErrorCode::DimMismatch, "mask track frames differ in size");
        }
    }
}

const RegionMask& MaskTrack::frame(std::size_t f) const {
    if (f >= frames_.size()) throw Error(ErrorCode::IndexOutOfRange, "mask frame " + std::to_string(f));
    return frames_[f];
}

RegionMask& MaskTrack::frame(std::size_t f) {
    if (f >= frames_.size()) throw Error(ErrorCode::IndexOutOfRange, "mask frame " + std::to_string(f));
    return frames_[f];
}

bool MaskTrack::empty_everywhere() const {
    return std::all_of(frames_.begin(), frames_.end(), [](const RegionMask& m) { return m.empty(); });
}

void check_compatible(const LatentVideo& video, const MaskTrack& track) {
    if (track.frames() != video.frames() || track.height() != video.height() ||
        track.width() != video.width()) {
        throw Error(ErrorCode::DimMismatch, "mask track '" + track.subject_id() + "' does not match video " +
                                                to_string(video.dims()));
    }
}

}  // namespace conmo
