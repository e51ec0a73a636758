#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "conmo/error.hpp"

namespace conmo {

struct VideoDims {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t frame_size() const noexcept { return channels * height * width; }
    std::size_t plane_size() const noexcept { return height * width; }
    std::size_t total() const noexcept { return frames * frame_size(); }
    bool operator==(const VideoDims&) const = default;
};

std::string to_string(const VideoDims& dims);

/// Read-only view of one frame, laid out (channels, height, width) row-major.
struct FrameView {
    std::span<const double> data;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * height + y) * width + x];
    }
};

/// Per-frame latent features, (frames, channels, height, width) row-major.
///
/// Values are held as double in memory. The on-disk format is f32, so values
/// loaded from a file are exactly representable and survive a save/load
/// round trip bit for bit.
class LatentVideo {
public:
    LatentVideo() = default;
    /// Zero-filled video. Throws DimMismatch on frames < 2 or any zero dim.
    explicit LatentVideo(VideoDims dims, double fill = 0.0);
    /// Takes ownership of `data`; validates dims and finiteness.
    LatentVideo(VideoDims dims, std::vector<double> data);

    const VideoDims& dims() const noexcept { return dims_; }
    std::size_t frames() const noexcept { return dims_.frames; }
    std::size_t channels() const noexcept { return dims_.channels; }
    std::size_t height() const noexcept { return dims_.height; }
    std::size_t width() const noexcept { return dims_.width; }
    std::size_t size() const noexcept { return data_.size(); }

    double& at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) {
        return data_[index(f, c, y, x)];
    }
    double at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[index(f, c, y, x)];
    }
    std::size_t index(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return ((f * dims_.channels + c) * dims_.height + y) * dims_.width + x;
    }

    FrameView frame(std::size_t f) const;
    std::span<double> frame_data(std::size_t f);

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// Throws NonFinite if any element is NaN or Inf.
    void validate() const;

    bool operator==(const LatentVideo&) const = default;

private:
    VideoDims dims_;
    std::vector<double> data_;
};

void check_dims(const VideoDims& dims);

/// Binary mask over one frame, (height, width) row-major, one byte per cell.
class RegionMask {
public:
    RegionMask() = default;
    RegionMask(std::size_t height, std::size_t width, bool fill = false);
    RegionMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> cells);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t cell_count() const noexcept { return cells_.size(); }

    bool at(std::size_t y, std::size_t x) const { return cells_[y * width_ + x] != 0; }
    void set(std::size_t y, std::size_t x, bool v) { cells_[y * width_ + x] = v ? 1 : 0; }
    bool test(std::size_t flat) const { return cells_[flat] != 0; }

    std::size_t area() const noexcept;
    bool empty() const noexcept { return area() == 0; }

    std::span<const std::uint8_t> cells() const noexcept { return cells_; }
    std::span<std::uint8_t> cells() noexcept { return cells_; }

    bool operator==(const RegionMask&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> cells_;
};

/// Per-frame masks for one subject.
class MaskTrack {
public:
    MaskTrack() = default;
    MaskTrack(std::string subject_id, std::size_t frames, std::size_t height, std::size_t width);
    MaskTrack(std::string subject_id, std::vector<RegionMask> frames);

    const std::string& subject_id() const noexcept { return subject_id_; }
    void set_subject_id(std::string id) { subject_id_ = std::move(id); }

    std::size_t frames() const noexcept { return frames_.size(); }
    std::size_t height() const noexcept { return frames_.empty() ? 0 : frames_.front().height(); }
    std::size_t width() const noexcept { return frames_.empty() ? 0 : frames_.front().width(); }

    const RegionMask& frame(std::size_t f) const;
    RegionMask& frame(std::size_t f);
    const std::vector<RegionMask>& frame_masks() const noexcept { return frames_; }

    bool empty_everywhere() const;

    bool operator==(const MaskTrack&) const = default;

private:
    std::string subject_id_;
    std::vector<RegionMask> frames_;
};

/// Throws DimMismatch unless `track` has the video's frame count and spatial dims.
void check_compatible(const LatentVideo& video, const MaskTrack& track);

}  // namespace conmo
