#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "conmo/tensor.hpp"

namespace conmo {

namespace fs = std::filesystem;

/// Dimension-generic contents of a "CMT1" file.
struct RawTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t element_count() const;
};

// CMT1: "CMT1" | u32 ndim | ndim x u32 dims | prod(dims) x f32, all little-endian.
RawTensor read_cmt(const fs::path& path);
void write_cmt(const RawTensor& tensor, const fs::path& path);

/// Loads a 4-D (frames, channels, height, width) tensor.
LatentVideo load_tensor(const fs::path& path);
/// Writes the video as f32. Values that overflow f32 are rejected with NonFinite.
void save_tensor(const LatentVideo& video, const fs::path& path);

// CMM1: "CMM1" | u32 ndim (=3) | 3 x u32 dims | prod(dims) bytes in {0, 1}.
MaskTrack load_mask(const fs::path& path, std::string subject_id = {});
void save_mask(const MaskTrack& track, const fs::path& path);

/// Scene description tying latents and masks together on disk. Paths are
/// stored relative to the manifest's directory when written.
struct SceneManifest {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::map<int, fs::path> latents;        // timestep -> tensor path
    std::map<std::string, fs::path> masks;  // subject id -> mask path
    std::vector<std::string> subjects;      // subject order

    VideoDims dims() const { return {frames, channels, height, width}; }
};

/// Parses the manifest and checks every referenced file exists with matching
/// header dims. Relative paths are resolved against the manifest directory.
SceneManifest load_manifest(const fs::path& path);
void save_manifest(const SceneManifest& manifest, const fs::path& path);

/// Mask tracks in manifest subject order, ids attached.
std::vector<MaskTrack> load_manifest_masks(const SceneManifest& manifest);

}  // namespace conmo
