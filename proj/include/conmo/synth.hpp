#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "conmo/mask_algebra.hpp"
#include "conmo/tensor.hpp"

namespace conmo {

using Trajectory = std::vector<std::optional<PixelPoint>>;

struct BlobSpec {
    std::string subject_id;
    std::vector<PixelPoint> trajectory;  // one center per frame
    double radius = 1.0;
    std::vector<double> signature;       // one value per channel
};

struct SceneSpec {
    VideoDims dims;
    std::vector<BlobSpec> blobs;
    std::vector<PixelPoint> background_drift;  // per-frame camera offset
    std::uint64_t texture_seed = 0;
    double texture_amplitude = 0.25;

    void validate() const;
};

struct RenderedScene {
    LatentVideo latents;
    std::vector<MaskTrack> masks;          // one per blob, blob order
    std::vector<Trajectory> trajectories;  // ground-truth centers per blob
    std::vector<bool> clipped;             // blob disk leaves the frame somewhere
};

/// Smooth seeded background field: a few low-frequency sinusoids per channel.
class BackgroundTexture {
public:
    BackgroundTexture(std::size_t channels, std::size_t height, std::size_t width, std::uint64_t seed,
                      double amplitude);
    double value(std::size_t channel, double row, double col) const;

private:
    struct Wave {
        double amplitude;
        double freq_row;
        double freq_col;
        double phase;
    };
    std::vector<std::vector<Wave>> waves_;
};

/// Latent cell = texture(cell - drift) + signature of the covering blob (the
/// last blob in list order wins); a blob's mask is every cell whose center
/// lies within `radius` of the blob center.
RenderedScene render_scene(const SceneSpec& spec);

/// Mean true-cell coordinates per frame; nullopt for empty frames.
Trajectory centroid_trajectory(const MaskTrack& mask);

SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec load_scene_spec(const std::filesystem::path& path);

nlohmann::json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& j);

/// Writes one 8-bit PGM per frame of `channel`, min-max normalized over the video.
void dump_pgm(const LatentVideo& latents, std::size_t channel, const std::filesystem::path& dir,
              const std::string& prefix);

}  // namespace conmo
