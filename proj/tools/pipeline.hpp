#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conmo/diffusion.hpp"
#include "conmo/editing.hpp"
#include "conmo/synth.hpp"

namespace conmo::cli {

namespace fs = std::filesystem;

// Per-blob modification used to derive atlas variants from a scene.
struct BlobPatch {
    bool remove = false;
    bool make_static = false;  // every frame at the first trajectory point
    PixelPoint offset;
    double radius_scale = 1.0;
};

struct SceneVariant {
    std::string name;
    std::optional<std::vector<PixelPoint>> background_drift;
    std::vector<std::pair<std::string, BlobPatch>> blobs;
};

SceneSpec apply_variant(const SceneSpec& base, const SceneVariant& variant);

struct ScheduleOptions {
    int n_steps = 20;
    double bandwidth = 0.5;
    bool zero_noise = false;
    int inversion_refinements = 10;  // fixed-point iterations per inversion step
};

struct RunConfig {
    SceneSpec scene;
    std::vector<SceneVariant> atlas;  // the reference scene is always member 0
    ScheduleOptions schedule;
    EditPlan plan;
    EditSettings settings;
    bool unguided_baseline = false;
    bool pgm = false;
};

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_run_config(const fs::path& path);

EditPlan plan_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const EditPlan& plan);
GuidanceConfig guidance_from_json(const nlohmann::json& j, int n_steps);
nlohmann::json guidance_to_json(const GuidanceConfig& cfg);

// Descriptor archive: <source>_t<ttt>.json ({source_id, timestep, n_frames,
// valid_pairs, legacy, tensor}) next to a CMT1 tensor of shape
// (n_valid_pairs, channels) holding the i < j deltas in valid_pairs order.
fs::path save_descriptor(const MotionDescriptor& d, const fs::path& dir, bool legacy);
MotionDescriptor load_descriptor(const fs::path& json_path, bool* legacy = nullptr);
/// Every descriptor archived in `dir` for timestep t, in file name order.
std::vector<MotionDescriptor> load_descriptors_at(const fs::path& dir, int t);

// Subject records as written to trajectories.json.
struct SubjectRecord {
    std::string id;
    std::vector<double> signature;
    Trajectory trajectory;
};
std::vector<SubjectRecord> load_subject_records(const fs::path& path);
void save_subject_records(const std::vector<SubjectRecord>& records, const fs::path& path);

void write_json(const nlohmann::json& j, const fs::path& path);
nlohmann::json read_json(const fs::path& path);

// Stages. Each writes its artifacts into out_dir and returns a short summary.

nlohmann::json synth_stage(const SceneSpec& spec, const fs::path& out_dir, bool pgm);

struct InvertOptions {
    ScheduleOptions schedule;
    std::vector<fs::path> atlas_manifests;  // empty: the scene itself is the atlas
};
nlohmann::json invert_stage(const fs::path& manifest, const InvertOptions& options, const fs::path& out_dir);

/// Loads an inversion archive written by invert_stage.
struct InversionArchive {
    std::vector<LatentVideo> trajectory;
    ScheduleOptions schedule;
    std::vector<LatentVideo> atlas;
};
InversionArchive load_inversion(const fs::path& dir);
std::unique_ptr<Denoiser> make_denoiser(const InversionArchive& archive);

struct ExtractOptions {
    bool legacy = false;
    std::vector<int> timesteps;  // empty: all
};
nlohmann::json extract_stage(const fs::path& trajectory_dir, const fs::path& manifest, const ExtractOptions& options,
                             const fs::path& out_dir);

struct RecomposeOptions {
    EditPlan plan;
    EditSettings settings;
    std::optional<fs::path> descriptors_dir;  // reference descriptors; recomputed from the trajectory when absent
};
nlohmann::json recompose_stage(const fs::path& trajectory_dir, const fs::path& manifest,
                               const RecomposeOptions& options, const fs::path& out_dir);

nlohmann::json metrics_stage(const fs::path& out_dir, const fs::path& reference_dir);

nlohmann::json run_pipeline(const RunConfig& config, const fs::path& out_dir);

}  // namespace conmo::cli
