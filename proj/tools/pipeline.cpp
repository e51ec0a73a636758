#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "conmo/io.hpp"
#include "conmo/metrics.hpp"

namespace conmo::cli {

namespace {

using nlohmann::json;

PixelPoint point_of(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw Error(ErrorCode::InvalidArgument, what + " must be [row, col]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<PixelPoint> drift_of(const json& j, std::size_t frames) {
    std::vector<PixelPoint> out;
    if (j.is_object()) {
        const auto step = point_of(j.at("per_frame"), "background_drift.per_frame");
        for (std::size_t f = 0; f < frames; ++f) {
            out.push_back({step.row * static_cast<double>(f), step.col * static_cast<double>(f)});
        }
    } else {
        for (const auto& p : j) out.push_back(point_of(p, "background_drift entry"));
    }
    return out;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw Error(ErrorCode::InvalidArgument, "unknown key '" + key + "' in " + where);
        }
    }
}

std::string step_name(int t) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d", t);
    return buf;
}

fs::path descriptor_file(const fs::path& dir, const std::string& source, int t) {
    return dir / (source + "_t" + step_name(t) + ".json");
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

const char* action_name(SubjectDirective::Action a) {
    switch (a) {
        case SubjectDirective::Action::Keep: return "keep";
        case SubjectDirective::Action::Remove: return "remove";
        case SubjectDirective::Action::Soften: return "soften";
    }
    return "keep";
}


// Descriptors of every source that has at least one valid pair.
std::vector<MotionDescriptor> extract_available(const LatentVideo& latents, const std::vector<MaskTrack>& masks, int t,
                                                RegionMode mode) {
    std::vector<MotionDescriptor> out;
    for (std::size_t k = 0; k < masks.size(); ++k) {
        if (masks[k].empty_everywhere()) continue;
        try {
            out.push_back(extract_subject_descriptor(latents, masks, k, t, {mode}));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoValidPairs) throw;
        }
    }
    auto bg = extract_background_descriptor(latents, masks, t);
    if (!bg.deltas.empty()) out.push_back(std::move(bg));
    return out;
}

}  // namespace

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
}

SceneSpec apply_variant(const SceneSpec& base, const SceneVariant& variant) {
    SceneSpec spec = base;
    if (variant.background_drift) spec.background_drift = *variant.background_drift;
    for (const auto& [id, patch] : variant.blobs) {
        auto it = std::find_if(spec.blobs.begin(), spec.blobs.end(), [&](const BlobSpec& b) { return b.subject_id == id; });
        if (it == spec.blobs.end()) {
            throw Error(ErrorCode::UnknownSubject, "atlas variant '" + variant.name + "' patches unknown blob '" + id + "'");
        }
        if (patch.remove) {
            spec.blobs.erase(it);
            continue;
        }
        if (patch.make_static) std::fill(it->trajectory.begin(), it->trajectory.end(), it->trajectory.front());
        for (auto& p : it->trajectory) {
            p.row += patch.offset.row;
            p.col += patch.offset.col;
        }
        it->radius *= patch.radius_scale;
    }
    spec.validate();
    return spec;
}

EditPlan plan_from_json(const json& j) {
    reject_unknown(j, {"w_c", "camera_only", "include_background", "subjects"}, "plan");
    EditPlan plan;
    try {
        plan.w_c = j.value("w_c", 0.0);
        plan.camera_only = j.value("camera_only", false);
        plan.include_background = j.value("include_background", true);
        const auto subjects = j.value("subjects", json::object());
        for (const auto& [id, js] : subjects.items()) {
            reject_unknown(js, {"action", "w_c", "shift", "scale", "anchor"}, "plan.subjects." + id);
            SubjectDirective d;
            const auto action = js.value("action", std::string("keep"));
            if (action == "keep") d.action = SubjectDirective::Action::Keep;
            else if (action == "remove") d.action = SubjectDirective::Action::Remove;
            else if (action == "soften") d.action = SubjectDirective::Action::Soften;
            else throw Error(ErrorCode::InvalidArgument, "unknown action '" + action + "' for " + id);
            if (js.contains("w_c")) d.w_c = js.at("w_c").get<double>();
            if (js.contains("shift") && js.contains("scale")) {
                throw Error(ErrorCode::InvalidArgument, "subject " + id + ": shift and scale are exclusive");
            }
            if (js.contains("shift")) {
                const auto& s = js.at("shift");
                if (!s.is_array() || s.size() != 2) throw Error(ErrorCode::InvalidArgument, "shift must be [dx, dy]");
                d.mask_edit = MaskEdit::shift(s[0].get<int>(), s[1].get<int>());
            }
            if (js.contains("scale")) {
                std::optional<PixelPoint> anchor;
                if (js.contains("anchor")) anchor = point_of(js.at("anchor"), "anchor");
                d.mask_edit = MaskEdit::scale(js.at("scale").get<double>(), anchor);
            }
            plan.directives[id] = d;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("plan: ") + e.what());
    }
    plan.validate();
    return plan;
}

json plan_to_json(const EditPlan& plan) {
    json j{{"w_c", plan.w_c}, {"camera_only", plan.camera_only}, {"include_background", plan.include_background}};
    j["subjects"] = json::object();
    for (const auto& [id, d] : plan.directives) {
        json js{{"action", action_name(d.action)}};
        if (d.w_c) js["w_c"] = *d.w_c;
        if (d.mask_edit) {
            const auto& e = *d.mask_edit;
            if (e.kind == MaskEdit::Kind::Shift) {
                js["shift"] = {e.dx, e.dy};
            } else {
                js["scale"] = e.factor;
                if (e.anchor) js["anchor"] = {e.anchor->row, e.anchor->col};
            }
        }
        j["subjects"][id] = js;
    }
    return j;
}

GuidanceConfig guidance_from_json(const json& j, int n_steps) {
    reject_unknown(j, {"step_size", "normalize_step", "n_inner_steps", "t_start", "t_end", "weights", "w_c"},
                   "guidance");
    auto cfg = GuidanceConfig::with_default_window(n_steps);
    try {
        cfg.step_size = j.value("step_size", cfg.step_size);
        cfg.normalize_step = j.value("normalize_step", cfg.normalize_step);
        cfg.n_inner_steps = j.value("n_inner_steps", cfg.n_inner_steps);
        cfg.t_start = j.value("t_start", cfg.t_start);
        cfg.t_end = j.value("t_end", cfg.t_end);
        cfg.w_c = j.value("w_c", cfg.w_c);
        if (j.contains("weights")) cfg.per_source_weight = j.at("weights").get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("guidance: ") + e.what());
    }
    if (cfg.t_start > n_steps) {
        throw Error(ErrorCode::InvalidArgument, "guidance t_start exceeds n_steps (" + std::to_string(n_steps) + ")");
    }
    cfg.validate();
    return cfg;
}

json guidance_to_json(const GuidanceConfig& cfg) {
    return json{{"step_size", cfg.step_size},     {"normalize_step", cfg.normalize_step},
                {"n_inner_steps", cfg.n_inner_steps}, {"t_start", cfg.t_start},
                {"t_end", cfg.t_end},             {"weights", cfg.per_source_weight},
                {"w_c", cfg.w_c}};
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
    reject_unknown(j,
                   {"scene", "scene_path", "atlas", "schedule", "guidance", "plan", "noise", "legacy_regions",
                    "unguided_baseline", "pgm"},
                   "run config");
    RunConfig cfg;
    try {
        if (j.contains("scene")) {
            cfg.scene = scene_from_json(j.at("scene"));
        } else if (j.contains("scene_path")) {
            fs::path p = j.at("scene_path").get<std::string>();
            cfg.scene = load_scene_spec(p.is_absolute() ? p : base_dir / p);
        } else {
            throw Error(ErrorCode::InvalidArgument, "run config needs 'scene' or 'scene_path'");
        }

        const auto& sj = j.value("schedule", json::object());
        reject_unknown(sj, {"n_steps", "bandwidth", "zero_noise", "inversion_refinements"}, "schedule");
        cfg.schedule.n_steps = sj.value("n_steps", 20);
        cfg.schedule.bandwidth = sj.value("bandwidth", 0.5);
        cfg.schedule.zero_noise = sj.value("zero_noise", false);
        cfg.schedule.inversion_refinements = sj.value("inversion_refinements", 10);
        if (cfg.schedule.inversion_refinements < 0) {
            throw Error(ErrorCode::InvalidArgument, "inversion_refinements must be >= 0");
        }
        if (cfg.schedule.n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 0");
        if (!(cfg.schedule.bandwidth > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be positive");

        std::set<std::string> names;
        for (const auto& jv : j.value("atlas", json::array())) {
            reject_unknown(jv, {"name", "background_drift", "blobs"}, "atlas entry");
            SceneVariant v;
            v.name = jv.at("name").get<std::string>();
            if (v.name.empty() || v.name == "reference" || !names.insert(v.name).second) {
                throw Error(ErrorCode::InvalidArgument, "atlas names must be unique, non-empty and not 'reference'");
            }
            if (jv.contains("background_drift")) v.background_drift = drift_of(jv.at("background_drift"), cfg.scene.dims.frames);
            const auto patches = jv.value("blobs", json::object());
            for (const auto& [id, jb] : patches.items()) {
                reject_unknown(jb, {"remove", "static", "offset", "radius_scale"}, "atlas blob patch");
                BlobPatch p;
                p.remove = jb.value("remove", false);
                p.make_static = jb.value("static", false);
                if (jb.contains("offset")) p.offset = point_of(jb.at("offset"), "offset");
                p.radius_scale = jb.value("radius_scale", 1.0);
                if (!(p.radius_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius_scale must be positive");
                v.blobs.emplace_back(id, p);
            }
            cfg.atlas.push_back(std::move(v));
        }

        cfg.settings.guidance = guidance_from_json(j.value("guidance", json::object()), cfg.schedule.n_steps);
        cfg.plan = plan_from_json(j.value("plan", json::object()));

        const auto& nj = j.value("noise", json::object());
        reject_unknown(nj, {"mode", "seed"}, "noise");
        const auto mode = nj.value("mode", std::string("shared"));
        if (mode == "shared") cfg.settings.noise = NoiseMode::Shared;
        else if (mode == "fresh") cfg.settings.noise = NoiseMode::Fresh;
        else throw Error(ErrorCode::InvalidArgument, "noise mode must be 'shared' or 'fresh'");
        cfg.settings.seed = nj.value("seed", std::uint64_t{0});
        cfg.settings.mode = j.value("legacy_regions", false) ? RegionMode::Union : RegionMode::Exclusive;
        cfg.unguided_baseline = j.value("unguided_baseline", false);
        cfg.pgm = j.value("pgm", false);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("run config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json(path), path.parent_path()); }

fs::path save_descriptor(const MotionDescriptor& d, const fs::path& dir, bool legacy) {
    const auto pairs = d.valid_pairs();
    std::vector<FramePair> upper;
    for (const auto& p : pairs) {
        if (p.first < p.second) upper.push_back(p);
    }
    if (upper.empty()) throw Error(ErrorCode::NoValidPairs, "descriptor '" + d.source_id + "' has no pairs to save");
    const auto stem = d.source_id + "_t" + step_name(d.timestep);
    RawTensor values;
    values.dims = {static_cast<std::uint32_t>(upper.size()), static_cast<std::uint32_t>(d.channels())};
    json valid = json::array();
    for (const auto& p : upper) {
        valid.push_back({p.first, p.second});
        for (double v : d.deltas.at(p)) values.values.push_back(static_cast<float>(v));
    }
    fs::create_directories(dir);
    write_cmt(values, dir / (stem + ".cmt"));
    const auto path = dir / (stem + ".json");
    write_json(json{{"source_id", d.source_id},
                    {"timestep", d.timestep},
                    {"n_frames", d.n_frames},
                    {"valid_pairs", valid},
                    {"legacy", legacy},
                    {"tensor", stem + ".cmt"}},
               path);
    return path;
}

MotionDescriptor load_descriptor(const fs::path& json_path, bool* legacy) {
    const auto j = read_json(json_path);
    MotionDescriptor d;
    try {
        d.source_id = j.at("source_id").get<std::string>();
        d.timestep = j.at("timestep").get<int>();
        d.n_frames = j.at("n_frames").get<std::size_t>();
        if (legacy) *legacy = j.value("legacy", false);
        const auto values = read_cmt(json_path.parent_path() / j.at("tensor").get<std::string>());
        const auto& valid = j.at("valid_pairs");
        if (values.dims.size() != 2 || values.dims[0] != valid.size()) {
            throw Error(ErrorCode::DimMismatch, json_path.string() + ": tensor does not match valid_pairs");
        }
        const std::size_t channels = values.dims[1];
        for (std::size_t k = 0; k < valid.size(); ++k) {
            const auto i = valid[k].at(0).get<std::size_t>();
            const auto jj = valid[k].at(1).get<std::size_t>();
            if (i >= d.n_frames || jj >= d.n_frames || i == jj) {
                throw Error(ErrorCode::IndexOutOfRange, json_path.string() + ": pair out of range");
            }
            FeatureVector delta(values.values.begin() + static_cast<std::ptrdiff_t>(k * channels),
                                values.values.begin() + static_cast<std::ptrdiff_t>((k + 1) * channels));
            d.set_pair(i, jj, std::move(delta));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, json_path.string() + ": " + e.what());
    }
    return d;
}

std::vector<MotionDescriptor> load_descriptors_at(const fs::path& dir, int t) {
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
        const auto suffix = "_t" + step_name(t) + ".json";
        for (const auto& entry : fs::directory_iterator(dir)) {
            const auto name = entry.path().filename().string();
            if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
                files.push_back(entry.path());
            }
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<MotionDescriptor> out;
    for (const auto& f : files) out.push_back(load_descriptor(f));
    return out;
}

std::vector<SubjectRecord> load_subject_records(const fs::path& path) {
    const auto j = read_json(path);
    std::vector<SubjectRecord> out;
    try {
        for (const auto& js : j.at("subjects")) {
            out.push_back({js.at("id").get<std::string>(), js.value("signature", std::vector<double>{}),
                           trajectory_from_json(js.at("trajectory"))});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
    return out;
}

void save_subject_records(const std::vector<SubjectRecord>& records, const fs::path& path) {
    json arr = json::array();
    for (const auto& r : records) {
        arr.push_back(json{{"id", r.id}, {"signature", r.signature}, {"trajectory", trajectory_to_json(r.trajectory)}});
    }
    write_json(json{{"subjects", arr}}, path);
}

json synth_stage(const SceneSpec& spec, const fs::path& out_dir, bool pgm) {
    const auto scene = render_scene(spec);
    fs::create_directories(out_dir);
    save_tensor(scene.latents, out_dir / "latents.cmt");

    SceneManifest manifest;
    manifest.frames = spec.dims.frames;
    manifest.channels = spec.dims.channels;
    manifest.height = spec.dims.height;
    manifest.width = spec.dims.width;
    manifest.latents[0] = out_dir / "latents.cmt";
    std::vector<SubjectRecord> records;
    json clipped = json::array();
    for (std::size_t k = 0; k < scene.masks.size(); ++k) {
        const auto& id = spec.blobs[k].subject_id;
        const auto path = out_dir / ("mask_" + id + ".cmm");
        save_mask(scene.masks[k], path);
        manifest.masks[id] = path;
        manifest.subjects.push_back(id);
        records.push_back({id, spec.blobs[k].signature, scene.trajectories[k]});
        if (scene.clipped[k]) {
            warn("blob '" + id + "' leaves the frame");
            clipped.push_back(id);
        }
    }
    save_manifest(manifest, out_dir / "manifest.json");
    save_subject_records(records, out_dir / "trajectories.json");
    write_json(scene_to_json(spec), out_dir / "scene.json");
    // Stored latents are f32; describe what is on disk.
    const auto stored = load_tensor(out_dir / "latents.cmt");
    for (const auto& d : extract_available(stored, scene.masks, 0, RegionMode::Exclusive)) {
        save_descriptor(d, out_dir / "descriptors", false);
    }
    if (pgm) dump_pgm(scene.latents, 0, out_dir / "pgm", "frame");
    return json{{"out_dir", out_dir.string()}, {"subjects", manifest.subjects}, {"clipped", clipped}};
}

json invert_stage(const fs::path& manifest_path, const InvertOptions& options, const fs::path& out_dir) {
    const auto manifest = load_manifest(manifest_path);
    if (!manifest.latents.contains(0)) throw Error(ErrorCode::InvalidArgument, "manifest has no latents at timestep 0");
    const auto z0 = load_tensor(manifest.latents.at(0));
    if (options.schedule.n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 0");
    const auto schedule = NoiseSchedule::make(options.schedule.n_steps);

    fs::create_directories(out_dir);
    json index{{"n_steps", schedule.n_steps()},
               {"alpha_bar", schedule.values()},
               {"zero_noise", options.schedule.zero_noise},
               {"bandwidth", options.schedule.bandwidth},
               {"inversion_refinements", options.schedule.inversion_refinements},
               {"dims", {z0.frames(), z0.channels(), z0.height(), z0.width()}}};
    json atlas_files = json::array();
    std::unique_ptr<Denoiser> denoiser;
    if (options.schedule.zero_noise) {
        denoiser = std::make_unique<ZeroNoiseDenoiser>();
    } else {
        std::vector<LatentVideo> atlas;
        if (options.atlas_manifests.empty()) {
            atlas.push_back(z0);
        } else {
            for (const auto& p : options.atlas_manifests) {
                const auto m = load_manifest(p);
                if (!m.latents.contains(0)) throw Error(ErrorCode::InvalidArgument, p.string() + " has no latents");
                atlas.push_back(load_tensor(m.latents.at(0)));
                if (atlas.back().dims() != z0.dims()) {
                    throw Error(ErrorCode::DimMismatch, "atlas member " + p.string() + " does not match the scene");
                }
            }
        }
        for (std::size_t k = 0; k < atlas.size(); ++k) {
            const auto name = "atlas_" + step_name(static_cast<int>(k)) + ".cmt";
            save_tensor(atlas[k], out_dir / name);
            atlas_files.push_back(name);
        }
        denoiser = std::make_unique<GaussianAtlasDenoiser>(std::move(atlas), options.schedule.bandwidth);
    }
    index["atlas"] = atlas_files;

    const auto trajectory = ddim_invert(z0, schedule, *denoiser, options.schedule.inversion_refinements);
    json latents = json::object();
    for (std::size_t t = 0; t < trajectory.size(); ++t) {
        const auto name = "z_" + step_name(static_cast<int>(t)) + ".cmt";
        save_tensor(trajectory[t], out_dir / name);
        latents[std::to_string(t)] = name;
    }
    index["latents"] = latents;
    write_json(index, out_dir / "index.json");
    return json{{"out_dir", out_dir.string()}, {"tensors", trajectory.size()}, {"atlas_members", atlas_files.size()}};
}

InversionArchive load_inversion(const fs::path& dir) {
    const auto index = read_json(dir / "index.json");
    InversionArchive a;
    try {
        a.schedule.n_steps = index.at("n_steps").get<int>();
        a.schedule.bandwidth = index.at("bandwidth").get<double>();
        a.schedule.zero_noise = index.at("zero_noise").get<bool>();
        a.schedule.inversion_refinements = index.value("inversion_refinements", 0);
        for (int t = 0; t <= a.schedule.n_steps; ++t) {
            a.trajectory.push_back(load_tensor(dir / index.at("latents").at(std::to_string(t)).get<std::string>()));
        }
        for (const auto& name : index.at("atlas")) a.atlas.push_back(load_tensor(dir / name.get<std::string>()));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, (dir / "index.json").string() + ": " + e.what());
    }
    for (const auto& z : a.trajectory) check_dims(z.dims());
    for (const auto& z : a.trajectory) {
        if (z.dims() != a.trajectory.front().dims()) throw Error(ErrorCode::DimMismatch, "inconsistent archive dims");
    }
    return a;
}

std::unique_ptr<Denoiser> make_denoiser(const InversionArchive& archive) {
    if (archive.schedule.zero_noise) return std::make_unique<ZeroNoiseDenoiser>();
    return std::make_unique<GaussianAtlasDenoiser>(archive.atlas, archive.schedule.bandwidth);
}

json extract_stage(const fs::path& trajectory_dir, const fs::path& manifest_path, const ExtractOptions& options,
                   const fs::path& out_dir) {
    const auto archive = load_inversion(trajectory_dir);
    const auto manifest = load_manifest(manifest_path);
    const auto masks = load_manifest_masks(manifest);
    for (const auto& m : masks) check_compatible(archive.trajectory.front(), m);
    const auto mode = options.legacy ? RegionMode::Union : RegionMode::Exclusive;

    std::vector<int> steps = options.timesteps;
    if (steps.empty()) {
        for (int t = 0; t <= archive.schedule.n_steps; ++t) steps.push_back(t);
    }
    fs::create_directories(out_dir);
    json written = json::array();
    json skipped = json::array();
    for (std::size_t k = 0; k < masks.size(); ++k) {
        if (masks[k].empty_everywhere()) {
            warn("subject '" + masks[k].subject_id() + "' is masked out everywhere; skipped");
            skipped.push_back(masks[k].subject_id());
        }
    }
    for (int t : steps) {
        if (t < 0 || t > archive.schedule.n_steps) {
            throw Error(ErrorCode::IndexOutOfRange, "no latent at timestep " + std::to_string(t));
        }
        const auto& z = archive.trajectory[static_cast<std::size_t>(t)];
        for (std::size_t k = 0; k < masks.size(); ++k) {
            if (masks[k].empty_everywhere()) continue;
            try {
                const auto d = extract_subject_descriptor(z, masks, k, t, {mode});
                save_descriptor(d, out_dir, options.legacy);
                written.push_back(d.source_id + "@" + std::to_string(t));
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoValidPairs) throw;
                warn("subject '" + masks[k].subject_id() + "' has no valid pairs at t=" + std::to_string(t));
            }
        }
        const auto bg = extract_background_descriptor(z, masks, t);
        if (bg.deltas.empty()) {
            warn("background has no valid pairs at t=" + std::to_string(t));
        } else {
            save_descriptor(bg, out_dir, options.legacy);
            written.push_back(kBackgroundId + "@" + std::to_string(t));
        }
    }
    std::set<std::string> sources;
    for (const auto& w : written) {
        const auto s = w.get<std::string>();
        sources.insert(s.substr(0, s.rfind('@')));
    }
    return json{{"out_dir", out_dir.string()}, {"sources", sources}, {"files", written.size()}, {"skipped", skipped}};
}

json recompose_stage(const fs::path& trajectory_dir, const fs::path& manifest_path, const RecomposeOptions& options,
                     const fs::path& out_dir) {
    const auto archive = load_inversion(trajectory_dir);
    const auto manifest = load_manifest(manifest_path);
    const auto masks = load_manifest_masks(manifest);
    for (const auto& m : masks) check_compatible(archive.trajectory.front(), m);
    const auto denoiser = make_denoiser(archive);
    const auto schedule = NoiseSchedule::make(archive.schedule.n_steps);
    const auto& settings = options.settings;
    settings.guidance.validate();
    options.plan.validate();
    for (const auto& [id, _] : options.plan.directives) {
        if (std::find(manifest.subjects.begin(), manifest.subjects.end(), id) == manifest.subjects.end()) {
            throw Error(ErrorCode::UnknownSubject, "plan names unknown subject '" + id + "'");
        }
    }
    const auto targets = target_masks(masks, options.plan);

    std::function<GuidanceTarget(int)> target_at;
    if (options.descriptors_dir) {
        const auto dir = *options.descriptors_dir;
        std::vector<std::string> sources = manifest.subjects;
        sources.push_back(kBackgroundId);
        target_at = [=, plan = options.plan](int t) {
            std::vector<MotionDescriptor> loaded;
            for (const auto& s : sources) {
                const auto path = descriptor_file(dir, s, t);
                if (!fs::exists(path)) continue;
                bool legacy = false;
                loaded.push_back(load_descriptor(path, &legacy));
                if (legacy != (settings.mode == RegionMode::Union)) {
                    throw Error(ErrorCode::InvalidArgument, path.string() + ": region mode differs from the run");
                }
            }
            return GuidanceTarget{recompose(loaded, plan), targets, settings.guidance.per_source_weight, settings.mode};
        };
    } else {
        target_at = reference_guidance(archive.trajectory, masks, options.plan, settings.guidance.per_source_weight,
                                       settings.mode);
    }

    std::vector<TraceRecord> trace;
    const auto zT = make_initial_noise(archive.trajectory.back(), settings.noise, settings.seed);
    GuidedSampling sampling{settings.guidance, target_at, &trace};
    const auto output = ddim_sample(zT, schedule, *denoiser, settings.guided ? &sampling : nullptr);

    fs::create_directories(out_dir);
    save_tensor(output, out_dir / "target.cmt");
    {
        std::ofstream tr(out_dir / "trace.jsonl", std::ios::trunc);
        if (!tr) throw Error(ErrorCode::IoFailure, "cannot write trace");
        for (const auto& r : trace) {
            tr << json{{"timestep", r.timestep}, {"inner_step", r.inner_step}, {"loss", r.loss}}.dump() << "\n";
        }
    }
    bool monotone = true;
    for (std::size_t k = 1; k < trace.size(); ++k) {
        if (trace[k].timestep == trace[k - 1].timestep && trace[k].loss > trace[k - 1].loss) monotone = false;
    }

    // Detect subjects in the output by their signatures.
    const auto stored = load_tensor(out_dir / "target.cmt");
    const auto records_path = manifest_path.parent_path() / "trajectories.json";
    std::vector<SubjectRecord> detected;
    if (fs::exists(records_path)) {
        for (const auto& r : load_subject_records(records_path)) {
            if (r.signature.size() != stored.channels()) {
                warn("subject '" + r.id + "' has no usable signature; not detected");
                continue;
            }
            const auto track = detect_subject_track(stored, r.signature, r.id);
            detected.push_back({r.id, r.signature, centroid_trajectory(track)});
        }
    } else {
        warn("no trajectories.json next to the manifest; output subjects not detected");
    }
    save_subject_records(detected, out_dir / "trajectories.json");
    for (const auto& d : extract_available(stored, targets, 0, settings.mode)) {
        save_descriptor(d, out_dir / "descriptors", settings.mode == RegionMode::Union);
    }
    write_json(plan_to_json(options.plan), out_dir / "plan.json");
    write_json(guidance_to_json(settings.guidance), out_dir / "guidance.json");

    json summary{{"out_dir", out_dir.string()},
                 {"guided", settings.guided},
                 {"noise", settings.noise == NoiseMode::Shared ? "shared" : "fresh"},
                 {"seed", settings.seed},
                 {"trace_records", trace.size()},
                 {"trace_monotone", monotone}};
    if (!trace.empty()) {
        summary["first_loss"] = trace.front().loss;
        summary["last_loss"] = trace.back().loss;
    }
    return summary;
}

json metrics_stage(const fs::path& out_dir, const fs::path& reference_dir) {
    const auto out_records = load_subject_records(out_dir / "trajectories.json");
    const auto ref_records = load_subject_records(reference_dir / "trajectories.json");
    json subjects = json::object();
    for (const auto& r : ref_records) {
        auto it = std::find_if(out_records.begin(), out_records.end(), [&](const auto& o) { return o.id == r.id; });
        if (it == out_records.end()) {
            warn("subject '" + r.id + "' missing from " + out_dir.string());
            continue;
        }
        auto report = to_json(compare_trajectories(it->trajectory, r.trajectory));
        report["mean_displacement"] = mean_displacement(it->trajectory);
        report["reference_mean_displacement"] = mean_displacement(r.trajectory);
        subjects[r.id] = report;
    }
    json descriptors = json::object();
    {
        const auto a = load_descriptors_at(out_dir / "descriptors", 0);
        const auto b = load_descriptors_at(reference_dir / "descriptors", 0);
        for (const auto& d : b) {
            auto it = std::find_if(a.begin(), a.end(), [&](const auto& x) { return x.source_id == d.source_id; });
            if (it != a.end()) descriptors[d.source_id] = to_json(descriptor_distance(*it, d));
        }
    }
    json result{{"subjects", subjects}, {"descriptors", descriptors}};
    write_json(result, out_dir / "metrics.json");
    return result;
}

json run_pipeline(const RunConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const auto ref_dir = out_dir / "reference";
    json summary;
    summary["synth"] = synth_stage(config.scene, ref_dir, config.pgm);

    InvertOptions inv{config.schedule, {}};
    if (!config.atlas.empty()) {
        inv.atlas_manifests.push_back(ref_dir / "manifest.json");
        for (const auto& v : config.atlas) {
            const auto dir = out_dir / "atlas" / v.name;
            synth_stage(apply_variant(config.scene, v), dir, false);
            inv.atlas_manifests.push_back(dir / "manifest.json");
        }
    }
    summary["invert"] = invert_stage(ref_dir / "manifest.json", inv, out_dir / "inversion");

    ExtractOptions ex;
    ex.legacy = config.settings.mode == RegionMode::Union;
    summary["extract"] = extract_stage(out_dir / "inversion", ref_dir / "manifest.json", ex, out_dir / "descriptors");

    RecomposeOptions rec{config.plan, config.settings, out_dir / "descriptors"};
    summary["recompose"] = recompose_stage(out_dir / "inversion", ref_dir / "manifest.json", rec, out_dir / "target");
    summary["metrics"] = metrics_stage(out_dir / "target", ref_dir);

    if (config.unguided_baseline) {
        RecomposeOptions base = rec;
        base.settings.guided = false;
        summary["unguided"] = recompose_stage(out_dir / "inversion", ref_dir / "manifest.json", base,
                                              out_dir / "unguided");
        summary["unguided_metrics"] = metrics_stage(out_dir / "unguided", ref_dir);
    }

    json cfg{{"scene", scene_to_json(config.scene)},
             {"schedule",
              {{"n_steps", config.schedule.n_steps},
               {"bandwidth", config.schedule.bandwidth},
               {"zero_noise", config.schedule.zero_noise},
               {"inversion_refinements", config.schedule.inversion_refinements}}},
             {"guidance", guidance_to_json(config.settings.guidance)},
             {"plan", plan_to_json(config.plan)},
             {"noise",
              {{"mode", config.settings.noise == NoiseMode::Shared ? "shared" : "fresh"},
               {"seed", config.settings.seed}}},
             {"legacy_regions", config.settings.mode == RegionMode::Union}};
    write_json(cfg, out_dir / "run_config.json");
    // Paths differ between runs; keep them out of the persisted summary.
    auto persisted = summary;
    for (auto& [_, stage] : persisted.items()) {
        if (stage.is_object()) stage.erase("out_dir");
    }
    write_json(persisted, out_dir / "summary.json");
    return summary;
}

}  // namespace conmo::cli
