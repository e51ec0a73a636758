#include "cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <tuple>

#include "conmo/gradcheck.hpp"
#include "pipeline.hpp"

namespace conmo::cli {

namespace {

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonFinite: return kNumeric;
        default: return kUsage;
    }
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

struct RecomposeArgs {
    std::string trajectory, manifest, out, descriptors, plan_path;
    double soften = 0.0;
    std::vector<std::string> remove;
    bool camera_only = false;
    std::vector<std::tuple<std::string, int, int>> shifts;
    std::vector<std::tuple<std::string, double>> resizes;
    std::string noise = "shared";
    std::uint64_t seed = 0;
    std::vector<std::tuple<std::string, double>> weights;
    std::optional<double> step_size;
    std::optional<int> inner_steps, t_start, t_end;
    bool no_normalize = false;
    bool legacy = false;
    bool unguided = false;
};

RecomposeOptions build_recompose(const RecomposeArgs& a, int n_steps) {
    RecomposeOptions opts;
    if (!a.plan_path.empty()) opts.plan = plan_from_json(read_json(a.plan_path));
    if (a.soften > 0.0) opts.plan.w_c = a.soften;
    for (const auto& id : a.remove) opts.plan.directives[id].action = SubjectDirective::Action::Remove;
    if (a.camera_only) opts.plan.camera_only = true;
    for (const auto& [id, dx, dy] : a.shifts) opts.plan.directives[id].mask_edit = MaskEdit::shift(dx, dy);
    for (const auto& [id, factor] : a.resizes) opts.plan.directives[id].mask_edit = MaskEdit::scale(factor);
    opts.plan.validate();

    auto& g = opts.settings.guidance;
    g = GuidanceConfig::with_default_window(n_steps);
    if (a.step_size) g.step_size = *a.step_size;
    if (a.inner_steps) g.n_inner_steps = *a.inner_steps;
    if (a.t_start) g.t_start = *a.t_start;
    if (a.t_end) g.t_end = *a.t_end;
    if (a.no_normalize) g.normalize_step = false;
    for (const auto& [id, w] : a.weights) g.per_source_weight[id] = w;
    g.w_c = opts.plan.w_c;
    if (g.t_start > n_steps) throw Error(ErrorCode::InvalidArgument, "--t-start exceeds the archive's n_steps");
    g.validate();

    if (a.noise == "shared") opts.settings.noise = NoiseMode::Shared;
    else if (a.noise == "fresh") opts.settings.noise = NoiseMode::Fresh;
    else throw Error(ErrorCode::InvalidArgument, "--noise must be shared or fresh");
    opts.settings.seed = a.seed;
    opts.settings.mode = a.legacy ? RegionMode::Union : RegionMode::Exclusive;
    opts.settings.guided = !a.unguided;
    if (!a.descriptors.empty()) opts.descriptors_dir = a.descriptors;
    return opts;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"conmo: per-subject motion extraction, recomposition and guided sampling on latent videos"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "conmo 0.1.0");

    std::string spec_path, out_dir, manifest, trajectory_dir, config_path;
    bool pgm = false;

    auto* synth = app.add_subcommand("synth", "render a synthetic blob scene");
    synth->add_option("--spec", spec_path, "scene spec JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_flag("--pgm", pgm, "also dump channel 0 as PGM frames");

    InvertOptions inv;
    std::vector<std::string> atlas;
    auto* invert = app.add_subcommand("invert", "DDIM-invert a scene into a timestep archive");
    invert->add_option("--manifest", manifest, "scene manifest")->required()->check(CLI::ExistingFile);
    invert->add_option("--out", out_dir, "output directory")->required();
    invert->add_option("--steps", inv.schedule.n_steps, "number of diffusion steps")->capture_default_str();
    invert->add_option("--bandwidth", inv.schedule.bandwidth, "atlas denoiser bandwidth")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    invert->add_option("--atlas", atlas, "manifests of atlas member scenes (default: the scene itself)")
        ->check(CLI::ExistingFile);
    invert->add_option("--refine", inv.schedule.inversion_refinements, "fixed-point iterations per inversion step")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    invert->add_flag("--zero-noise", inv.schedule.zero_noise, "use a denoiser that predicts zero noise");

    ExtractOptions ex;
    auto* extract = app.add_subcommand("extract", "extract per-source motion descriptors from an archive");
    extract->add_option("--trajectory", trajectory_dir, "inversion archive")->required()->check(CLI::ExistingDirectory);
    extract->add_option("--manifest", manifest, "scene manifest with masks")->required()->check(CLI::ExistingFile);
    extract->add_option("--out", out_dir, "output directory")->required();
    extract->add_flag("--legacy", ex.legacy, "pool over the plain union of a subject's masks");
    extract->add_option("--timesteps", ex.timesteps, "timesteps to extract (default: all)");

    RecomposeArgs ra;
    auto* recompose = app.add_subcommand("recompose", "guided sampling of a target video from an edit plan");
    recompose->add_option("--trajectory", ra.trajectory, "inversion archive")->required()->check(CLI::ExistingDirectory);
    recompose->add_option("--manifest", ra.manifest, "reference manifest")->required()->check(CLI::ExistingFile);
    recompose->add_option("--out", ra.out, "output directory")->required();
    recompose->add_option("--descriptors", ra.descriptors, "reference descriptor directory")
        ->check(CLI::ExistingDirectory);
    recompose->add_option("--plan", ra.plan_path, "edit plan JSON")->check(CLI::ExistingFile);
    recompose->add_option("--soften", ra.soften, "blend every kept subject with camera motion (w_c)")
        ->check(CLI::NonNegativeNumber);
    recompose->add_option("--remove", ra.remove, "replace a subject's motion with the background's");
    recompose->add_flag("--camera-only", ra.camera_only, "guide the background only");
    recompose->add_option("--shift", ra.shifts, "shift a subject's target masks: ID DX DY");
    recompose->add_option("--resize", ra.resizes, "scale a subject's target masks: ID FACTOR");
    recompose->add_option("--noise", ra.noise, "initial noise: shared or fresh")->capture_default_str();
    recompose->add_option("--seed", ra.seed, "seed for fresh noise")->capture_default_str();
    recompose->add_option("--weight", ra.weights, "per-source guidance weight: ID W");
    recompose->add_option("--step-size", ra.step_size, "guidance step size");
    recompose->add_option("--inner-steps", ra.inner_steps, "guidance steps per timestep");
    recompose->add_option("--t-start", ra.t_start, "first guided timestep");
    recompose->add_option("--t-end", ra.t_end, "last guided timestep");
    recompose->add_flag("--no-normalize", ra.no_normalize, "use step-size as an absolute step");
    recompose->add_flag("--legacy", ra.legacy, "plain-union subject regions");
    recompose->add_flag("--unguided", ra.unguided, "sample without guidance");

    std::string reference_dir;
    auto* metrics = app.add_subcommand("metrics", "compare output trajectories and descriptors with a reference");
    metrics->add_option("out_dir", out_dir, "run output directory")->required()->check(CLI::ExistingDirectory);
    metrics->add_option("reference_dir", reference_dir, "reference directory")->required()->check(CLI::ExistingDirectory);

    GradcheckOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the guidance gradient");
    gradcheck->add_option("--seed", gc.seed)->capture_default_str();
    gradcheck->add_option("--instances", gc.instances)->capture_default_str();
    gradcheck->add_option("--frames", gc.max_dims.frames)->capture_default_str();
    gradcheck->add_option("--channels", gc.max_dims.channels)->capture_default_str();
    gradcheck->add_option("--height", gc.max_dims.height)->capture_default_str();
    gradcheck->add_option("--width", gc.max_dims.width)->capture_default_str();
    gradcheck->add_option("--subjects", gc.max_subjects)->capture_default_str();
    gradcheck->add_option("--fd-step", gc.h, "finite-difference step")->check(CLI::PositiveNumber)->capture_default_str();
    gradcheck->add_flag("--inject-sign-flip", gc.inject_sign_flip, "test hook: negate the analytic gradient");
    gradcheck->add_flag("--zero-weights", gc.zero_weights, "set every source weight to zero");

    auto* pipeline = app.add_subcommand("pipeline", "synth, invert, extract, recompose and metrics from one config");
    pipeline->add_option("--config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
    pipeline->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) {
            print(synth_stage(load_scene_spec(spec_path), out_dir, pgm));
        } else if (*invert) {
            for (const auto& a : atlas) inv.atlas_manifests.emplace_back(a);
            print(invert_stage(manifest, inv, out_dir));
        } else if (*extract) {
            print(extract_stage(trajectory_dir, manifest, ex, out_dir));
        } else if (*recompose) {
            const auto archive = read_json(fs::path(ra.trajectory) / "index.json");
            const auto opts = build_recompose(ra, archive.at("n_steps").get<int>());
            const auto summary = recompose_stage(ra.trajectory, ra.manifest, opts, ra.out);
            print(summary);
            if (!summary.at("trace_monotone").get<bool>()) std::cerr << "warning: guidance loss increased within a timestep\n";
        } else if (*metrics) {
            print(metrics_stage(out_dir, reference_dir));
        } else if (*gradcheck) {
            if (gc.instances == 0) throw Error(ErrorCode::InvalidArgument, "--instances must be positive");
            const auto r = run_gradcheck(gc);
            nlohmann::json j{{"max_relative_error", r.max_relative_error},
                             {"instances", r.instances},
                             {"tolerance", gc.tolerance},
                             {"passed", r.passed},
                             {"vacuous", r.vacuous},
                             {"worst",
                              {{"instance", r.worst_instance},
                               {"element", r.worst_element},
                               {"dims",
                                {r.worst_dims.frames, r.worst_dims.channels, r.worst_dims.height,
                                 r.worst_dims.width}},
                               {"analytic", r.worst_analytic},
                               {"numeric", r.worst_numeric}}}};
            print(j);
            if (r.vacuous) std::cerr << "warning: every source weight is zero; the check is vacuous\n";
            if (!r.passed) {
                std::cerr << "gradcheck failed: max relative error " << r.max_relative_error << " at instance "
                          << r.worst_instance << ", element " << r.worst_element << "\n";
                return kNumeric;
            }
        } else if (*pipeline) {
            print(run_pipeline(load_run_config(config_path), out_dir));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    }
    return kOk;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"conmo"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace conmo::cli
