#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "conmo/diffusion.hpp"
#include "conmo/editing.hpp"
#include "conmo/gradcheck.hpp"
#include "conmo/guidance.hpp"
#include "conmo/io.hpp"
#include "conmo/mask_algebra.hpp"
#include "conmo/metrics.hpp"
#include "conmo/motion_features.hpp"
#include "conmo/synth.hpp"

namespace py = pybind11;
using namespace conmo;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

LatentVideo video_from_array(const DoubleArray& a) {
    if (a.ndim() != 4) throw Error(ErrorCode::DimMismatch, "latents must be 4-D (frames, channels, height, width)");
    VideoDims dims{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                   static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
    return LatentVideo(dims, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> video_to_array(const LatentVideo& v) {
    const auto& d = v.dims();
    py::array_t<double> out({d.frames, d.channels, d.height, d.width});
    std::copy(v.data().begin(), v.data().end(), out.mutable_data());
    return out;
}

RegionMask region_from_array(const ByteArray& a) {
    if (a.ndim() != 2) throw Error(ErrorCode::DimMismatch, "mask must be 2-D (height, width)");
    return RegionMask(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                      std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

py::array_t<std::uint8_t> region_to_array(const RegionMask& m) {
    py::array_t<std::uint8_t> out({m.height(), m.width()});
    std::copy(m.cells().begin(), m.cells().end(), out.mutable_data());
    return out;
}

MaskTrack track_from_array(const std::string& id, const ByteArray& a) {
    if (a.ndim() != 3) throw Error(ErrorCode::DimMismatch, "mask track must be 3-D (frames, height, width)");
    const auto f = static_cast<std::size_t>(a.shape(0));
    const auto h = static_cast<std::size_t>(a.shape(1));
    const auto w = static_cast<std::size_t>(a.shape(2));
    std::vector<RegionMask> frames;
    for (std::size_t k = 0; k < f; ++k) {
        const auto* p = a.data() + k * h * w;
        frames.emplace_back(h, w, std::vector<std::uint8_t>(p, p + h * w));
    }
    return MaskTrack(id, std::move(frames));
}

py::array_t<std::uint8_t> track_to_array(const MaskTrack& t) {
    py::array_t<std::uint8_t> out({t.frames(), t.height(), t.width()});
    auto* p = out.mutable_data();
    for (const auto& m : t.frame_masks()) p = std::copy(m.cells().begin(), m.cells().end(), p);
    return out;
}

// Subjects are passed as a list of (id, (frames, height, width) array) pairs.
using TrackList = std::vector<std::pair<std::string, ByteArray>>;

std::vector<MaskTrack> tracks_from_list(const TrackList& list) {
    std::vector<MaskTrack> out;
    for (const auto& [id, a] : list) out.push_back(track_from_array(id, a));
    return out;
}

TrackList tracks_to_list(const std::vector<MaskTrack>& tracks) {
    TrackList out;
    for (const auto& t : tracks) out.emplace_back(t.subject_id(), track_to_array(t));
    return out;
}

FrameView frame_view(const DoubleArray& a) {
    if (a.ndim() != 3) throw Error(ErrorCode::DimMismatch, "frame must be 3-D (channels, height, width)");
    return FrameView{std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                     static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                     static_cast<std::size_t>(a.shape(2))};
}

std::vector<LatentVideo> videos_from_list(const std::vector<DoubleArray>& list) {
    std::vector<LatentVideo> out;
    for (const auto& a : list) out.push_back(video_from_array(a));
    return out;
}

py::list videos_to_list(const std::vector<LatentVideo>& videos) {
    py::list out;
    for (const auto& v : videos) out.append(video_to_array(v));
    return out;
}

std::optional<MaskEdit> parse_edit(const py::object& o) {
    if (o.is_none()) return std::nullopt;
    return o.cast<MaskEdit>();
}

Trajectory trajectory_from_py(const std::vector<std::optional<std::pair<double, double>>>& pts) {
    Trajectory t;
    for (const auto& p : pts) {
        if (p) t.push_back(PixelPoint{p->first, p->second});
        else t.push_back(std::nullopt);
    }
    return t;
}

std::vector<std::optional<std::pair<double, double>>> trajectory_to_py(const Trajectory& t) {
    std::vector<std::optional<std::pair<double, double>>> out;
    for (const auto& p : t) {
        if (p) out.emplace_back(std::make_pair(p->row, p->col));
        else out.emplace_back(std::nullopt);
    }
    return out;
}

std::unique_ptr<Denoiser> make_denoiser(const py::object& atlas, double bandwidth) {
    if (atlas.is_none()) return std::make_unique<ZeroNoiseDenoiser>();
    return std::make_unique<GaussianAtlasDenoiser>(videos_from_list(atlas.cast<std::vector<DoubleArray>>()), bandwidth);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Motion descriptor extraction, recomposition and guided sampling on latent videos";

    static py::exception<Error> conmo_error(m, "ConmoError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(conmo_error.ptr(), e.what());
        }
    });

    py::enum_<RegionMode>(m, "RegionMode").value("EXCLUSIVE", RegionMode::Exclusive).value("UNION", RegionMode::Union);
    py::enum_<NoiseMode>(m, "NoiseMode").value("SHARED", NoiseMode::Shared).value("FRESH", NoiseMode::Fresh);

    // io
    m.def("load_tensor", [](const fs::path& p) { return video_to_array(load_tensor(p)); });
    m.def("save_tensor", [](const DoubleArray& a, const fs::path& p) { save_tensor(video_from_array(a), p); });
    m.def("load_mask", [](const fs::path& p) { return track_to_array(load_mask(p)); });
    m.def("save_mask", [](const ByteArray& a, const fs::path& p) { save_mask(track_from_array("", a), p); });

    // mask algebra
    m.def("mask_union", [](const ByteArray& a, const ByteArray& b) {
        return region_to_array(mask_union(region_from_array(a), region_from_array(b)));
    });
    m.def("mask_intersection", [](const ByteArray& a, const ByteArray& b) {
        return region_to_array(mask_intersection(region_from_array(a), region_from_array(b)));
    });
    m.def("set_difference", [](const ByteArray& a, const ByteArray& b) {
        return region_to_array(set_difference(region_from_array(a), region_from_array(b)));
    });
    m.def("complement", [](const ByteArray& a) { return region_to_array(complement(region_from_array(a))); });
    m.def(
        "pair_region",
        [](const TrackList& subjects, std::size_t k, std::size_t i, std::size_t j) {
            auto tracks = tracks_from_list(subjects);
            const auto subject = tracks.at(k);
            tracks.erase(tracks.begin() + static_cast<std::ptrdiff_t>(k));
            return region_to_array(pair_region(subject, tracks, i, j));
        },
        py::arg("subjects"), py::arg("k"), py::arg("i"), py::arg("j"));

    py::class_<MaskEdit>(m, "MaskEdit")
        .def_static("shift", &MaskEdit::shift, py::arg("dx"), py::arg("dy"))
        .def_static(
            "scale",
            [](double factor, std::optional<std::pair<double, double>> anchor) {
                std::optional<PixelPoint> a;
                if (anchor) a = PixelPoint{anchor->first, anchor->second};
                return MaskEdit::scale(factor, a);
            },
            py::arg("factor"), py::arg("anchor") = py::none());
    m.def("apply_edit", [](const ByteArray& track, const MaskEdit& edit) {
        return track_to_array(apply_edit(track_from_array("", track), edit));
    });

    // motion features
    m.def("lsmm", [](const DoubleArray& frame, const ByteArray& mask) {
        return lsmm(frame_view(frame), region_from_array(mask));
    });

    py::class_<MotionDescriptor>(m, "MotionDescriptor")
        .def(py::init<>())
        .def_readwrite("source_id", &MotionDescriptor::source_id)
        .def_readwrite("n_frames", &MotionDescriptor::n_frames)
        .def_readwrite("timestep", &MotionDescriptor::timestep)
        .def_readwrite("deltas", &MotionDescriptor::deltas)
        .def("valid", &MotionDescriptor::valid)
        .def("valid_pairs", &MotionDescriptor::valid_pairs)
        .def("set_pair", &MotionDescriptor::set_pair)
        .def("__repr__", [](const MotionDescriptor& d) {
            return "<MotionDescriptor " + d.source_id + " t=" + std::to_string(d.timestep) + " pairs=" +
                   std::to_string(d.deltas.size() / 2) + ">";
        });

    m.def(
        "extract_descriptors",
        [](const DoubleArray& latents, const TrackList& subjects, int timestep, RegionMode mode) {
            const auto tracks = tracks_from_list(subjects);
            return extract_descriptors(video_from_array(latents), tracks, timestep, {mode});
        },
        py::arg("latents"), py::arg("subjects"), py::arg("timestep") = 0, py::arg("mode") = RegionMode::Exclusive);
    m.def("soft_blend", &soft_blend, py::arg("subject_delta"), py::arg("camera_delta"), py::arg("w_c"));

    py::class_<SubjectDirective> directive(m, "SubjectDirective");
    py::enum_<SubjectDirective::Action>(directive, "Action")
        .value("KEEP", SubjectDirective::Action::Keep)
        .value("REMOVE", SubjectDirective::Action::Remove)
        .value("SOFTEN", SubjectDirective::Action::Soften);
    directive
        .def(py::init([](SubjectDirective::Action action, std::optional<double> w_c, const py::object& edit) {
                 return SubjectDirective{action, w_c, parse_edit(edit)};
             }),
             py::arg("action") = SubjectDirective::Action::Keep, py::arg("w_c") = py::none(),
             py::arg("mask_edit") = py::none())
        .def_readwrite("action", &SubjectDirective::action)
        .def_readwrite("w_c", &SubjectDirective::w_c)
        .def_readwrite("mask_edit", &SubjectDirective::mask_edit);

    py::class_<EditPlan>(m, "EditPlan")
        .def(py::init<>())
        .def_readwrite("directives", &EditPlan::directives)
        .def_readwrite("include_background", &EditPlan::include_background)
        .def_readwrite("camera_only", &EditPlan::camera_only)
        .def_readwrite("w_c", &EditPlan::w_c)
        .def("validate", &EditPlan::validate);
    m.def("recompose", [](const std::vector<MotionDescriptor>& d, const EditPlan& plan) { return recompose(d, plan); });

    // guidance
    py::class_<GuidanceConfig>(m, "GuidanceConfig")
        .def(py::init<>())
        .def_static("with_default_window", &GuidanceConfig::with_default_window)
        .def_readwrite("step_size", &GuidanceConfig::step_size)
        .def_readwrite("normalize_step", &GuidanceConfig::normalize_step)
        .def_readwrite("n_inner_steps", &GuidanceConfig::n_inner_steps)
        .def_readwrite("t_start", &GuidanceConfig::t_start)
        .def_readwrite("t_end", &GuidanceConfig::t_end)
        .def_readwrite("per_source_weight", &GuidanceConfig::per_source_weight)
        .def_readwrite("w_c", &GuidanceConfig::w_c);

    auto make_target = [](const std::vector<MotionDescriptor>& reference, const TrackList& target_masks,
                          const std::map<std::string, double>& weights, RegionMode mode) {
        return GuidanceTarget{reference, tracks_from_list(target_masks), weights, mode};
    };
    m.def(
        "guidance_loss",
        [make_target](const DoubleArray& latents, const std::vector<MotionDescriptor>& reference,
                      const TrackList& target_masks, const std::map<std::string, double>& weights, RegionMode mode) {
            return guidance_loss(video_from_array(latents), make_target(reference, target_masks, weights, mode));
        },
        py::arg("latents"), py::arg("reference"), py::arg("target_masks"),
        py::arg("weights") = std::map<std::string, double>{}, py::arg("mode") = RegionMode::Exclusive);
    m.def(
        "guidance_gradient",
        [make_target](const DoubleArray& latents, const std::vector<MotionDescriptor>& reference,
                      const TrackList& target_masks, const std::map<std::string, double>& weights, RegionMode mode) {
            return video_to_array(
                guidance_gradient(video_from_array(latents), make_target(reference, target_masks, weights, mode)));
        },
        py::arg("latents"), py::arg("reference"), py::arg("target_masks"),
        py::arg("weights") = std::map<std::string, double>{}, py::arg("mode") = RegionMode::Exclusive);
    m.def(
        "guided_update",
        [make_target](const DoubleArray& latents, const std::vector<MotionDescriptor>& reference,
                      const TrackList& target_masks, const GuidanceConfig& config, RegionMode mode) {
            auto r = guided_update(video_from_array(latents),
                                   make_target(reference, target_masks, config.per_source_weight, mode), config);
            return py::make_tuple(video_to_array(r.latents), r.losses);
        },
        py::arg("latents"), py::arg("reference"), py::arg("target_masks"), py::arg("config") = GuidanceConfig{},
        py::arg("mode") = RegionMode::Exclusive);

    // diffusion
    m.def("noise_schedule", [](int n, double floor) { return NoiseSchedule::make(n, floor).values(); },
          py::arg("n_steps"), py::arg("floor") = 1e-4);
    m.def(
        "ddim_invert",
        [](const DoubleArray& z0, int n_steps, const py::object& atlas, double bandwidth, int refinements) {
            const auto denoiser = make_denoiser(atlas, bandwidth);
            return videos_to_list(
                ddim_invert(video_from_array(z0), NoiseSchedule::make(n_steps), *denoiser, refinements));
        },
        py::arg("z0"), py::arg("n_steps") = 20, py::arg("atlas") = py::none(), py::arg("bandwidth") = 0.5,
        py::arg("refinements") = 0,
        "Inversion trajectory [z_0 .. z_n]; atlas=None uses the zero-noise denoiser.");
    m.def(
        "ddim_sample",
        [](const DoubleArray& zT, int n_steps, const py::object& atlas, double bandwidth) {
            const auto denoiser = make_denoiser(atlas, bandwidth);
            return video_to_array(ddim_sample(video_from_array(zT), NoiseSchedule::make(n_steps), *denoiser));
        },
        py::arg("zT"), py::arg("n_steps") = 20, py::arg("atlas") = py::none(), py::arg("bandwidth") = 0.5);
    m.def(
        "initial_noise",
        [](const DoubleArray& reference_zT, NoiseMode mode, std::uint64_t seed) {
            return video_to_array(make_initial_noise(video_from_array(reference_zT), mode, seed));
        },
        py::arg("reference_zT"), py::arg("mode") = NoiseMode::Shared, py::arg("seed") = 0);
    m.def(
        "edit",
        [](const std::vector<DoubleArray>& trajectory, const TrackList& reference_masks, const EditPlan& plan,
           const py::object& atlas, double bandwidth, const GuidanceConfig& config, NoiseMode noise,
           std::uint64_t seed, RegionMode mode, bool guided) {
            const auto traj = videos_from_list(trajectory);
            const auto denoiser = make_denoiser(atlas, bandwidth);
            const auto schedule = NoiseSchedule::make(static_cast<int>(traj.size()) - 1);
            EditSettings settings{config, noise, seed, mode, guided};
            auto r = run_edit(traj, tracks_from_list(reference_masks), plan, schedule, *denoiser, settings);
            py::list trace;
            for (const auto& rec : r.trace) trace.append(py::make_tuple(rec.timestep, rec.inner_step, rec.loss));
            return py::make_tuple(video_to_array(r.output), trace);
        },
        py::arg("trajectory"), py::arg("reference_masks"), py::arg("plan"), py::arg("atlas") = py::none(),
        py::arg("bandwidth") = 0.5, py::arg("config") = GuidanceConfig::with_default_window(20),
        py::arg("noise") = NoiseMode::Shared, py::arg("seed") = 0, py::arg("mode") = RegionMode::Exclusive,
        py::arg("guided") = true,
        "Guided sampling from a reference inversion trajectory. Returns (latents, [(t, step, loss), ...]).");

    // synth
    m.def(
        "render_scene",
        [](const std::string& spec_json) {
            auto scene = render_scene(scene_from_json(nlohmann::json::parse(spec_json)));
            py::dict out;
            out["latents"] = video_to_array(scene.latents);
            out["masks"] = tracks_to_list(scene.masks);
            py::list trajs;
            for (const auto& t : scene.trajectories) trajs.append(trajectory_to_py(t));
            out["trajectories"] = trajs;
            out["clipped"] = scene.clipped;
            return out;
        },
        py::arg("spec_json"), "Renders a scene described by a JSON string.");
    m.def("centroid_trajectory", [](const ByteArray& track) {
        return trajectory_to_py(centroid_trajectory(track_from_array("", track)));
    });

    // metrics
    m.def(
        "detect_subject_track",
        [](const DoubleArray& latents, const std::vector<double>& signature, double threshold) {
            return track_to_array(detect_subject_track(video_from_array(latents), signature, "", threshold));
        },
        py::arg("latents"), py::arg("signature"), py::arg("threshold") = 0.5);
    m.def("compare_trajectories", [](const std::vector<std::optional<std::pair<double, double>>>& a,
                                     const std::vector<std::optional<std::pair<double, double>>>& b) {
        const auto r = compare_trajectories(trajectory_from_py(a), trajectory_from_py(b));
        py::dict out;
        out["rmse_px"] = r.rmse_px;
        out["displacement_similarity"] = r.displacement_similarity;
        out["n_frames_compared"] = r.n_frames_compared;
        return out;
    });
    m.def("descriptor_distance", [](const MotionDescriptor& a, const MotionDescriptor& b) {
        const auto d = descriptor_distance(a, b);
        return py::make_tuple(d.distance, d.compared_pairs, d.vacuous);
    });

    m.def(
        "gradcheck",
        [](std::uint64_t seed, std::size_t instances, bool sign_flip, bool zero_weights) {
            GradcheckOptions opts;
            opts.seed = seed;
            opts.instances = instances;
            opts.inject_sign_flip = sign_flip;
            opts.zero_weights = zero_weights;
            const auto r = run_gradcheck(opts);
            py::dict out;
            out["max_relative_error"] = r.max_relative_error;
            out["instances"] = r.instances;
            out["passed"] = r.passed;
            out["vacuous"] = r.vacuous;
            return out;
        },
        py::arg("seed") = 7, py::arg("instances") = 20, py::arg("inject_sign_flip") = false,
        py::arg("zero_weights") = false);
}
