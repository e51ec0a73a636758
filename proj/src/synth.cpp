#include "conmo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

namespace conmo {

namespace {

constexpr int kWavesPerChannel = 3;

PixelPoint point_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidArgument, "point must be [row, col]");
    return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json point_to_json(const PixelPoint& p) { return nlohmann::json::array({p.row, p.col}); }

std::vector<PixelPoint> linear_path(PixelPoint start, PixelPoint end, std::size_t frames) {
    std::vector<PixelPoint> out(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const double s = frames > 1 ? static_cast<double>(f) / static_cast<double>(frames - 1) : 0.0;
        out[f] = {start.row + s * (end.row - start.row), start.col + s * (end.col - start.col)};
    }
    return out;
}

}  // namespace

void SceneSpec::validate() const {
    check_dims(dims);
    if (!background_drift.empty() && background_drift.size() != dims.frames) {
        throw Error(ErrorCode::DimMismatch, "background_drift length must equal the frame count");
    }
    if (!(texture_amplitude >= 0.0) || !std::isfinite(texture_amplitude)) {
        throw Error(ErrorCode::InvalidArgument, "texture_amplitude must be >= 0");
    }
    for (const auto& b : blobs) {
        if (b.trajectory.size() != dims.frames) {
            throw Error(ErrorCode::DimMismatch, "blob '" + b.subject_id + "' trajectory length must equal frames");
        }
        if (b.signature.size() != dims.channels) {
            throw Error(ErrorCode::DimMismatch, "blob '" + b.subject_id + "' signature length must equal channels");
        }
        if (!(b.radius > 0.0) || !std::isfinite(b.radius)) {
            throw Error(ErrorCode::InvalidArgument, "blob '" + b.subject_id + "' radius must be positive");
        }
        if (b.subject_id.empty() || b.subject_id == "background") {
            throw Error(ErrorCode::InvalidArgument, "blob id must be non-empty and not 'background'");
        }
    }
    for (std::size_t a = 0; a < blobs.size(); ++a) {
        for (std::size_t b = a + 1; b < blobs.size(); ++b) {
            if (blobs[a].subject_id == blobs[b].subject_id) {
                throw Error(ErrorCode::InvalidArgument, "duplicate blob id '" + blobs[a].subject_id + "'");
            }
        }
    }
}

BackgroundTexture::BackgroundTexture(std::size_t channels, std::size_t height, std::size_t width, std::uint64_t seed,
                                     double amplitude)
    : waves_(channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    for (auto& channel : waves_) {
        for (int w = 0; w < kWavesPerChannel; ++w) {
            Wave wave{};
            wave.amplitude = amplitude * (0.5 + 0.5 * unit(rng)) / std::sqrt(static_cast<double>(kWavesPerChannel));
            // 0.5 to 2 cycles across the frame, random orientation.
            const double cycles = 0.5 + 1.5 * unit(rng);
            const double angle = two_pi * unit(rng);
            wave.freq_row = two_pi * cycles * std::sin(angle) / static_cast<double>(height);
            wave.freq_col = two_pi * cycles * std::cos(angle) / static_cast<double>(width);
            wave.phase = two_pi * unit(rng);
            channel.push_back(wave);
        }
    }
}

double BackgroundTexture::value(std::size_t channel, double row, double col) const {
    double v = 0.0;
    for (const auto& w : waves_.at(channel)) v += w.amplitude * std::sin(w.freq_row * row + w.freq_col * col + w.phase);
    return v;
}

RenderedScene render_scene(const SceneSpec& spec) {
    spec.validate();
    const auto& d = spec.dims;
    BackgroundTexture texture(d.channels, d.height, d.width, spec.texture_seed, spec.texture_amplitude);
    RenderedScene out{LatentVideo(d), {}, {}, {}};
    for (const auto& b : spec.blobs) {
        out.masks.emplace_back(b.subject_id, d.frames, d.height, d.width);
        Trajectory t;
        for (const auto& p : b.trajectory) t.emplace_back(p);
        out.trajectories.push_back(std::move(t));
        out.clipped.push_back(false);
    }

    for (std::size_t f = 0; f < d.frames; ++f) {
        const PixelPoint drift = spec.background_drift.empty() ? PixelPoint{} : spec.background_drift[f];
        for (std::size_t y = 0; y < d.height; ++y) {
            for (std::size_t x = 0; x < d.width; ++x) {
                const double row = static_cast<double>(y) - drift.row;
                const double col = static_cast<double>(x) - drift.col;
                for (std::size_t c = 0; c < d.channels; ++c) out.latents.at(f, c, y, x) = texture.value(c, row, col);
            }
        }
        for (std::size_t k = 0; k < spec.blobs.size(); ++k) {
            const auto& b = spec.blobs[k];
            const auto center = b.trajectory[f];
            if (center.row - b.radius < 0.0 || center.col - b.radius < 0.0 ||
                center.row + b.radius > static_cast<double>(d.height - 1) ||
                center.col + b.radius > static_cast<double>(d.width - 1)) {
                out.clipped[k] = true;
            }
            auto& mask = out.masks[k].frame(f);
            const double r2 = b.radius * b.radius;
            for (std::size_t y = 0; y < d.height; ++y) {
                const double dy = static_cast<double>(y) - center.row;
                for (std::size_t x = 0; x < d.width; ++x) {
                    const double dx = static_cast<double>(x) - center.col;
                    if (dy * dy + dx * dx <= r2) mask.set(y, x, true);
                }
            }
        }
        // Later blobs occlude earlier ones; signatures never sum.
        for (std::size_t y = 0; y < d.height; ++y) {
            for (std::size_t x = 0; x < d.width; ++x) {
                for (std::size_t k = spec.blobs.size(); k-- > 0;) {
                    if (!out.masks[k].frame(f).at(y, x)) continue;
                    for (std::size_t c = 0; c < d.channels; ++c) out.latents.at(f, c, y, x) += spec.blobs[k].signature[c];
                    break;
                }
            }
        }
    }
    return out;
}

Trajectory centroid_trajectory(const MaskTrack& mask) {
    Trajectory out;
    out.reserve(mask.frames());
    for (const auto& m : mask.frame_masks()) out.push_back(mask_centroid(m));
    return out;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec spec;
    try {
        spec.dims = {j.at("frames").get<std::size_t>(), j.at("channels").get<std::size_t>(),
                     j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>()};
        spec.texture_seed = j.value("texture_seed", std::uint64_t{0});
        spec.texture_amplitude = j.value("texture_amplitude", 0.25);
        if (j.contains("background_drift")) {
            const auto& drift = j.at("background_drift");
            if (drift.is_object()) {
                // {"per_frame": [drow, dcol]} accumulates a constant camera velocity.
                const auto step = point_from_json(drift.at("per_frame"));
                for (std::size_t f = 0; f < spec.dims.frames; ++f) {
                    spec.background_drift.push_back(
                        {step.row * static_cast<double>(f), step.col * static_cast<double>(f)});
                }
            } else {
                for (const auto& p : drift) spec.background_drift.push_back(point_from_json(p));
            }
        }
        for (const auto& jb : j.value("blobs", nlohmann::json::array())) {
            BlobSpec b;
            b.subject_id = jb.at("id").get<std::string>();
            b.radius = jb.at("radius").get<double>();
            b.signature = jb.at("signature").get<std::vector<double>>();
            if (jb.contains("trajectory")) {
                for (const auto& p : jb.at("trajectory")) b.trajectory.push_back(point_from_json(p));
            } else {
                b.trajectory = linear_path(point_from_json(jb.at("start")), point_from_json(jb.at("end")),
                                           spec.dims.frames);
            }
            spec.blobs.push_back(std::move(b));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("scene spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

nlohmann::json scene_to_json(const SceneSpec& spec) {
    nlohmann::json j;
    j["frames"] = spec.dims.frames;
    j["channels"] = spec.dims.channels;
    j["height"] = spec.dims.height;
    j["width"] = spec.dims.width;
    j["texture_seed"] = spec.texture_seed;
    j["texture_amplitude"] = spec.texture_amplitude;
    j["background_drift"] = nlohmann::json::array();
    for (const auto& p : spec.background_drift) j["background_drift"].push_back(point_to_json(p));
    j["blobs"] = nlohmann::json::array();
    for (const auto& b : spec.blobs) {
        nlohmann::json jb;
        jb["id"] = b.subject_id;
        jb["radius"] = b.radius;
        jb["signature"] = b.signature;
        jb["trajectory"] = nlohmann::json::array();
        for (const auto& p : b.trajectory) jb["trajectory"].push_back(point_to_json(p));
        j["blobs"].push_back(std::move(jb));
    }
    return j;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open scene spec " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
    return scene_from_json(j);
}

nlohmann::json trajectory_to_json(const Trajectory& trajectory) {
    auto j = nlohmann::json::array();
    for (const auto& p : trajectory) j.push_back(p ? point_to_json(*p) : nlohmann::json(nullptr));
    return j;
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
    Trajectory out;
    for (const auto& p : j) {
        if (p.is_null()) {
            out.emplace_back(std::nullopt);
        } else {
            out.emplace_back(point_from_json(p));
        }
    }
    return out;
}

void dump_pgm(const LatentVideo& latents, std::size_t channel, const std::filesystem::path& dir,
              const std::string& prefix) {
    if (channel >= latents.channels()) throw Error(ErrorCode::IndexOutOfRange, "pgm channel");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t f = 0; f < latents.frames(); ++f) {
        for (std::size_t y = 0; y < latents.height(); ++y) {
            for (std::size_t x = 0; x < latents.width(); ++x) {
                lo = std::min(lo, latents.at(f, channel, y, x));
                hi = std::max(hi, latents.at(f, channel, y, x));
            }
        }
    }
    const double span = hi > lo ? hi - lo : 1.0;
    std::filesystem::create_directories(dir);
    for (std::size_t f = 0; f < latents.frames(); ++f) {
        const auto path = dir / (prefix + "_" + std::to_string(f) + ".pgm");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
        out << "P5\n" << latents.width() << " " << latents.height() << "\n255\n";
        for (std::size_t y = 0; y < latents.height(); ++y) {
            for (std::size_t x = 0; x < latents.width(); ++x) {
                const double v = (latents.at(f, channel, y, x) - lo) / span;
                out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
            }
        }
    }
}

}  // namespace conmo
