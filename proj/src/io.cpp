#include "conmo/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace conmo {

namespace {

constexpr std::array<char, 4> kTensorMagic{'C', 'M', 'T', '1'};
constexpr std::array<char, 4> kMaskMagic{'C', 'M', 'M', '1'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint32_t u32() {
        if (!has(4)) throw Error(ErrorCode::DimMismatch, "truncated header");
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
        }
        pos_ += 4;
        return v;
    }
    unsigned char byte() { return static_cast<unsigned char>(bytes_[pos_++]); }
    bool magic(const std::array<char, 4>& m) {
        if (!has(4)) return false;
        bool ok = std::memcmp(bytes_.data() + pos_, m.data(), 4) == 0;
        pos_ += 4;
        return ok;
    }

private:
    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<std::uint32_t> read_dims(ByteReader& r, const fs::path& path) {
    const auto ndim = r.u32();
    if (ndim == 0 || ndim > 16) {
        throw Error(ErrorCode::DimMismatch, path.string() + ": bad ndim " + std::to_string(ndim));
    }
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = r.u32();
    for (auto d : dims) {
        if (d == 0) throw Error(ErrorCode::DimMismatch, path.string() + ": zero-size dim");
    }
    return dims;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

fs::path relative_to(const fs::path& base, const fs::path& p) {
    if (!p.is_absolute() && !base.is_absolute()) {
        auto rel = fs::relative(fs::absolute(p), fs::absolute(base));
        return rel.empty() ? p : rel;
    }
    auto rel = p.lexically_relative(base);
    return rel.empty() ? p : rel;
}

}  // namespace

std::size_t RawTensor::element_count() const { return product(dims); }

RawTensor read_cmt(const fs::path& path) {
    ByteReader r(read_file(path));
    if (!r.magic(kTensorMagic)) throw Error(ErrorCode::BadMagic, path.string() + " is not a CMT1 file");
    RawTensor t;
    t.dims = read_dims(r, path);
    const auto n = product(t.dims);
    if (r.remaining() != n * 4) {
        throw Error(ErrorCode::DimMismatch, path.string() + ": payload is " + std::to_string(r.remaining()) +
                                                " bytes, header implies " + std::to_string(n * 4));
    }
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        t.values[k] = std::bit_cast<float>(r.u32());
        if (!std::isfinite(t.values[k])) {
            throw Error(ErrorCode::NonFinite, path.string() + ": element " + std::to_string(k));
        }
    }
    return t;
}

void write_cmt(const RawTensor& tensor, const fs::path& path) {
    if (tensor.dims.empty()) throw Error(ErrorCode::DimMismatch, "tensor has no dims");
    for (auto d : tensor.dims) {
        if (d == 0) throw Error(ErrorCode::DimMismatch, "zero-size dim");
    }
    if (tensor.values.size() != tensor.element_count()) {
        throw Error(ErrorCode::DimMismatch, "value count does not match dims");
    }
    std::vector<char> bytes(kTensorMagic.begin(), kTensorMagic.end());
    bytes.reserve(8 + 4 * tensor.dims.size() + 4 * tensor.values.size());
    put_u32(bytes, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put_u32(bytes, d);
    for (float v : tensor.values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "refusing to write non-finite value");
        put_u32(bytes, std::bit_cast<std::uint32_t>(v));
    }
    write_file(path, bytes);
}

LatentVideo load_tensor(const fs::path& path) {
    auto raw = read_cmt(path);
    if (raw.dims.size() != 4) {
        throw Error(ErrorCode::DimMismatch, path.string() + ": expected 4 dims, found " +
                                                std::to_string(raw.dims.size()));
    }
    VideoDims dims{raw.dims[0], raw.dims[1], raw.dims[2], raw.dims[3]};
    return LatentVideo(dims, std::vector<double>(raw.values.begin(), raw.values.end()));
}

void save_tensor(const LatentVideo& video, const fs::path& path) {
    check_dims(video.dims());
    RawTensor raw;
    const auto& d = video.dims();
    for (auto v : {d.frames, d.channels, d.height, d.width}) {
        if (v > std::numeric_limits<std::uint32_t>::max()) throw Error(ErrorCode::DimMismatch, "dim too large");
        raw.dims.push_back(static_cast<std::uint32_t>(v));
    }
    raw.values.reserve(video.size());
    for (double v : video.data()) raw.values.push_back(static_cast<float>(v));
    write_cmt(raw, path);
}

MaskTrack load_mask(const fs::path& path, std::string subject_id) {
    ByteReader r(read_file(path));
    if (!r.magic(kMaskMagic)) throw Error(ErrorCode::BadMagic, path.string() + " is not a CMM1 file");
    auto dims = read_dims(r, path);
    if (dims.size() != 3) throw Error(ErrorCode::DimMismatch, path.string() + ": mask must have 3 dims");
    const auto n = product(dims);
    if (r.remaining() != n) {
        throw Error(ErrorCode::DimMismatch, path.string() + ": payload length disagrees with header");
    }
    const std::size_t plane = std::size_t{dims[1]} * dims[2];
    std::vector<RegionMask> frames;
    frames.reserve(dims[0]);
    for (std::uint32_t f = 0; f < dims[0]; ++f) {
        std::vector<std::uint8_t> cells(plane);
        for (auto& c : cells) {
            c = r.byte();
            if (c > 1) throw Error(ErrorCode::BadValue, path.string() + ": mask byte " + std::to_string(c));
        }
        frames.emplace_back(dims[1], dims[2], std::move(cells));
    }
    return MaskTrack(std::move(subject_id), std::move(frames));
}

void save_mask(const MaskTrack& track, const fs::path& path) {
    if (track.frames() == 0) throw Error(ErrorCode::DimMismatch, "empty mask track");
    std::vector<char> bytes(kMaskMagic.begin(), kMaskMagic.end());
    put_u32(bytes, 3);
    put_u32(bytes, static_cast<std::uint32_t>(track.frames()));
    put_u32(bytes, static_cast<std::uint32_t>(track.height()));
    put_u32(bytes, static_cast<std::uint32_t>(track.width()));
    for (const auto& m : track.frame_masks()) {
        for (auto c : m.cells()) bytes.push_back(static_cast<char>(c));
    }
    write_file(path, bytes);
}

SceneManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    SceneManifest m;
    try {
        m.frames = j.at("frames").get<std::size_t>();
        m.channels = j.at("channels").get<std::size_t>();
        m.height = j.at("height").get<std::size_t>();
        m.width = j.at("width").get<std::size_t>();
        for (const auto& [key, value] : j.at("latents").items()) {
            m.latents[std::stoi(key)] = resolve(base, value.get<std::string>());
        }
        for (const auto& [key, value] : j.at("masks").items()) {
            m.masks[key] = resolve(base, value.get<std::string>());
        }
        if (j.contains("subjects")) {
            m.subjects = j.at("subjects").get<std::vector<std::string>>();
        } else {
            for (const auto& [id, _] : m.masks) m.subjects.push_back(id);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
    } catch (const std::invalid_argument&) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": latent keys must be timesteps");
    }
    if (m.subjects.size() != m.masks.size()) {
        throw Error(ErrorCode::InvalidArgument, path.string() + ": subjects list disagrees with masks");
    }
    for (const auto& id : m.subjects) {
        if (!m.masks.contains(id)) throw Error(ErrorCode::UnknownSubject, "manifest subject " + id);
    }

    const auto dims = m.dims();
    for (const auto& [t, p] : m.latents) {
        if (!fs::exists(p)) throw Error(ErrorCode::IoFailure, "missing latent file " + p.string());
        auto raw = read_cmt(p);
        if (raw.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(dims.frames),
                                                   static_cast<std::uint32_t>(dims.channels),
                                                   static_cast<std::uint32_t>(dims.height),
                                                   static_cast<std::uint32_t>(dims.width)}) {
            throw Error(ErrorCode::DimMismatch, p.string() + " disagrees with manifest dims " + to_string(dims));
        }
    }
    for (const auto& [id, p] : m.masks) {
        if (!fs::exists(p)) throw Error(ErrorCode::IoFailure, "missing mask file " + p.string());
        auto track = load_mask(p, id);
        if (track.frames() != dims.frames || track.height() != dims.height || track.width() != dims.width) {
            throw Error(ErrorCode::DimMismatch, p.string() + " disagrees with manifest dims");
        }
    }
    return m;
}

void save_manifest(const SceneManifest& manifest, const fs::path& path) {
    const auto base = path.parent_path();
    nlohmann::json j;
    j["frames"] = manifest.frames;
    j["channels"] = manifest.channels;
    j["height"] = manifest.height;
    j["width"] = manifest.width;
    j["latents"] = nlohmann::json::object();
    for (const auto& [t, p] : manifest.latents) j["latents"][std::to_string(t)] = relative_to(base, p).generic_string();
    j["masks"] = nlohmann::json::object();
    for (const auto& [id, p] : manifest.masks) j["masks"][id] = relative_to(base, p).generic_string();
    j["subjects"] = manifest.subjects;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<MaskTrack> load_manifest_masks(const SceneManifest& manifest) {
    std::vector<MaskTrack> out;
    out.reserve(manifest.subjects.size());
    for (const auto& id : manifest.subjects) out.push_back(load_mask(manifest.masks.at(id), id));
    return out;
}

}  // namespace conmo
