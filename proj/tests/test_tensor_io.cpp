#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "conmo/io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace conmo;

namespace {

void write_raw(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string le32(std::uint32_t v) {
    std::string s(4, '\0');
    for (int k = 0; k < 4; ++k) s[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    return s;
}

std::string f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    return le32(bits);
}

template <class Fn>
ErrorCode code_of(Fn fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected conmo::Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("tensor-io") {

TEST_CASE("zero tensor round trip") {
    auto dir = testutil::scratch_dir("zero_rt");
    LatentVideo v(VideoDims{2, 1, 2, 2});
    save_tensor(v, dir / "z.cmt");
    CHECK(load_tensor(dir / "z.cmt") == v);
}

TEST_CASE("bad magic") {
    auto dir = testutil::scratch_dir("magic");
    write_raw(dir / "x.cmt", "XXXX" + le32(4) + le32(2) + le32(1) + le32(1) + le32(1) + f32(0) + f32(0));
    CHECK(code_of([&] { load_tensor(dir / "x.cmt"); }) == ErrorCode::BadMagic);
    write_raw(dir / "x.cmm", "XXXX" + le32(3) + le32(1) + le32(1) + le32(1) + std::string(1, '\0'));
    CHECK(code_of([&] { load_mask(dir / "x.cmm"); }) == ErrorCode::BadMagic);
}

TEST_CASE("random tensor round trip is bit exact against the raw payload") {
    auto dir = testutil::scratch_dir("rand_rt");
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    VideoDims dims{4, 4, 8, 8};
    std::vector<float> raw(dims.total());
    std::vector<double> vals(dims.total());
    for (std::size_t k = 0; k < raw.size(); ++k) {
        raw[k] = u(rng);
        vals[k] = raw[k];
    }
    LatentVideo v(dims, vals);
    save_tensor(v, dir / "r.cmt");
    // Byte-level oracle: header then the f32 payload in row-major order.
    std::string expect = "CMT1" + le32(4) + le32(4) + le32(4) + le32(8) + le32(8);
    for (float f : raw) expect += f32(f);
    CHECK(oracle::read_bytes(dir / "r.cmt") == expect);
    const auto back = load_tensor(dir / "r.cmt");
    REQUIRE(back.dims() == dims);
    for (std::size_t k = 0; k < raw.size(); ++k) {
        const float got = static_cast<float>(back.data()[k]);
        CHECK(std::memcmp(&got, &raw[k], 4) == 0);
    }
}

TEST_CASE("file length follows the layout") {
    auto dir = testutil::scratch_dir("len");
    LatentVideo v(VideoDims{2, 1, 1, 1}, std::vector<double>{1.0, 2.0});
    save_tensor(v, dir / "t.cmt");
    CHECK(fs::file_size(dir / "t.cmt") == 4 + 4 + 4 * 4 + 2 * 4);
}

TEST_CASE("zero-size dims are rejected before writing") {
    auto dir = testutil::scratch_dir("zerodim");
    CHECK(code_of([] { LatentVideo(VideoDims{2, 0, 2, 2}); }) == ErrorCode::DimMismatch);
    CHECK(code_of([] { LatentVideo(VideoDims{1, 1, 2, 2}); }) == ErrorCode::DimMismatch);
    CHECK(code_of([&] { write_cmt(RawTensor{{2, 0}, {}}, dir / "z.cmt"); }) == ErrorCode::DimMismatch);
    CHECK_FALSE(fs::exists(dir / "z.cmt"));
}

TEST_CASE("saving twice gives identical bytes") {
    auto dir = testutil::scratch_dir("twice");
    std::mt19937_64 rng(5);
    auto v = oracle::random_video(rng, {3, 2, 5, 4});
    save_tensor(v, dir / "a.cmt");
    save_tensor(v, dir / "b.cmt");
    CHECK(oracle::read_bytes(dir / "a.cmt") == oracle::read_bytes(dir / "b.cmt"));
}

TEST_CASE("header and payload disagreement") {
    auto dir = testutil::scratch_dir("short");
    write_raw(dir / "s.cmt", "CMT1" + le32(4) + le32(2) + le32(1) + le32(1) + le32(2) + f32(1) + f32(2) + f32(3));
    CHECK(code_of([&] { load_tensor(dir / "s.cmt"); }) == ErrorCode::DimMismatch);
    write_raw(dir / "s.cmm", "CMM1" + le32(3) + le32(2) + le32(1) + le32(2) + std::string(3, '\0'));
    CHECK(code_of([&] { load_mask(dir / "s.cmm"); }) == ErrorCode::DimMismatch);
}

TEST_CASE("non-finite payloads are rejected") {
    auto dir = testutil::scratch_dir("nan");
    write_raw(dir / "n.cmt", "CMT1" + le32(4) + le32(2) + le32(1) + le32(1) + le32(1) + f32(1) +
                                 f32(std::numeric_limits<float>::quiet_NaN()));
    CHECK(code_of([&] { load_tensor(dir / "n.cmt"); }) == ErrorCode::NonFinite);
    write_raw(dir / "i.cmt", "CMT1" + le32(4) + le32(2) + le32(1) + le32(1) + le32(1) +
                                 f32(std::numeric_limits<float>::infinity()) + f32(0));
    CHECK(code_of([&] { load_tensor(dir / "i.cmt"); }) == ErrorCode::NonFinite);
    std::vector<double> bad{0.0, std::nan("")};
    CHECK(code_of([&] { LatentVideo(VideoDims{2, 1, 1, 1}, bad); }) == ErrorCode::NonFinite);
    LatentVideo big(VideoDims{2, 1, 1, 1}, std::vector<double>{1e300, 0.0});
    CHECK(code_of([&] { save_tensor(big, dir / "big.cmt"); }) == ErrorCode::NonFinite);
}

TEST_CASE("mask byte outside {0,1}") {
    auto dir = testutil::scratch_dir("maskval");
    write_raw(dir / "m.cmm", "CMM1" + le32(3) + le32(1) + le32(1) + le32(2) + std::string("\x01\x02", 2));
    CHECK(code_of([&] { load_mask(dir / "m.cmm"); }) == ErrorCode::BadValue);
}

TEST_CASE("mask round trips") {
    auto dir = testutil::scratch_dir("maskrt");
    MaskTrack zeros("a", 3, 4, 5);
    save_mask(zeros, dir / "z.cmm");
    CHECK(load_mask(dir / "z.cmm", "a") == zeros);

    std::mt19937_64 rng(3);
    std::vector<RegionMask> frames;
    std::string expect = "CMM1" + le32(3) + le32(4) + le32(7) + le32(9);
    for (int f = 0; f < 4; ++f) {
        frames.push_back(oracle::random_mask(rng, 7, 9));
        for (auto c : frames.back().cells()) expect += static_cast<char>(c);
    }
    MaskTrack track("b", frames);
    save_mask(track, dir / "r.cmm");
    CHECK(oracle::read_bytes(dir / "r.cmm") == expect);
    CHECK(load_mask(dir / "r.cmm", "b") == track);
}

TEST_CASE("manifest checks referenced files") {
    auto dir = testutil::scratch_dir("manifest");
    LatentVideo v(VideoDims{2, 1, 3, 3});
    save_tensor(v, dir / "l.cmt");
    save_mask(MaskTrack("a", 2, 3, 3), dir / "a.cmm");
    SceneManifest m;
    m.frames = 2;
    m.channels = 1;
    m.height = 3;
    m.width = 3;
    m.latents[0] = dir / "l.cmt";
    m.masks["a"] = dir / "a.cmm";
    m.subjects = {"a"};
    save_manifest(m, dir / "manifest.json");
    const auto back = load_manifest(dir / "manifest.json");
    CHECK(back.dims() == m.dims());
    CHECK(back.subjects == m.subjects);
    CHECK(load_manifest_masks(back).at(0).subject_id() == "a");

    save_mask(MaskTrack("a", 2, 3, 4), dir / "a.cmm");
    CHECK(code_of([&] { load_manifest(dir / "manifest.json"); }) == ErrorCode::DimMismatch);
    fs::remove(dir / "a.cmm");
    CHECK(code_of([&] { load_manifest(dir / "manifest.json"); }) == ErrorCode::IoFailure);
}

TEST_CASE("mask track compatibility") {
    LatentVideo v(VideoDims{2, 1, 3, 3});
    CHECK_NOTHROW(check_compatible(v, MaskTrack("a", 2, 3, 3)));
    CHECK(code_of([&] { check_compatible(v, MaskTrack("a", 3, 3, 3)); }) == ErrorCode::DimMismatch);
    CHECK(code_of([&] { check_compatible(v, MaskTrack("a", 2, 3, 2)); }) == ErrorCode::DimMismatch);
}

}
