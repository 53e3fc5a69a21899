#pragma once

// Binary cube / mask / measurement files.
//
//   cube         "MSIC" version:u32=1 H:u32 W:u32 B:u32 wavelengths:f32[B] payload:f32[H*W*B]
//   mask         "MASK" version:u32=1 H:u32 W:u32 payload:f32[H*W]
//   measurement  "MEAS" version:u32=1 H:u32 W':u32 d:u32 sigma_n:f32 payload:f32[H*W']
//
// Little-endian throughout; payloads in the in-memory layout (band-major,
// row-major within a band). Values round-trip exactly at 32-bit precision.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "diffsci/error.hpp"
#include "diffsci/spectral_core.hpp"
#include "diffsci/wire_protocol.hpp"

namespace diffsci::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr wire::Magic kCubeMagic{'M', 'S', 'I', 'C'};
inline constexpr wire::Magic kMaskMagic{'M', 'A', 'S', 'K'};
inline constexpr wire::Magic kMeasMagic{'M', 'E', 'A', 'S'};
// 2^32 values is well past anything a desk-scale cube needs.
inline constexpr std::uint64_t kMaxValues = 1ull << 32;

namespace detail {

[[noreturn]] inline void io_fail(const std::string& what) { fail(ErrorKind::Io, what); }

inline std::vector<std::uint8_t> slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void dump(const std::string& path, const std::vector<std::uint8_t>& bytes)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) io_fail("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) io_fail("write to '" + path + "' failed");
}

/// Parses a header with the given fixed size, checks magic/version and that
/// the file holds exactly header + 4*values bytes.
class Parser {
public:
    Parser(const std::vector<std::uint8_t>& bytes, std::string path) : bytes_(bytes), path_(std::move(path))
    {
        reader_.emplace(wire::buffer_source(bytes_, pos_));
    }

    void expect_header(const wire::Magic& magic)
    {
        if (bytes_.size() < 8) io_fail("'" + path_ + "' is truncated: " + std::to_string(bytes_.size()) + " bytes");
        const wire::Magic m = reader_->magic();
        if (m != magic)
            io_fail("'" + path_ + "' has magic '" + wire::magic_string(m) + "', expected '" +
                    wire::magic_string(magic) + "'");
        const std::uint32_t v = reader_->u32();
        if (v != kFormatVersion) io_fail("'" + path_ + "' has unsupported version " + std::to_string(v));
    }

    std::uint32_t u32()
    {
        guard(4);
        return reader_->u32();
    }
    float f32()
    {
        guard(4);
        return reader_->f32();
    }

    /// Reads `count` f32 values after checking the remaining length is exact.
    std::vector<double> payload(std::uint64_t count)
    {
        if (count > kMaxValues) io_fail("'" + path_ + "' declares " + std::to_string(count) + " values (overflow)");
        const std::uint64_t expected = pos_ + 4 * count;
        if (bytes_.size() != expected)
            io_fail("'" + path_ + "' is " + (bytes_.size() < expected ? "truncated" : "oversized") + ": expected " +
                    std::to_string(expected) + " bytes, found " + std::to_string(bytes_.size()));
        std::vector<double> v(count);
        for (auto& x : v) x = reader_->f32();
        return v;
    }

private:
    void guard(std::size_t n)
    {
        if (bytes_.size() - pos_ < n)
            io_fail("'" + path_ + "' is truncated inside its header (" + std::to_string(bytes_.size()) + " bytes)");
    }

    const std::vector<std::uint8_t>& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
    std::optional<wire::Reader> reader_;
};

inline void put_payload(wire::Writer& w, std::span<const double> v)
{
    for (double x : v) w.f32(static_cast<float>(x));
}

} // namespace detail

inline std::vector<std::uint8_t> encode_cube(const SpectralCube& c)
{
    wire::Writer w;
    w.magic(kCubeMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(c.height()));
    w.u32(static_cast<std::uint32_t>(c.width()));
    w.u32(static_cast<std::uint32_t>(c.bands()));
    for (double l : c.wavelengths()) w.f32(static_cast<float>(l));
    detail::put_payload(w, c.values());
    return w.take();
}

inline SpectralCube decode_cube(const std::vector<std::uint8_t>& bytes, const std::string& path = "<memory>")
{
    detail::Parser p(bytes, path);
    p.expect_header(kCubeMagic);
    const std::uint64_t H = p.u32(), W = p.u32(), B = p.u32();
    if (H == 0 || W == 0 || B == 0) detail::io_fail("'" + path + "' declares an empty cube");
    if (H * W > kMaxValues || H * W * B > kMaxValues) detail::io_fail("'" + path + "' dimensions overflow");
    std::vector<double> wl(B);
    for (auto& l : wl) l = p.f32();
    auto data = p.payload(H * W * B);
    return SpectralCube(H, W, std::move(wl), std::move(data));
}

inline void write_cube(const SpectralCube& c, const std::string& path) { detail::dump(path, encode_cube(c)); }
inline SpectralCube read_cube(const std::string& path) { return decode_cube(detail::slurp(path), path); }

inline void write_mask(const CodedMask& m, const std::string& path)
{
    wire::Writer w;
    w.magic(kMaskMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(m.height()));
    w.u32(static_cast<std::uint32_t>(m.width()));
    detail::put_payload(w, m.values());
    detail::dump(path, w.take());
}

inline CodedMask read_mask(const std::string& path)
{
    const auto bytes = detail::slurp(path);
    detail::Parser p(bytes, path);
    p.expect_header(kMaskMagic);
    const std::uint64_t H = p.u32(), W = p.u32();
    if (H == 0 || W == 0) detail::io_fail("'" + path + "' declares an empty mask");
    return CodedMask(H, W, p.payload(H * W));
}

inline void write_measurement(const Measurement& y, const std::string& path)
{
    wire::Writer w;
    w.magic(kMeasMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(y.height));
    w.u32(static_cast<std::uint32_t>(y.width));
    w.u32(static_cast<std::uint32_t>(y.shift));
    w.f32(static_cast<float>(y.noise_sigma));
    detail::put_payload(w, y.values());
    detail::dump(path, w.take());
}

inline Measurement read_measurement(const std::string& path)
{
    const auto bytes = detail::slurp(path);
    detail::Parser p(bytes, path);
    p.expect_header(kMeasMagic);
    const std::uint64_t H = p.u32(), W = p.u32(), d = p.u32();
    const double sigma = p.f32();
    if (H == 0 || W == 0) detail::io_fail("'" + path + "' declares an empty measurement");
    if (!(sigma >= 0.0)) detail::io_fail("'" + path + "' has a negative or NaN noise level");
    Measurement y(H, W, d, sigma);
    y.data = p.payload(H * W);
    if (!diffsci::detail::all_finite(y.data)) detail::io_fail("'" + path + "' contains non-finite values");
    return y;
}

} // namespace diffsci::io
