#pragma once

// Denoiser wire protocol. All integers are little-endian u32, reals are
// little-endian IEEE-754 (f64 in the handshake, f32 in tensor payloads).
//
//   handshake  client -> "DNS1" T:u32 beta_start:f64 beta_end:f64
//              server -> "ACK1"
//   request    "REQ1" t:u32 H:u32 W:u32 C:u32(=3) payload:f32[H*W*C]
//   response   "RSP1" t:u32 H:u32 W:u32 C:u32(=3) payload:f32[H*W*C]  (the score)
//   error      "ERR1" len:u32 utf8[len]
//
// Payloads are channel-major like TriImage.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "diffsci/error.hpp"
#include "diffsci/spectral_core.hpp"

namespace diffsci::wire {

using Bytes = std::vector<std::uint8_t>;
using Magic = std::array<char, 4>;

inline constexpr Magic kHandshake{'D', 'N', 'S', '1'};
inline constexpr Magic kAck{'A', 'C', 'K', '1'};
inline constexpr Magic kRequest{'R', 'E', 'Q', '1'};
inline constexpr Magic kResponse{'R', 'S', 'P', '1'};
inline constexpr Magic kError{'E', 'R', 'R', '1'};

// Bound on H*W*C accepted from the wire, 64 Mi values (256 MiB of f32).
inline constexpr std::uint64_t kMaxPayloadValues = 64ull << 20;
inline constexpr std::uint32_t kMaxErrorLength = 1u << 20;

struct Handshake {
    std::uint32_t total_steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    bool operator==(const Handshake&) const = default;
};

struct Ack {
    bool operator==(const Ack&) const = default;
};

struct TensorFrame {
    bool is_response = false;
    std::uint32_t timestep = 0;
    std::uint32_t height = 0, width = 0, channels = 3;
    std::vector<float> payload;
    bool operator==(const TensorFrame&) const = default;
};

struct ErrorFrame {
    std::string message;
    bool operator==(const ErrorFrame&) const = default;
};

using Frame = std::variant<Handshake, Ack, TensorFrame, ErrorFrame>;

class Writer {
public:
    void magic(const Magic& m) { out_.insert(out_.end(), m.begin(), m.end()); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

/// Pulls exactly n bytes or throws; implemented by transports and by the
/// in-memory reader used in tests.
using ReadExact = std::function<void(std::span<std::uint8_t>)>;

class Reader {
public:
    explicit Reader(ReadExact src) : src_(std::move(src)) {}

    Magic magic()
    {
        std::array<std::uint8_t, 4> b{};
        src_(b);
        return {char(b[0]), char(b[1]), char(b[2]), char(b[3])};
    }
    std::uint32_t u32()
    {
        std::array<std::uint8_t, 4> b{};
        src_(b);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    }
    std::uint64_t u64()
    {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | hi << 32;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string text(std::size_t n)
    {
        std::string s(n, '\0');
        if (n) src_(std::span<std::uint8_t>(reinterpret_cast<std::uint8_t*>(s.data()), n));
        return s;
    }

private:
    ReadExact src_;
};

inline std::string magic_string(const Magic& m) { return std::string(m.begin(), m.end()); }

inline Bytes encode(const Handshake& h)
{
    Writer w;
    w.magic(kHandshake);
    w.u32(h.total_steps);
    w.f64(h.beta_start);
    w.f64(h.beta_end);
    return w.take();
}

inline Bytes encode(const Ack&)
{
    Writer w;
    w.magic(kAck);
    return w.take();
}

inline Bytes encode(const TensorFrame& f)
{
    require(f.payload.size() == std::size_t(f.height) * f.width * f.channels, "tensor frame payload size mismatch");
    Writer w;
    w.magic(f.is_response ? kResponse : kRequest);
    w.u32(f.timestep);
    w.u32(f.height);
    w.u32(f.width);
    w.u32(f.channels);
    for (float v : f.payload) w.f32(v);
    return w.take();
}

inline Bytes encode(const ErrorFrame& e)
{
    Writer w;
    w.magic(kError);
    w.u32(static_cast<std::uint32_t>(e.message.size()));
    w.raw(e.message);
    return w.take();
}

inline Bytes encode(const Frame& f)
{
    return std::visit([](const auto& x) { return encode(x); }, f);
}

inline TensorFrame tensor_frame(const TriImage& img, int timestep, bool is_response)
{
    TensorFrame f;
    f.is_response = is_response;
    f.timestep = static_cast<std::uint32_t>(timestep);
    f.height = static_cast<std::uint32_t>(img.height());
    f.width = static_cast<std::uint32_t>(img.width());
    f.channels = 3;
    auto v = img.values();
    f.payload.assign(v.begin(), v.end());
    return f;
}

inline TriImage to_tri_image(const TensorFrame& f)
{
    require(f.channels == 3, "tensor frame must carry 3 channels, got " + std::to_string(f.channels));
    return TriImage(f.height, f.width, std::vector<double>(f.payload.begin(), f.payload.end()));
}

/// Reads one frame of any kind. Unknown magic or absurd sizes raise a
/// protocol error (ErrorKind::ExternalPrior).
inline Frame read_frame(Reader& r)
{
    const Magic m = r.magic();
    if (m == kHandshake) {
        Handshake h;
        h.total_steps = r.u32();
        h.beta_start = r.f64();
        h.beta_end = r.f64();
        return h;
    }
    if (m == kAck) return Ack{};
    if (m == kRequest || m == kResponse) {
        TensorFrame f;
        f.is_response = m == kResponse;
        f.timestep = r.u32();
        f.height = r.u32();
        f.width = r.u32();
        f.channels = r.u32();
        const std::uint64_t n = std::uint64_t(f.height) * f.width * f.channels;
        if (n > kMaxPayloadValues)
            fail(ErrorKind::ExternalPrior, "tensor frame declares " + std::to_string(n) + " values, over the limit");
        f.payload.resize(n);
        for (auto& v : f.payload) v = r.f32();
        return f;
    }
    if (m == kError) {
        const std::uint32_t len = r.u32();
        if (len > kMaxErrorLength) fail(ErrorKind::ExternalPrior, "error frame too long");
        return ErrorFrame{r.text(len)};
    }
    fail(ErrorKind::ExternalPrior, "unknown frame magic '" + magic_string(m) + "'");
}

/// Reader over an in-memory buffer; throws on truncation.
inline ReadExact buffer_source(std::span<const std::uint8_t> buf, std::size_t& pos)
{
    return [buf, &pos](std::span<std::uint8_t> out) {
        if (buf.size() - pos < out.size()) fail(ErrorKind::ExternalPrior, "frame truncated");
        std::memcpy(out.data(), buf.data() + pos, out.size());
        pos += out.size();
    };
}

} // namespace diffsci::wire
