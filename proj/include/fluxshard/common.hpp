#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace fluxshard {

// Raised on any malformed or inconsistent wire traffic (bad magic, CRC, lengths).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when client- and server-side state provably diverged (frame gap, cache audit).
struct DesyncError : std::runtime_error {
    explicit DesyncError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Logging. Level comes from the FS_LOG environment variable:
//   error < warn < info < debug   (default: warn)
// ---------------------------------------------------------------------------

enum class LogLevel : int { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

inline LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* e = std::getenv("FS_LOG");
        if (!e) return LogLevel::kWarn;
        std::string s(e);
        if (s == "error") return LogLevel::kError;
        if (s == "info") return LogLevel::kInfo;
        if (s == "debug") return LogLevel::kDebug;
        return LogLevel::kWarn;
    }();
    return lvl;
}

inline void log_msg(LogLevel lvl, const std::string& msg) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[fluxshard:%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

#if defined(__GNUC__)
__attribute__((format(printf, 2, 3)))
#endif
inline void
log_printf(LogLevel lvl, const char* fmt, ...) {
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    char buf[512];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, ap);
    va_end(ap);
    log_msg(lvl, buf);
}

// Usage: FS_LOG(kInfo, "processed %d frames", n);
#define FS_LOG(level, ...) ::fluxshard::log_printf(::fluxshard::LogLevel::level, __VA_ARGS__)

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64: identical streams on every platform, unlike
// <random> distributions whose output is implementation-defined.
// ---------------------------------------------------------------------------

struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform integer in [lo, hi] inclusive.
    int64_t next_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Standard normal via Box-Muller (deterministic, no <random>).
    double next_gauss() {
        double u1 = next_unit(), u2 = next_unit();
        while (u1 <= 1e-300) u1 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

// ---------------------------------------------------------------------------
// CRC32 (IEEE 802.3, reflected, poly 0xEDB88320), table-driven.
// ---------------------------------------------------------------------------

inline uint32_t crc32(const uint8_t* data, size_t n, uint32_t seed = 0) {
    static const auto table = [] {
        std::vector<uint32_t> t(256);
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = ~seed;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return ~c;
}

inline uint32_t crc32(const std::vector<uint8_t>& data) {
    return crc32(data.data(), data.size());
}

// FNV-1a, used for configuration fingerprints in the handshake.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ULL) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// ---------------------------------------------------------------------------
// Little-endian byte IO for the wire formats and binary fixtures.
// ---------------------------------------------------------------------------

struct ByteWriter {
    std::vector<uint8_t> buf;

    void u8(uint8_t v) { buf.push_back(v); }
    void u16(uint16_t v) {
        buf.push_back(uint8_t(v));
        buf.push_back(uint8_t(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(uint8_t(v >> (8 * i)));
    }
    void i16(int16_t v) { u16(static_cast<uint16_t>(v)); }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const uint8_t* p, size_t n) { buf.insert(buf.end(), p, p + n); }
    void bytes(const std::vector<uint8_t>& b) { bytes(b.data(), b.size()); }
    void magic(const char m[4]) { bytes(reinterpret_cast<const uint8_t*>(m), 4); }
};

struct ByteReader {
    const uint8_t* p;
    size_t n;
    size_t pos = 0;

    ByteReader(const uint8_t* data, size_t size) : p(data), n(size) {}
    explicit ByteReader(const std::vector<uint8_t>& b) : p(b.data()), n(b.size()) {}

    void need(size_t k) const {
        if (pos + k > n) throw ProtocolError("truncated message");
    }
    uint8_t u8() {
        need(1);
        return p[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    int16_t i16() { return static_cast<int16_t>(u16()); }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::vector<uint8_t> bytes(size_t k) {
        need(k);
        std::vector<uint8_t> out(p + pos, p + pos + k);
        pos += k;
        return out;
    }
    void expect_magic(const char m[4], const char* what) {
        need(4);
        if (std::memcmp(p + pos, m, 4) != 0) throw ProtocolError(std::string("bad magic for ") + what);
        pos += 4;
    }
    size_t remaining() const { return n - pos; }
};

}  // namespace fluxshard
