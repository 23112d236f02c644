#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evolve {

using Bytes = std::vector<uint8_t>;
using ByteSpan = std::span<const uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

std::string to_hex(ByteSpan data);

/// A payload that may end in a run of zero bytes tracked only by count, so
/// multi-hundred-MB benchmark images never get materialized.
struct Blob {
    Bytes data;
    uint64_t synthetic = 0;

    uint64_t size() const { return data.size() + synthetic; }
    bool is_synthetic() const { return synthetic > 0; }

    static Blob real(Bytes b) { return Blob{std::move(b), 0}; }
    static Blob zeros(uint64_t n) { return Blob{{}, n}; }
};

/// Big-endian serializer for the fixed-layout wire structures.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) {
        buf_.push_back(uint8_t(v >> 8));
        buf_.push_back(uint8_t(v));
    }
    void u32(uint32_t v) {
        u16(uint16_t(v >> 16));
        u16(uint16_t(v));
    }
    void u64(uint64_t v) {
        u32(uint32_t(v >> 32));
        u32(uint32_t(v));
    }
    void raw(ByteSpan data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    void raw(const Bytes& data) { raw(ByteSpan(data)); }
    template <size_t N>
    void raw(const std::array<uint8_t, N>& a) { raw(ByteSpan(a.data(), N)); }
    /// u16 length prefix followed by the bytes.
    void lp_string(std::string_view s) {
        if (s.size() > 0xFFFF) throw std::length_error("lp_string too long");
        u16(uint16_t(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void zeros(size_t n) { buf_.insert(buf_.end(), n, 0); }

    Bytes take() { return std::move(buf_); }
    size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

/// Big-endian reader; throws on underrun so malformed input is never
/// silently accepted.
class ByteReader {
public:
    explicit ByteReader(ByteSpan data) : data_(data) {}

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16() {
        auto b = take(2);
        return uint16_t(b[0]) << 8 | b[1];
    }
    uint32_t u32() { return uint32_t(u16()) << 16 | u16(); }
    uint64_t u64() { return uint64_t(u32()) << 32 | u32(); }
    Bytes raw(size_t n) {
        auto b = take(n);
        return Bytes(b.begin(), b.end());
    }
    template <size_t N>
    std::array<uint8_t, N> arr() {
        auto b = take(N);
        std::array<uint8_t, N> out{};
        std::memcpy(out.data(), b.data(), N);
        return out;
    }
    std::string lp_string() {
        size_t n = u16();
        auto b = take(n);
        return std::string(b.begin(), b.end());
    }
    size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return remaining() == 0; }
    void expect_done() const {
        if (!done()) throw std::runtime_error("trailing bytes in encoding");
    }

private:
    ByteSpan take(size_t n) {
        if (n > remaining()) throw std::runtime_error("truncated encoding");
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    ByteSpan data_;
    size_t pos_ = 0;
};

}  // namespace evolve
