#pragma once

// Little-endian byte packing shared by the packed-dataset, feature and
// weight-archive formats.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "capsnet/errors.hpp"

namespace capsnet::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void magic(std::string_view m) { bytes(m.data(), m.size()); }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void str16(std::string_view s) {
        if (s.size() > 0xFFFF) throw ContractError("string too long for a u16 length prefix");
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void str32(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; running past the end throws TruncationError.
class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return buf_.size() - pos_; }

    void need(std::size_t n) const {
        if (n > remaining())
            throw TruncationError(what_ + ": truncated, expected at least " + std::to_string(pos_ + n) +
                                  " bytes, found " + std::to_string(buf_.size()));
    }
    const std::uint8_t* take(std::size_t n) {
        need(n);
        const std::uint8_t* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::string magic(std::size_t n) {
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    std::uint8_t u8() { return *take(1); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str16() {
        const std::size_t n = u16();
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    std::string str32() {
        const std::size_t n = u32();
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }

private:
    std::uint64_t get(int n) {
        const auto* p = take(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }

    const std::vector<std::uint8_t>& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace capsnet::io
