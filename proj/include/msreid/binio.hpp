#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "msreid/errors.hpp"

namespace msreid {

// Explicit little-endian packing so checkpoint bytes are platform-pinned.
class ByteWriter {
public:
    void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void put_u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void put_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void put_i32(std::int32_t v) { put_u32(static_cast<std::uint32_t>(v)); }
    void put_i64(std::int64_t v) { put_u64(static_cast<std::uint64_t>(v)); }
    void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
    void put_f64_array(const std::vector<double>& a) {
        put_u64(a.size());
        for (double v : a) put_f64(v);
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {}

    std::uint8_t get_u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t get_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t get_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
    std::int64_t get_i64() { return static_cast<std::int64_t>(get_u64()); }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    std::vector<double> get_f64_array() {
        const std::uint64_t n = get_u64();
        if (n > (buf_.size() - pos_) / 8) throw DecodeError("binio: array length exceeds payload");
        std::vector<double> a(n);
        for (std::uint64_t i = 0; i < n; ++i) a[i] = get_f64();
        return a;
    }
    bool exhausted() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) {
        if (buf_.size() - pos_ < n) throw DecodeError("binio: truncated payload");
    }
    std::string buf_;  // owned: callers routinely pass freshly read temporaries
    std::size_t pos_ = 0;
};

}  // namespace msreid
