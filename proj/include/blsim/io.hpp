// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "blsim/common.hpp"

namespace blsim::io {

// Little-endian scalar append/read on byte buffers.
inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xFF));
    out.push_back(uint8_t(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; i++) out.push_back(uint8_t((v >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& buf) : data_(buf.data()), size_(buf.size()) {}

    uint8_t u8() { return data_[need(1)]; }
    uint16_t u16() {
        size_t p = need(2);
        return uint16_t(data_[p] | (uint16_t(data_[p + 1]) << 8));
    }
    uint32_t u32() {
        size_t p = need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) v |= uint32_t(data_[p + i]) << (8 * i);
        return v;
    }
    void bytes(void* dst, size_t n) { std::memcpy(dst, data_ + need(n), n); }
    size_t pos() const { return pos_; }
    size_t remaining() const { return size_ - pos_; }

private:
    size_t need(size_t n) {
        if (pos_ + n > size_) throw StreamError("unexpected end of data", int64_t(pos_));
        size_t p = pos_;
        pos_ += n;
        return p;
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);

// Writes via a temp file in the same directory, then renames into place.
void write_file_atomic(const std::string& path, const void* data, size_t size);
inline void write_file_atomic(const std::string& path, const std::vector<uint8_t>& buf) {
    write_file_atomic(path, buf.data(), buf.size());
}

}  // namespace blsim::io
