#ifndef AFS_IO_HPP
#define AFS_IO_HPP

// Little-endian binary readers/writers shared by the AFFE/AFRQ/AFCB/checkpoint
// container formats. All on-disk multi-byte values are little-endian
// regardless of host order.

#include "afs/error.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace afs::io {

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) raise(ErrorCode::IoError, "cannot open for writing: " + path);
    }

    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u16(uint16_t v) { uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)}; bytes(b, 2); }
    void u32(uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) { u32(uint32_t(v)); u32(uint32_t(v >> 32)); }
    void f32(float v) { uint32_t u; std::memcpy(&u, &v, 4); u32(u); }
    void f32s(const float* p, size_t n) { for (size_t i = 0; i < n; ++i) f32(p[i]); }
    void magic(const char m[4]) { bytes(m, 4); }
    void str(const std::string& s) {
        if (s.size() > 0xffff) raise(ErrorCode::IoError, "string too long");
        u16(uint16_t(s.size()));
        bytes(s.data(), s.size());
    }

    bool good() const { return bool(out_); }
    void close() { out_.close(); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) raise(ErrorCode::IoError, "cannot open for reading: " + path);
    }

    void bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), n);
        if (size_t(in_.gcount()) != n)
            raise(ErrorCode::FormatError, "truncated file: " + path_);
    }
    uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
    uint16_t u16() { uint8_t b[2]; bytes(b, 2); return uint16_t(b[0] | (b[1] << 8)); }
    uint32_t u32() {
        uint8_t b[4]; bytes(b, 4);
        return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
    }
    uint64_t u64() { uint64_t lo = u32(); uint64_t hi = u32(); return lo | (hi << 32); }
    float f32() { uint32_t u = u32(); float v; std::memcpy(&v, &u, 4); return v; }
    void f32s(float* p, size_t n) { for (size_t i = 0; i < n; ++i) p[i] = f32(); }
    void expect_magic(const char m[4]) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            raise(ErrorCode::FormatError, "bad magic in " + path_ + " (expected " +
                                              std::string(m, 4) + ")");
    }
    std::string str() {
        uint16_t n = u16();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::ifstream in_;
    std::string path_;
};

} // namespace afs::io

#endif
