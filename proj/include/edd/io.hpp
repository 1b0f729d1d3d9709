#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edd {

/// Raised by file readers on bad magic bytes, version mismatch or truncation.
class FileFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Byte-wise little-endian writers/readers so file layouts do not depend on
// host endianness.

inline void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u8(std::ostream& out, uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline void write_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u32(out, static_cast<uint32_t>(bits & 0xffffffffu));
    write_u32(out, static_cast<uint32_t>(bits >> 32));
}

inline uint32_t read_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FileFormatError(std::string("truncated file while reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t read_u16(std::istream& in, const char* what) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2))
        throw FileFormatError(std::string("truncated file while reading ") + what);
    return static_cast<uint16_t>(static_cast<uint16_t>(b[0]) |
                                 (static_cast<uint16_t>(b[1]) << 8));
}

inline uint8_t read_u8(std::istream& in, const char* what) {
    int c = in.get();
    if (c == std::char_traits<char>::eof())
        throw FileFormatError(std::string("truncated file while reading ") + what);
    return static_cast<uint8_t>(c);
}

inline float read_f32(std::istream& in, const char* what) {
    uint32_t bits = read_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline double read_f64(std::istream& in, const char* what) {
    uint64_t lo = read_u32(in, what);
    uint64_t hi = read_u32(in, what);
    uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void write_f32_block(std::ostream& out, const std::vector<float>& values) {
    for (float v : values) write_f32(out, v);
}

inline void read_f32_block(std::istream& in, std::vector<float>& values, size_t count,
                           const char* what) {
    values.resize(count);
    for (size_t i = 0; i < count; ++i) values[i] = read_f32(in, what);
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
    uint32_t len = read_u32(in, what);
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len))
        throw FileFormatError(std::string("truncated file while reading ") + what);
    return s;
}

}  // namespace edd
