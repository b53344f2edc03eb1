#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Endian-explicit stream helpers shared by the checkpoint, embedding and MIDI codecs.
namespace songgen::binio {

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw std::runtime_error("unexpected end of stream");
}

inline void write_u16be(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    write_bytes(out, b, 2);
}

inline void write_u32be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    write_bytes(out, b, 4);
}

inline std::uint16_t read_u16be(std::istream& in) {
    unsigned char b[2];
    read_bytes(in, b, 2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

inline std::uint32_t read_u32be(std::istream& in) {
    unsigned char b[4];
    read_bytes(in, b, 4);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 4);
}

inline void write_u64le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 8);
}

inline std::uint32_t read_u32le(std::istream& in) {
    unsigned char b[4];
    read_bytes(in, b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64le(std::istream& in) {
    unsigned char b[8];
    read_bytes(in, b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f64le(std::ostream& out, double d) {
    write_u64le(out, std::bit_cast<std::uint64_t>(d));
}

inline double read_f64le(std::istream& in) {
    return std::bit_cast<double>(read_u64le(in));
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64le(out, s.size());
    write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in, std::size_t max_len = 1u << 30) {
    std::uint64_t n = read_u64le(in);
    if (n > max_len) throw std::runtime_error("string length " + std::to_string(n) + " exceeds limit");
    std::string s(static_cast<std::size_t>(n), '\0');
    if (n > 0) read_bytes(in, s.data(), static_cast<std::size_t>(n));
    return s;
}

}  // namespace songgen::binio
