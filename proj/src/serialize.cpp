#include "tgvad/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "tgvad/errors.hpp"

namespace tgvad {

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& out, float v) {
    write_u32(out, std::bit_cast<std::uint32_t>(v));
}

void write_f64(std::ostream& out, double v) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    write_u32(out, static_cast<std::uint32_t>(u & 0xffffffffull));
    write_u32(out, static_cast<std::uint32_t>(u >> 32));
}

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

std::vector<std::uint8_t> read_exact(std::istream& in, std::size_t n, std::size_t& offset,
                                     const std::string& what) {
    std::vector<std::uint8_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != n) {
        throw ParseError("truncated file while reading " + what + " at byte offset " +
                         std::to_string(offset) + ": expected " + std::to_string(n) +
                         " bytes, found " + std::to_string(got));
    }
    offset += n;
    return buf;
}

std::uint32_t read_u32(std::istream& in, std::size_t& offset, const std::string& what) {
    const auto b = read_exact(in, 4, offset, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float read_f32(std::istream& in, std::size_t& offset, const std::string& what) {
    return std::bit_cast<float>(read_u32(in, offset, what));
}

double read_f64(std::istream& in, std::size_t& offset, const std::string& what) {
    const std::uint64_t lo = read_u32(in, offset, what);
    const std::uint64_t hi = read_u32(in, offset, what);
    return std::bit_cast<double>(lo | (hi << 32));
}

} // namespace tgvad
