#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tgvad {

// Little-endian primitives shared by the binary file formats. Serialization
// is byte-explicit so files are identical across platforms.

void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_bytes(std::ostream& out, const void* data, std::size_t n);

/// Readers throw ParseError naming the byte offset when the stream ends
/// early; `what` describes the field being read.
std::uint32_t read_u32(std::istream& in, std::size_t& offset, const std::string& what);
float read_f32(std::istream& in, std::size_t& offset, const std::string& what);
double read_f64(std::istream& in, std::size_t& offset, const std::string& what);
std::vector<std::uint8_t> read_exact(std::istream& in, std::size_t n, std::size_t& offset,
                                     const std::string& what);

} // namespace tgvad
