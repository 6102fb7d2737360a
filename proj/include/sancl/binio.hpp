// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian primitives shared by the feature and checkpoint formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace sancl::binio {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

inline void write_f32(std::ostream& out, float f) { write_u32(out, std::bit_cast<std::uint32_t>(f)); }

/// Returns false on short read.
inline bool read_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline bool read_f32(std::istream& in, float& f) {
  std::uint32_t v;
  if (!read_u32(in, v)) return false;
  f = std::bit_cast<float>(v);
  return true;
}

}  // namespace sancl::binio
