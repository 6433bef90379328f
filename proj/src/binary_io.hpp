#pragma once

// Little-endian primitive I/O shared by the checkpoint and trajectory formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "fisale/tensor.hpp"

namespace fisale::detail {

using fisale::FormatError;

template <typename Uint>
Uint to_little(Uint v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    Uint out = 0;
    for (std::size_t i = 0; i < sizeof(Uint); ++i) {
      out = static_cast<Uint>((out << 8) | ((v >> (8 * i)) & 0xFF));
    }
    return out;
  }
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline void write_f64(std::ostream& os, double v) {
  auto bits = to_little(std::bit_cast<std::uint64_t>(v));
  os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

inline void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  read_exact(is, &v, sizeof v, what);
  return to_little(v);
}

inline float read_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_u32(is, what));
}

inline double read_f64(std::istream& is, const char* what) {
  std::uint64_t bits = 0;
  read_exact(is, &bits, sizeof bits, what);
  return std::bit_cast<double>(to_little(bits));
}

inline void expect_magic(std::istream& is, const std::array<char, 4>& magic) {
  std::array<char, 4> got{};
  read_exact(is, got.data(), got.size(), "magic");
  if (got != magic) {
    throw FormatError("bad magic: expected '" + std::string(magic.data(), 4) + "'");
  }
}

}  // namespace fisale::detail
