#pragma once

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

namespace smile::io {

// Little-endian primitives shared by the dataset and tensor containers.

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline bool read_u64(std::istream& in, std::uint64_t& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return true;
}

inline void write_f32_array(std::ostream& out, const float* data, Eigen::Index n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
  } else {
    std::vector<unsigned char> buf(static_cast<std::size_t>(n) * 4);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto u = std::bit_cast<std::uint32_t>(data[i]);
      for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<unsigned char>(u >> (8 * k));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

inline bool read_f32_array(std::istream& in, float* data, Eigen::Index n) {
  if constexpr (std::endian::native == std::endian::little) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4)));
  } else {
    std::vector<unsigned char> buf(static_cast<std::size_t>(n) * 4);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) return false;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= std::uint32_t(buf[i * 4 + k]) << (8 * k);
      data[i] = std::bit_cast<float>(u);
    }
    return true;
  }
}

}  // namespace smile::io
