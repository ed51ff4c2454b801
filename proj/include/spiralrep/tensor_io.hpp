#pragma once

// `.s2dt` tensor files:
//   "S2DT" | u8 version (1) | u8 dtype (1 = float32 LE) | u8 ndims | ndims x u32 LE dims | payload
// Payload is row-major over the listed dims (the last dim varies fastest).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "spiralrep/error.hpp"
#include "spiralrep/resample.hpp"
#include "spiralrep/views.hpp"

namespace spiralrep {

inline constexpr char kS2dtMagic[4] = {'S', '2', 'D', 'T'};
inline constexpr std::uint8_t kS2dtVersion = 1;
inline constexpr std::uint8_t kS2dtFloat32 = 1;

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<char> encode_s2dt(std::span<const std::uint32_t> dims, std::span<const float> data) {
  if (dims.empty() || dims.size() > 255) throw Error(ErrorCode::invalid_argument, "s2dt needs 1..255 dims");
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != data.size())
    throw Error(ErrorCode::size_mismatch, "s2dt payload length does not match the product of dims");

  std::vector<char> out(kS2dtMagic, kS2dtMagic + 4);
  out.push_back(static_cast<char>(kS2dtVersion));
  out.push_back(static_cast<char>(kS2dtFloat32));
  out.push_back(static_cast<char>(dims.size()));
  for (auto d : dims) detail::put_u32(out, d);
  out.reserve(out.size() + data.size() * 4);
  for (float f : data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline Tensor decode_s2dt(std::span<const char> bytes, const std::string& name = "<s2dt>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto need = [&](std::size_t offset, std::size_t len) {
    if (bytes.size() < offset + len)
      throw Error(ErrorCode::parse,
                  name + ": truncated at offset " + std::to_string(bytes.size()) + " (need " +
                      std::to_string(offset + len) + " bytes)");
  };
  need(0, 7);
  if (std::memcmp(p, kS2dtMagic, 4) != 0) throw Error(ErrorCode::parse, name + ": bad magic at offset 0");
  if (p[4] != kS2dtVersion) throw Error(ErrorCode::unsupported_format, name + ": unsupported version at offset 4");
  if (p[5] != kS2dtFloat32) throw Error(ErrorCode::unsupported_format, name + ": unsupported dtype at offset 5");
  const std::size_t ndims = p[6];
  if (ndims == 0) throw Error(ErrorCode::parse, name + ": zero dims at offset 6");
  need(7, 4 * ndims);

  Tensor t;
  for (std::size_t d = 0; d < ndims; ++d) t.dims.push_back(detail::get_u32(p + 7 + 4 * d));
  const std::size_t payload = 7 + 4 * ndims;
  const std::size_t count = t.element_count();
  need(payload, 4 * count);
  if (bytes.size() != payload + 4 * count)
    throw Error(ErrorCode::size_mismatch, name + ": trailing bytes after offset " + std::to_string(payload + 4 * count));
  t.data.resize(count);
  for (std::size_t n = 0; n < count; ++n) t.data[n] = std::bit_cast<float>(detail::get_u32(p + payload + 4 * n));
  return t;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_s2dt(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                       std::span<const float> data) {
  write_bytes(path, encode_s2dt(dims, data));
}

inline Tensor read_s2dt(const std::filesystem::path& path) { return decode_s2dt(read_bytes(path), path.string()); }

inline void write_s2dt(const std::filesystem::path& path, const Representation2D& rep) {
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(rep.rows), static_cast<std::uint32_t>(rep.cols)};
  write_s2dt(path, dims, rep.data);
}

/// Cube dims are written (side, side, side); payload order is [z][y][x].
inline void write_s2dt(const std::filesystem::path& path, const VoiCube& cube) {
  const auto s = static_cast<std::uint32_t>(cube.side);
  const std::uint32_t dims[3] = {s, s, s};
  write_s2dt(path, dims, cube.data);
}

/// Binary PGM (P5), [0,1] mapped linearly onto [0,255].
inline void write_pgm(const std::filesystem::path& path, const Representation2D& rep) {
  std::string out = "P5\n" + std::to_string(rep.cols) + " " + std::to_string(rep.rows) + "\n255\n";
  out.reserve(out.size() + rep.data.size());
  for (float v : rep.data) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  write_bytes(path, out);
}

}  // namespace spiralrep
