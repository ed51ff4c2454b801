#pragma once

// VOI extraction around a candidate: trilinear resampling of the scan onto a
// fixed isotropic cube, followed by HU window normalization.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "spiralrep/error.hpp"
#include "spiralrep/geometry.hpp"
#include "spiralrep/volume_io.hpp"

namespace spiralrep {

inline constexpr double kHuMin = -1000.0;
inline constexpr double kHuMax = 400.0;
inline constexpr double kDefaultVoiMm = 50.0;
inline constexpr int kDefaultSide = 64;

/// Fixed-size isotropic cube centered on a candidate, x-fastest.
struct VoiCube {
  int side = 0;
  double resolution = 0.0;  // mm per voxel
  Vec3 center_world;
  std::vector<float> data;
  ValueUnit value_unit = ValueUnit::hu;

  std::size_t index(int i, int j, int k) const {
    const auto s = static_cast<std::size_t>(side);
    return static_cast<std::size_t>(i) + s * (static_cast<std::size_t>(j) + s * static_cast<std::size_t>(k));
  }
  float at(int i, int j, int k) const { return data[index(i, j, k)]; }
  float& at(int i, int j, int k) { return data[index(i, j, k)]; }

  /// Continuous index coordinate of the geometric cube center.
  double center_index() const { return 0.5 * (side - 1); }
};

/// Builds an empty cube with `side`^3 voxels set to `fill`.
inline VoiCube make_cube(int side, float fill = 0.0f, ValueUnit unit = ValueUnit::hu) {
  if (side < 1) throw Error(ErrorCode::invalid_argument, "cube side must be positive");
  VoiCube cube;
  cube.side = side;
  cube.resolution = 1.0;
  cube.value_unit = unit;
  cube.data.assign(static_cast<std::size_t>(side) * side * side, fill);
  return cube;
}

namespace detail {

/// Trilinear interpolation on an x-fastest grid at a continuous index that is
/// already known to lie in [0, n-1] on every axis.
inline double trilinear_in_range(std::span<const float> data, std::size_t nx, std::size_t ny, std::size_t nz, double fx,
                                 double fy, double fz) {
  const auto clamp_base = [](double f, std::size_t n) {
    auto i = static_cast<std::size_t>(f);
    return (i + 1 >= n) ? (n >= 2 ? n - 2 : 0) : i;
  };
  const std::size_t i0 = clamp_base(fx, nx), j0 = clamp_base(fy, ny), k0 = clamp_base(fz, nz);
  const double tx = nx > 1 ? fx - static_cast<double>(i0) : 0.0;
  const double ty = ny > 1 ? fy - static_cast<double>(j0) : 0.0;
  const double tz = nz > 1 ? fz - static_cast<double>(k0) : 0.0;
  const std::size_t dx = nx > 1 ? 1 : 0, dy = ny > 1 ? nx : 0, dz = nz > 1 ? nx * ny : 0;

  const std::size_t base = i0 + nx * (j0 + ny * k0);
  const double c000 = data[base], c100 = data[base + dx];
  const double c010 = data[base + dy], c110 = data[base + dx + dy];
  const double c001 = data[base + dz], c101 = data[base + dx + dz];
  const double c011 = data[base + dy + dz], c111 = data[base + dx + dy + dz];

  const double c00 = c000 + tx * (c100 - c000);
  const double c10 = c010 + tx * (c110 - c010);
  const double c01 = c001 + tx * (c101 - c001);
  const double c11 = c011 + tx * (c111 - c011);
  const double c0 = c00 + ty * (c10 - c00);
  const double c1 = c01 + ty * (c11 - c01);
  return c0 + tz * (c1 - c0);
}

}  // namespace detail

/// Interpolates the volume at a world position (mm). Returns nullopt when the
/// continuous voxel coordinate leaves [0, dims-1] on any axis.
inline std::optional<double> trilinear_sample(const Volume3D& vol, Vec3 world_pos) {
  double f[3];
  for (std::size_t a = 0; a < 3; ++a) {
    f[a] = (world_pos[a] - vol.origin[a]) / vol.spacing[a];
    if (!(f[a] >= 0.0) || f[a] > static_cast<double>(vol.dims[a] - 1)) return std::nullopt;
  }
  return detail::trilinear_in_range(vol.data, vol.dims.x, vol.dims.y, vol.dims.z, f[0], f[1], f[2]);
}

/// Interpolates a cube at a continuous index coordinate. The cube occupies
/// [-0.5, side-0.5] per axis; inside that extent coordinates are clamped to the
/// outermost voxel centers, outside it `fill` is returned.
inline double sample_cube(const VoiCube& cube, Vec3 index_pos, double fill) {
  const double hi = static_cast<double>(cube.side - 1);
  double f[3];
  for (std::size_t a = 0; a < 3; ++a) {
    const double v = index_pos[a];
    if (!(v >= -0.5) || v > hi + 0.5) return fill;
    f[a] = std::clamp(v, 0.0, hi);
  }
  const auto n = static_cast<std::size_t>(cube.side);
  return detail::trilinear_in_range(cube.data, n, n, n, f[0], f[1], f[2]);
}

/// Resamples a `size_mm` cube of `side`^3 voxels centered on `center_world`.
/// Voxel (i,j,k) sits at center + ((i,j,k) + 0.5 - side/2) * size_mm/side;
/// points outside the scan read as air (-1000 HU).
inline VoiCube extract_voi(const Volume3D& vol, Vec3 center_world, double size_mm = kDefaultVoiMm,
                           int side = kDefaultSide) {
  if (!is_finite(center_world)) throw Error(ErrorCode::invalid_argument, "VOI center is not finite");
  if (!(size_mm > 0.0) || !std::isfinite(size_mm)) throw Error(ErrorCode::invalid_argument, "VOI size must be > 0");
  if (side < 2) throw Error(ErrorCode::invalid_argument, "VOI side must be >= 2");

  VoiCube cube;
  cube.side = side;
  cube.resolution = size_mm / side;
  cube.center_world = center_world;
  cube.value_unit = vol.value_unit;
  cube.data.resize(static_cast<std::size_t>(side) * side * side);

  const double pitch = cube.resolution;
  const double half = 0.5 * side;
  std::size_t n = 0;
  for (int k = 0; k < side; ++k) {
    for (int j = 0; j < side; ++j) {
      for (int i = 0; i < side; ++i) {
        const Vec3 p{center_world.x + (i + 0.5 - half) * pitch, center_world.y + (j + 0.5 - half) * pitch,
                     center_world.z + (k + 0.5 - half) * pitch};
        const auto v = trilinear_sample(vol, p);
        cube.data[n++] = static_cast<float>(v ? *v : kHuMin);
      }
    }
  }
  return cube;
}

/// Maps a HU value into [0,1] over the [-1000, 400] window, clipping outside.
inline double normalize_hu(double hu) { return std::clamp((hu - kHuMin) / (kHuMax - kHuMin), 0.0, 1.0); }

inline VoiCube rescale_intensity(VoiCube cube) {
  if (cube.value_unit == ValueUnit::normalized)
    throw Error(ErrorCode::invalid_argument, "cube is already normalized");
  for (auto& v : cube.data) v = static_cast<float>(normalize_hu(v));
  cube.value_unit = ValueUnit::normalized;
  return cube;
}

}  // namespace spiralrep
