#pragma once

// Baseline representations sharing the VOI pipeline: the single axial slice,
// the nine-plane montage, and the untouched cube.
//
// Nine-plane montage, left to right (block b occupies columns [b*side, (b+1)*side)):
//   0: xy  1: xz  2: yz  3: (1,1,0)  4: (1,-1,0)  5: (1,0,1)  6: (1,0,-1)  7: (0,1,1)  8: (0,1,-1)
// Diagonal entries are plane normals (normalized). Each plane has an in-plane
// basis e1 = normalized projection of +z onto the plane (+x when that
// projection vanishes) and e2 = normal x e1. Block pixel (row a, col b) lies at
// m + (a - h) e1 + (b - h) e2 with h = (side-1)/2. Axis-aligned planes sit on
// voxel layer side/2 along their normal (m has that coordinate, h elsewhere);
// diagonal planes pass through the cube center (h,h,h).

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "spiralrep/error.hpp"
#include "spiralrep/geometry.hpp"
#include "spiralrep/resample.hpp"
#include "spiralrep/spiral.hpp"

namespace spiralrep {

enum class ViewKind { spiral, center_slice, nine_view_montage };

inline const char* to_string(ViewKind kind) {
  switch (kind) {
    case ViewKind::spiral: return "spiral";
    case ViewKind::center_slice: return "center_slice";
    case ViewKind::nine_view_montage: return "nine_view_montage";
  }
  return "spiral";
}

struct CandidateRef {
  std::string scan_id;
  std::size_t index = 0;
};

/// Row-major 2D float image.
struct Representation2D {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
  ViewKind kind = ViewKind::spiral;
  CandidateRef candidate_ref;

  float at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }
  float& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }
};

inline Representation2D to_representation(SpiralImage img, CandidateRef ref = {}) {
  return {img.rows, img.cols, std::move(img.data), ViewKind::spiral, std::move(ref)};
}

/// output(i, j) = cube(i, j, side/2).
inline Representation2D center_slice(const VoiCube& cube) {
  Representation2D out;
  out.rows = out.cols = cube.side;
  out.kind = ViewKind::center_slice;
  out.data.resize(static_cast<std::size_t>(cube.side) * static_cast<std::size_t>(cube.side));
  const int k = cube.side / 2;
  for (int i = 0; i < cube.side; ++i)
    for (int j = 0; j < cube.side; ++j) out.at(i, j) = cube.at(i, j, k);
  return out;
}

struct ViewPlane {
  Vec3 normal;
  Vec3 e1;
  Vec3 e2;
  bool axis_aligned = false;
};

inline ViewPlane make_view_plane(Vec3 normal) {
  ViewPlane p;
  p.normal = normalized(normal);
  const Vec3 z{0, 0, 1};
  const Vec3 proj = z - dot(z, p.normal) * p.normal;
  p.e1 = norm(proj) < 1e-12 ? Vec3{1, 0, 0} : normalized(proj);
  p.e2 = cross(p.normal, p.e1);
  const int nonzero = (normal.x != 0) + (normal.y != 0) + (normal.z != 0);
  p.axis_aligned = nonzero == 1;
  return p;
}

inline const std::array<ViewPlane, 9>& nine_view_planes() {
  static const std::array<ViewPlane, 9> planes{
      make_view_plane({0, 0, 1}),  make_view_plane({0, 1, 0}),  make_view_plane({1, 0, 0}),
      make_view_plane({1, 1, 0}),  make_view_plane({1, -1, 0}), make_view_plane({1, 0, 1}),
      make_view_plane({1, 0, -1}), make_view_plane({0, 1, 1}),  make_view_plane({0, 1, -1}),
  };
  return planes;
}

/// Center point m of a montage plane, in cube index coordinates.
inline Vec3 view_plane_center(const ViewPlane& plane, int side) {
  const double h = 0.5 * (side - 1);
  Vec3 m{h, h, h};
  if (plane.axis_aligned) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (plane.normal[a] != 0.0) m[a] = side / 2;
    }
  }
  return m;
}

inline Representation2D nine_views(const VoiCube& cube) {
  if (cube.side < 2 || cube.side % 2 != 0) throw Error(ErrorCode::invalid_argument, "nine_views needs an even cube side");
  const int side = cube.side;
  const double h = 0.5 * (side - 1);
  const double fill = cube.value_unit == ValueUnit::normalized ? 0.0 : kHuMin;

  Representation2D out;
  out.rows = side;
  out.cols = 9 * side;
  out.kind = ViewKind::nine_view_montage;
  out.data.resize(static_cast<std::size_t>(out.rows) * static_cast<std::size_t>(out.cols));

  const auto& planes = nine_view_planes();
  for (std::size_t b = 0; b < planes.size(); ++b) {
    const auto& plane = planes[b];
    const Vec3 m = view_plane_center(plane, side);
    for (int a = 0; a < side; ++a) {
      for (int c = 0; c < side; ++c) {
        const Vec3 p = m + (a - h) * plane.e1 + (c - h) * plane.e2;
        float v;
        if (plane.axis_aligned) {
          // Lattice points coincide with voxel centers; copy without interpolation.
          v = cube.at(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)),
                      static_cast<int>(std::lround(p.z)));
        } else {
          v = static_cast<float>(sample_cube(cube, p, fill));
        }
        out.at(a, static_cast<int>(b) * side + c) = v;
      }
    }
  }
  return out;
}

inline VoiCube cube_passthrough(const VoiCube& cube) { return cube; }

/// FNV-1a over the raw float payload plus shape.
inline std::string cube_fingerprint(const VoiCube& cube) {
  std::uint64_t h = fnv1a64(std::to_string(cube.side));
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(cube.data.data()), cube.data.size() * sizeof(float)), h);
  return to_hex(h);
}

}  // namespace spiralrep
