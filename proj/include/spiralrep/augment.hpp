#pragma once

// 3D augmentation of VOI cubes: rotation about one or two axes, a flip,
// magnification along one or more axes and a shift with mirror padding. All
// requested steps compose into one inverse affine map that is sampled once.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "spiralrep/error.hpp"
#include "spiralrep/geometry.hpp"
#include "spiralrep/random.hpp"
#include "spiralrep/resample.hpp"

namespace spiralrep {

inline constexpr double kMaxZoom = 1.25;
inline constexpr double kMaxShiftFraction = 0.25;

struct RotationStep {
  std::vector<int> axes;           // 1 or 2 distinct axis indices, applied in order
  std::vector<double> angles_deg;  // one angle per axis, [0, 360)
};

struct ZoomStep {
  std::vector<int> axes;
  double factor = 1.0;  // (1, 1.25]
};

struct ShiftStep {
  int axis = 0;
  double fraction = 0.0;  // of the cube side, [-0.25, 0.25]
};

struct AugmentSpec {
  std::optional<RotationStep> rotation;
  std::optional<int> flip_axis;
  std::optional<ZoomStep> zoom;
  std::optional<ShiftStep> shift;
  std::uint64_t provenance_id = 0;

  bool is_identity() const { return !rotation && !flip_axis && !zoom && !shift; }

  void validate() const {
    auto check_axis = [](int a) {
      if (a < 0 || a > 2) throw Error(ErrorCode::invalid_argument, "augment axis must be 0, 1 or 2");
    };
    if (rotation) {
      if (rotation->axes.empty() || rotation->axes.size() > 2 || rotation->axes.size() != rotation->angles_deg.size())
        throw Error(ErrorCode::invalid_argument, "rotation needs one or two axes with one angle each");
      for (int a : rotation->axes) check_axis(a);
      for (double d : rotation->angles_deg) {
        if (!std::isfinite(d)) throw Error(ErrorCode::invalid_argument, "rotation angle must be finite");
      }
    }
    if (flip_axis) check_axis(*flip_axis);
    if (zoom) {
      if (zoom->axes.empty()) throw Error(ErrorCode::invalid_argument, "zoom needs at least one axis");
      for (int a : zoom->axes) check_axis(a);
      if (!(zoom->factor > 1.0 && zoom->factor <= kMaxZoom))
        throw Error(ErrorCode::invalid_argument, "zoom factor must lie in (1, 1.25]");
    }
    if (shift) {
      check_axis(shift->axis);
      if (!(std::abs(shift->fraction) <= kMaxShiftFraction))
        throw Error(ErrorCode::invalid_argument, "shift fraction must lie in [-0.25, 0.25]");
    }
  }
};

/// Each step kind is included with probability 1/2, redrawn if none is; the
/// included steps' parameters are then drawn uniformly over their ranges.
inline AugmentSpec sample_augment_spec(Rng& rng) {
  AugmentSpec spec;
  spec.provenance_id = rng.next();
  bool use[4];
  do {
    for (bool& u : use) u = rng.coin();
  } while (!use[0] && !use[1] && !use[2] && !use[3]);

  if (use[0]) {
    RotationStep rot;
    if (rng.coin()) {
      const int skip = static_cast<int>(rng.below(3));
      for (int a = 0; a < 3; ++a)
        if (a != skip) rot.axes.push_back(a);
    } else {
      rot.axes.push_back(static_cast<int>(rng.below(3)));
    }
    for (std::size_t n = 0; n < rot.axes.size(); ++n) rot.angles_deg.push_back(rng.uniform(0.0, 360.0));
    spec.rotation = std::move(rot);
  }
  if (use[1]) spec.flip_axis = static_cast<int>(rng.below(3));
  if (use[2]) {
    ZoomStep zoom;
    const auto mask = 1 + rng.below(7);
    for (int a = 0; a < 3; ++a)
      if (mask & (1u << a)) zoom.axes.push_back(a);
    zoom.factor = kMaxZoom - (kMaxZoom - 1.0) * rng.uniform01();
    spec.zoom = std::move(zoom);
  }
  if (use[3]) spec.shift = ShiftStep{static_cast<int>(rng.below(3)), rng.uniform(-kMaxShiftFraction, kMaxShiftFraction)};
  return spec;
}

namespace detail {

/// cos/sin of an angle in degrees, exact for multiples of 90.
inline std::pair<double, double> cos_sin_deg(double deg) {
  if (std::fmod(deg, 90.0) == 0.0) {
    const auto q = ((static_cast<long long>(deg / 90.0) % 4) + 4) % 4;
    static constexpr double c[4] = {1, 0, -1, 0};
    static constexpr double s[4] = {0, 1, 0, -1};
    return {c[q], s[q]};
  }
  const double rad = deg * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

inline Mat3 axis_rotation(int axis, double deg) {
  const auto [c, s] = cos_sin_deg(deg);
  switch (axis) {
    case 0: return {{1, 0, 0, 0, c, -s, 0, s, c}};
    case 1: return {{c, 0, s, 0, 1, 0, -s, 0, c}};
    default: return {{c, -s, 0, s, c, 0, 0, 0, 1}};
  }
}

/// Reflects about the boundary voxel centers: -e -> e, (n-1)+e -> (n-1)-e.
inline double mirror(double x, std::size_t n) {
  if (n <= 1) return 0.0;
  const double hi = static_cast<double>(n - 1);
  if (x >= 0.0 && x <= hi) return x;
  const double period = 2.0 * hi;
  x = std::fmod(std::abs(x), period);
  return x > hi ? period - x : x;
}

}  // namespace detail

/// Forward map of content positions (index space, about the cube center c):
/// y = c + Z F R (x - c) + t. Returned as the inverse: x = c + A (y - c - t).
struct AugmentMap {
  Mat3 inverse_linear;
  Vec3 shift;
};

inline AugmentMap augment_map(const AugmentSpec& spec, int side) {
  Mat3 rot = Mat3::identity();
  if (spec.rotation) {
    for (std::size_t n = 0; n < spec.rotation->axes.size(); ++n)
      rot = detail::axis_rotation(spec.rotation->axes[n], spec.rotation->angles_deg[n]) * rot;
  }
  Vec3 flip{1, 1, 1};
  if (spec.flip_axis) flip[static_cast<std::size_t>(*spec.flip_axis)] = -1.0;
  Vec3 inv_zoom{1, 1, 1};
  if (spec.zoom) {
    for (int a : spec.zoom->axes) inv_zoom[static_cast<std::size_t>(a)] = 1.0 / spec.zoom->factor;
  }
  Vec3 t;
  if (spec.shift) t[static_cast<std::size_t>(spec.shift->axis)] = spec.shift->fraction * side;
  return {rot.transposed() * Mat3::diagonal(flip) * Mat3::diagonal(inv_zoom), t};
}

inline VoiCube apply_augment(const VoiCube& cube, const AugmentSpec& spec) {
  spec.validate();
  if (spec.is_identity()) return cube;

  const auto map = augment_map(spec, cube.side);
  const double c = cube.center_index();
  const auto n = static_cast<std::size_t>(cube.side);

  VoiCube out = cube;
  std::size_t idx = 0;
  for (int k = 0; k < cube.side; ++k) {
    for (int j = 0; j < cube.side; ++j) {
      for (int i = 0; i < cube.side; ++i) {
        const Vec3 rel{i - c - map.shift.x, j - c - map.shift.y, k - c - map.shift.z};
        const Vec3 src = Vec3{c, c, c} + map.inverse_linear * rel;
        out.data[idx++] = static_cast<float>(detail::trilinear_in_range(
            cube.data, n, n, n, detail::mirror(src.x, n), detail::mirror(src.y, n), detail::mirror(src.z, n)));
      }
    }
  }
  return out;
}

inline nlohmann::json to_json(const AugmentSpec& spec) {
  nlohmann::json j;
  j["provenance_id"] = spec.provenance_id;
  j["rotation"] = spec.rotation ? nlohmann::json{{"axes", spec.rotation->axes}, {"angles_deg", spec.rotation->angles_deg}}
                                : nlohmann::json(nullptr);
  j["flip_axis"] = spec.flip_axis ? nlohmann::json(*spec.flip_axis) : nlohmann::json(nullptr);
  j["zoom"] = spec.zoom ? nlohmann::json{{"axes", spec.zoom->axes}, {"factor", spec.zoom->factor}}
                        : nlohmann::json(nullptr);
  j["shift"] = spec.shift ? nlohmann::json{{"axis", spec.shift->axis}, {"fraction", spec.shift->fraction}}
                          : nlohmann::json(nullptr);
  return j;
}

inline AugmentSpec augment_spec_from_json(const nlohmann::json& j) {
  AugmentSpec spec;
  spec.provenance_id = j.value("provenance_id", std::uint64_t{0});
  if (j.contains("rotation") && !j["rotation"].is_null())
    spec.rotation = RotationStep{j["rotation"]["axes"].get<std::vector<int>>(),
                                 j["rotation"]["angles_deg"].get<std::vector<double>>()};
  if (j.contains("flip_axis") && !j["flip_axis"].is_null()) spec.flip_axis = j["flip_axis"].get<int>();
  if (j.contains("zoom") && !j["zoom"].is_null())
    spec.zoom = ZoomStep{j["zoom"]["axes"].get<std::vector<int>>(), j["zoom"]["factor"].get<double>()};
  if (j.contains("shift") && !j["shift"].is_null())
    spec.shift = ShiftStep{j["shift"]["axis"].get<int>(), j["shift"]["fraction"].get<double>()};
  spec.validate();
  return spec;
}

}  // namespace spiralrep
