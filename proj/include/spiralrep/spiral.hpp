#pragma once

// Spiral scanning: a sphere inscribed in the VOI cube is swept by rays from its
// center to surface points visited latitude by latitude, top to bottom, each
// latitude circled counter-clockwise. Every ray contributes one image column of
// `samples_per_ray` intensities, center at row 0 and surface at the last row.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spiralrep/error.hpp"
#include "spiralrep/geometry.hpp"
#include "spiralrep/hash.hpp"
#include "spiralrep/resample.hpp"
#include "spiralrep/text.hpp"

namespace spiralrep {

enum class LatitudeRule { floor, round, ceil };

inline const char* to_string(LatitudeRule rule) {
  switch (rule) {
    case LatitudeRule::floor: return "floor";
    case LatitudeRule::round: return "round";
    case LatitudeRule::ceil: return "ceil";
  }
  return "floor";
}

inline LatitudeRule parse_latitude_rule(std::string_view s) {
  if (s == "floor") return LatitudeRule::floor;
  if (s == "round") return LatitudeRule::round;
  if (s == "ceil") return LatitudeRule::ceil;
  throw Error(ErrorCode::invalid_argument, "unknown latitude rule '" + std::string(s) + "'");
}

struct SpiralConfig {
  int n_steps = 10;          // azimuth step is pi / n_steps
  int samples_per_ray = 32;  // image rows
  LatitudeRule latitude_rule = LatitudeRule::floor;
  bool include_poles = false;
  std::optional<std::vector<int>> explicit_counts;  // one entry per latitude, n_steps + 1 total

  void validate() const {
    if (n_steps < 2) throw Error(ErrorCode::invalid_argument, "n_steps must be >= 2");
    if (samples_per_ray < 2) throw Error(ErrorCode::invalid_argument, "samples_per_ray must be >= 2");
    if (explicit_counts) {
      if (explicit_counts->size() != static_cast<std::size_t>(n_steps) + 1)
        throw Error(ErrorCode::invalid_argument, "explicit_counts must have n_steps + 1 entries");
      for (int c : *explicit_counts) {
        if (c < 0) throw Error(ErrorCode::invalid_argument, "explicit_counts entries must be non-negative");
      }
    }
  }

  /// Canonical text form; the fingerprint hashes exactly this string.
  std::string canonical() const {
    std::string s = "n_steps=" + std::to_string(n_steps) + " samples_per_ray=" + std::to_string(samples_per_ray) +
                    " latitude_rule=" + to_string(latitude_rule) + " include_poles=" + (include_poles ? "1" : "0") +
                    " explicit_counts=";
    if (!explicit_counts) return s + "none";
    for (std::size_t k = 0; k < explicit_counts->size(); ++k) {
      if (k) s += ',';
      s += std::to_string((*explicit_counts)[k]);
    }
    return s;
  }

  std::string fingerprint() const { return to_hex(fnv1a64(canonical())); }
};

/// Per-latitude counts of the 123-column compatibility layout at N = 10: the
/// floor-rule counts with one ray removed from the equator. This is an
/// approximation of the 32x123 image shape, not a derived schedule.
inline const std::vector<int>& compat123_counts() {
  static const std::vector<int> counts{0, 6, 11, 16, 19, 19, 19, 16, 11, 6, 0};
  return counts;
}

inline SpiralConfig compat123_config() {
  SpiralConfig cfg;
  cfg.n_steps = 10;
  cfg.samples_per_ray = 32;
  cfg.explicit_counts = compat123_counts();
  return cfg;
}

struct RayAngles {
  double azimuth = 0.0;    // polar angle from +z, [0, pi]
  double elevation = 0.0;  // around the z axis, [0, 2 pi)
};

struct SpiralSchedule {
  std::vector<Vec3> directions;
  std::vector<RayAngles> angles;
  std::vector<int> latitude;  // latitude index k of each ray

  std::size_t size() const { return directions.size(); }
};

inline Vec3 direction_from_angles(double azimuth, double elevation) {
  const double s = std::sin(azimuth);
  return {s * std::cos(elevation), s * std::sin(elevation), std::cos(azimuth)};
}

/// Number of rays on latitude k, before any explicit override.
inline int latitude_count(int k, int n_steps, LatitudeRule rule, bool include_poles) {
  if (k == 0 || k == n_steps) return include_poles ? 1 : 0;
  const double exact = 2.0 * n_steps * std::sin(k * std::numbers::pi / n_steps);
  // Values that are mathematically integral can land one ulp low or high.
  constexpr double eps = 1e-9;
  switch (rule) {
    case LatitudeRule::floor: return static_cast<int>(std::floor(exact + eps));
    case LatitudeRule::round: return static_cast<int>(std::round(exact));
    case LatitudeRule::ceil: return static_cast<int>(std::ceil(exact - eps));
  }
  return 0;
}

inline std::vector<int> latitude_counts(const SpiralConfig& cfg) {
  cfg.validate();
  if (cfg.explicit_counts) return *cfg.explicit_counts;
  std::vector<int> counts(static_cast<std::size_t>(cfg.n_steps) + 1);
  for (int k = 0; k <= cfg.n_steps; ++k)
    counts[static_cast<std::size_t>(k)] = latitude_count(k, cfg.n_steps, cfg.latitude_rule, cfg.include_poles);
  return counts;
}

inline SpiralSchedule build_schedule(const SpiralConfig& cfg) {
  const auto counts = latitude_counts(cfg);
  SpiralSchedule sched;
  for (int k = 0; k <= cfg.n_steps; ++k) {
    const int m = counts[static_cast<std::size_t>(k)];
    const double azimuth = std::min(std::numbers::pi, k * std::numbers::pi / cfg.n_steps);
    for (int j = 0; j < m; ++j) {
      const double elevation = 2.0 * std::numbers::pi * j / m;
      sched.directions.push_back(direction_from_angles(azimuth, elevation));
      sched.angles.push_back({azimuth, elevation});
      sched.latitude.push_back(k);
    }
  }
  if (sched.size() == 0) throw Error(ErrorCode::empty_schedule, "spiral schedule has no rays");
  return sched;
}

/// Continuum approximation of the total surface point count, 4 N^2 / pi.
inline double expected_surface_points(int n_steps) {
  if (n_steps < 1) throw Error(ErrorCode::invalid_argument, "n_steps must be >= 1");
  return 4.0 * n_steps * static_cast<double>(n_steps) / std::numbers::pi;
}

/// Continuous cube index of sample `s` (of `samples`) along direction `u` in a
/// cube with `side` voxels: center + (s / (samples-1)) * (side/2) * u.
inline Vec3 ray_sample_position(int side, Vec3 u, int s, int samples) {
  const double c = 0.5 * (side - 1);
  const double t = (static_cast<double>(s) / (samples - 1)) * (0.5 * side);
  return Vec3{c, c, c} + t * u;
}

/// Column c holds the samples along ray c; row-major rows x cols storage.
struct SpiralImage {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
  std::string config_fingerprint;

  float at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(col)];
  }
};

inline SpiralImage spiral_transform(const VoiCube& cube, const SpiralSchedule& schedule, int samples_per_ray,
                                    std::string fingerprint = {}) {
  if (cube.side < 2) throw Error(ErrorCode::invalid_argument, "cube side must be >= 2");
  if (samples_per_ray < 2) throw Error(ErrorCode::invalid_argument, "samples_per_ray must be >= 2");
  if (schedule.size() == 0) throw Error(ErrorCode::empty_schedule, "spiral schedule has no rays");

  SpiralImage img;
  img.rows = samples_per_ray;
  img.cols = static_cast<int>(schedule.size());
  img.config_fingerprint = std::move(fingerprint);
  img.data.resize(static_cast<std::size_t>(img.rows) * static_cast<std::size_t>(img.cols));

  for (int c = 0; c < img.cols; ++c) {
    const Vec3 u = schedule.directions[static_cast<std::size_t>(c)];
    for (int s = 0; s < img.rows; ++s) {
      const double v = sample_cube(cube, ray_sample_position(cube.side, u, s, samples_per_ray), 0.0);
      img.data[static_cast<std::size_t>(s) * static_cast<std::size_t>(img.cols) + static_cast<std::size_t>(c)] =
          static_cast<float>(v);
    }
  }
  return img;
}

inline SpiralImage spiral_transform(const VoiCube& cube, const SpiralConfig& cfg) {
  return spiral_transform(cube, build_schedule(cfg), cfg.samples_per_ray, cfg.fingerprint());
}

// Schedule text files: one header line carrying the config, then one line per
// ray, "k alpha beta ux uy uz", printed with round-trip precision.

inline constexpr std::string_view kScheduleMagic = "# spiralrep-schedule v1";

inline void export_schedule(const SpiralConfig& cfg, const SpiralSchedule& sched, std::ostream& out) {
  out << kScheduleMagic << ' ' << cfg.canonical() << '\n';
  char buf[256];
  for (std::size_t n = 0; n < sched.size(); ++n) {
    const auto& a = sched.angles[n];
    const auto& u = sched.directions[n];
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g %.17g\n", sched.latitude[n], a.azimuth, a.elevation,
                  u.x, u.y, u.z);
    out << buf;
  }
}

inline void export_schedule(const SpiralConfig& cfg, const SpiralSchedule& sched, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write schedule file " + path.string());
  export_schedule(cfg, sched, out);
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

struct LoadedSchedule {
  SpiralConfig config;
  SpiralSchedule schedule;
};

inline LoadedSchedule import_schedule(std::istream& in, const std::string& name = "<schedule>") {
  std::string line;
  int line_no = 1;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::parse, name + ":" + std::to_string(line_no) + ": " + msg);
  };
  if (!std::getline(in, line) || line.rfind(kScheduleMagic, 0) != 0) fail("missing schedule header");

  LoadedSchedule out;
  auto& cfg = out.config;
  for (auto tok : text::split_ws(text::trim(std::string_view(line).substr(kScheduleMagic.size())))) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) fail("malformed header field '" + std::string(tok) + "'");
    const auto key = tok.substr(0, eq);
    const auto value = tok.substr(eq + 1);
    if (key == "n_steps") {
      auto v = text::parse_int<int>(value);
      if (!v) fail("bad n_steps");
      cfg.n_steps = *v;
    } else if (key == "samples_per_ray") {
      auto v = text::parse_int<int>(value);
      if (!v) fail("bad samples_per_ray");
      cfg.samples_per_ray = *v;
    } else if (key == "latitude_rule") {
      cfg.latitude_rule = parse_latitude_rule(value);
    } else if (key == "include_poles") {
      cfg.include_poles = value == "1";
    } else if (key == "explicit_counts") {
      if (value != "none") {
        std::vector<int> counts;
        for (auto c : text::split(value, ',')) {
          auto v = text::parse_int<int>(c);
          if (!v) fail("bad explicit_counts entry");
          counts.push_back(*v);
        }
        cfg.explicit_counts = std::move(counts);
      }
    } else {
      fail("unknown header field '" + std::string(key) + "'");
    }
  }
  cfg.validate();

  auto& sched = out.schedule;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = text::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto toks = text::split_ws(view);
    if (toks.size() != 6) fail("expected 6 fields per ray");
    auto k = text::parse_int<int>(toks[0]);
    double v[5];
    for (int n = 0; n < 5; ++n) {
      auto d = text::parse_double(toks[static_cast<std::size_t>(n + 1)]);
      if (!d) fail("non-numeric ray field");
      v[n] = *d;
    }
    if (!k) fail("bad latitude index");
    const Vec3 u{v[2], v[3], v[4]};
    if (std::abs(norm(u) - 1.0) > 1e-9) fail("ray direction is not unit length");
    sched.latitude.push_back(*k);
    sched.angles.push_back({v[0], v[1]});
    sched.directions.push_back(u);
  }
  if (sched.size() == 0) throw Error(ErrorCode::empty_schedule, name + ": schedule has no rays");
  return out;
}

inline LoadedSchedule import_schedule(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open schedule file " + path.string());
  return import_schedule(in, path.string());
}

}  // namespace spiralrep
