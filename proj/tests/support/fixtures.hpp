#pragma once

// Shared helpers for the unit, CLI and acceptance suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "spiralrep/spiralrep.hpp"

namespace spiralrep::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "spiralrep") {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

inline Volume3D make_volume(Dims3 dims, Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0}, float fill = 0.0f) {
  Volume3D v;
  v.dims = dims;
  v.spacing = spacing;
  v.origin = origin;
  v.data.assign(dims.count(), fill);
  return v;
}

inline VoiCube random_cube(int side, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f,
                           ValueUnit unit = ValueUnit::normalized) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  VoiCube c = make_cube(side, 0.0f, unit);
  for (auto& v : c.data) v = dist(gen);
  return c;
}

/// Brute-force trilinear oracle: explicit weighted sum over the 8 corners.
inline double trilinear_oracle(const std::vector<float>& data, std::size_t nx, std::size_t ny, std::size_t nz, double x,
                               double y, double z) {
  const double p[3] = {x, y, z};
  const std::size_t n[3] = {nx, ny, nz};
  std::size_t lo[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    double f = std::floor(p[a]);
    if (f >= static_cast<double>(n[a] - 1)) f = static_cast<double>(n[a]) - 2.0;
    if (f < 0) f = 0;
    lo[a] = static_cast<std::size_t>(f);
    frac[a] = p[a] - f;
  }
  double sum = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] = lo[a] + static_cast<std::size_t>(bit);
      w *= bit ? frac[a] : 1.0 - frac[a];
    }
    if (w == 0.0) continue;
    sum += w * data[idx[0] + nx * (idx[1] + ny * idx[2])];
  }
  return sum;
}

/// Two-scan fixture: volumes `<dir>/scanA.mhd`, `<dir>/scanB.mhd` (48^3 at
/// 1.5 mm, smooth blobs on a lung-like background) and a labeled candidate
/// CSV with `positives_a + positives_b` nodules and `negatives_per_scan`
/// non-nodules per scan.
struct DatasetFixture {
  std::filesystem::path volumes;
  std::filesystem::path candidates;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline Volume3D textured_volume(std::uint64_t seed, Dims3 dims = {48, 48, 48}, Vec3 spacing = {1.5, 1.5, 1.5}) {
  Volume3D v = make_volume(dims, spacing, {-36.0, -36.0, -36.0});
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> pos(0.0, 48.0), rad(2.0, 6.0);
  std::vector<std::array<double, 4>> blobs(8);
  for (auto& b : blobs) b = {pos(gen), pos(gen), pos(gen), rad(gen)};
  for (std::size_t k = 0; k < dims.z; ++k)
    for (std::size_t j = 0; j < dims.y; ++j)
      for (std::size_t i = 0; i < dims.x; ++i) {
        double hu = -850.0 + 40.0 * std::sin(0.3 * i) * std::cos(0.2 * j);
        for (const auto& b : blobs) {
          const double d2 = (i - b[0]) * (i - b[0]) + (j - b[1]) * (j - b[1]) + (k - b[2]) * (k - b[2]);
          hu += 900.0 * std::exp(-d2 / (2 * b[3] * b[3]));
        }
        v.at(i, j, k) = static_cast<float>(std::round(hu));
      }
  return v;
}

inline DatasetFixture write_dataset_fixture(const std::filesystem::path& dir, std::size_t positives_a = 2,
                                            std::size_t positives_b = 1, std::size_t negatives_per_scan = 150) {
  DatasetFixture fx;
  fx.volumes = dir / "volumes";
  std::filesystem::create_directories(fx.volumes);
  write_metaimage(textured_volume(1), fx.volumes / "scanA.mhd", ElementType::met_short);
  write_metaimage(textured_volume(2), fx.volumes / "scanB.mhd", ElementType::met_short);

  fx.candidates = dir / "candidates.csv";
  std::ofstream csv(fx.candidates);
  csv << "seriesuid,coordX,coordY,coordZ,class\n";
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> coord(-30.0, 30.0);
  auto emit = [&](const char* scan, std::size_t n, int label) {
    for (std::size_t i = 0; i < n; ++i) csv << scan << ',' << coord(gen) << ',' << coord(gen) << ',' << coord(gen) << ',' << label << '\n';
  };
  emit("scanA", positives_a, 1);
  emit("scanA", negatives_per_scan, 0);
  emit("scanB", negatives_per_scan, 0);
  emit("scanB", positives_b, 1);
  fx.positives = positives_a + positives_b;
  fx.negatives = 2 * negatives_per_scan;
  return fx;
}

/// Every regular file under `root`, keyed by its generic relative path.
inline std::map<std::string, std::vector<char>> snapshot_tree(const std::filesystem::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[std::filesystem::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

}  // namespace spiralrep::testing
