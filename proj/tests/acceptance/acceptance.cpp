// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>

#include "support/eval_oracle.hpp"
#include "support/fixtures.hpp"

using namespace spiralrep;
using namespace spiralrep::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome count_asymptotics() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  for (int n : {50, 100, 200}) {
    SpiralConfig cfg;
    cfg.n_steps = n;
    const double count = static_cast<double>(build_schedule(cfg).size());
    const double expected = expected_surface_points(n);
    const double rel = std::abs(count - expected) / expected;
    ok = ok && rel < 0.02;
    detail += "N=" + std::to_string(n) + " count=" + std::to_string(static_cast<long>(count)) + fmt(" rel=%.5f; ", rel);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 1.0, detail + fmt("runtime=%.3fs", secs)};
}

Outcome ball_transition() {
  const auto t0 = Clock::now();
  const int side = 64, samples = 32;
  auto cube = make_cube(side, 0.0f, ValueUnit::normalized);
  const double c = cube.center_index(), radius = side / 4.0;  // half the cube radius
  for (int k = 0; k < side; ++k)
    for (int j = 0; j < side; ++j)
      for (int i = 0; i < side; ++i) {
        const double dx = i - c, dy = j - c, dz = k - c;
        if (dx * dx + dy * dy + dz * dz < radius * radius) cube.at(i, j, k) = 1.0f;
      }
  double worst = 0.0;
  std::size_t columns = 0;
  for (const auto& cfg : {compat123_config(), SpiralConfig{}}) {
    const auto img = spiral_transform(cube, build_schedule(cfg), samples);
    for (int col = 0; col < img.cols; ++col, ++columns) {
      int first_out = img.rows;
      for (int row = 0; row < img.rows; ++row)
        if (img.at(row, col) < 0.5f) {
          first_out = row;
          break;
        }
      for (int row = first_out; row < img.rows; ++row)
        if (img.at(row, col) >= 0.5f) worst = 1e9;  // re-entry
      worst = std::max(worst, std::abs((first_out - 0.5) - 0.5 * (samples - 1)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1.0 && secs < 5.0, std::to_string(columns) + " columns" + fmt(" max_offset=%.2f rows", worst) +
                                          fmt(" runtime=%.3fs", secs)};
}

Outcome interpolation_oracle() {
  auto vol = make_volume({17, 13, 11}, {0.7, 1.1, 2.0}, {-3, 4, -5});
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<float> value(-1000, 400);
  for (auto& v : vol.data) v = value(gen);
  std::uniform_real_distribution<double> ux(0, 16), uy(0, 12), uz(0, 10);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double fx = ux(gen), fy = uy(gen), fz = uz(gen);
    const Vec3 world{vol.origin.x + fx * vol.spacing.x, vol.origin.y + fy * vol.spacing.y,
                     vol.origin.z + fz * vol.spacing.z};
    const auto got = trilinear_sample(vol, world);
    if (!got) return {false, "point inside the volume reported as outside"};
    // Compare at the index the world point maps back to.
    const double ix = (world.x - vol.origin.x) / vol.spacing.x, iy = (world.y - vol.origin.y) / vol.spacing.y,
                 iz = (world.z - vol.origin.z) / vol.spacing.z;
    const double want = trilinear_oracle(vol.data, 17, 13, 11, ix, iy, iz);
    worst = std::max(worst, std::abs(*got - want));
  }
  return {worst < 1e-6, fmt("1000 points, max_abs_error=%.3g HU", worst)};
}

Outcome image_shapes() {
  auto cube = random_cube(64, 9);
  cube.value_unit = ValueUnit::normalized;
  const auto compat = spiral_transform(cube, compat123_config());
  const auto floor_rule = spiral_transform(cube, SpiralConfig{});
  const bool ok = compat.rows == 32 && compat.cols == 123 && floor_rule.rows == 32 && floor_rule.cols == 124;
  return {ok, "compat=" + std::to_string(compat.rows) + "x" + std::to_string(compat.cols) +
                  " floor=" + std::to_string(floor_rule.rows) + "x" + std::to_string(floor_rule.cols)};
}

Outcome intensity_mapping() {
  const std::pair<double, double> cases[] = {{-1000, 0.0}, {400, 1.0}, {-300, 0.5}, {2000, 1.0}, {-3000, 0.0}};
  bool ok = true;
  for (const auto& [hu, want] : cases) ok = ok && normalize_hu(hu) == want;
  auto cube = make_cube(2, 0.0f);
  const float hu[8] = {-1000, 400, -300, 2000, -3000, -1000, 400, -300};
  std::copy(hu, hu + 8, cube.data.begin());
  const auto out = rescale_intensity(cube);
  const float want[8] = {0, 1, 0.5f, 1, 0, 0, 1, 0.5f};
  for (int i = 0; i < 8; ++i) ok = ok && out.data[static_cast<std::size_t>(i)] == want[i];
  return {ok, "-1000->0, 400->1, -300->0.5, clipping both sides"};
}

Outcome froc_cpm_oracle() {
  std::size_t instances = 0, mismatches = 0;
  auto check = [&](const PredictionSet& preds, const std::vector<ReferenceNodule>& ref,
                   const std::vector<ReferenceNodule>& excl) {
    ++instances;
    const auto curve = compute_froc(match_candidates(preds, ref, excl), preds.scan_count);
    const auto want = oracle_froc(preds, oracle_match(preds, ref, excl), ref.size());
    bool same = curve.points.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i)
      same = curve.points[i].threshold == want[i].threshold && curve.points[i].fps_per_scan == want[i].fps_per_scan &&
             curve.points[i].sensitivity == want[i].sensitivity;
    same = same && compute_cpm(curve) == oracle_cpm(want);
    if (!same) ++mismatches;
    return compute_cpm(curve);
  };

  PredictionSet hand;
  hand.scan_count = 2;
  hand.entries = {{"s1", {1, 0, 0}, 0.9},   {"s1", {50, 50, 50}, 0.8}, {"s2", {0, 1, 0}, 0.7},
                  {"s1", {0, 1, 1}, 0.6},   {"s2", {30, 0, 0}, 0.5},   {"s1", {40, 0, 0}, 0.4},
                  {"s1", {20, 0, 2.9}, 0.3}, {"s2", {10, 10, 10}, 0.2}};
  const std::vector<ReferenceNodule> hand_ref{{"s1", {0, 0, 0}, 5}, {"s1", {20, 0, 0}, 3}, {"s2", {0, 0, 0}, 4}};
  const double hand_cpm = check(hand, hand_ref, {});
  const bool hand_ok = std::abs(hand_cpm - 5.0 / 7.0) < 1e-15;

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_eval_instance(1000 + seed);
    check(inst.predictions, inst.reference, inst.excluded);
  }

  double auc_err = 0.0;
  std::mt19937_64 gen(77);
  std::uniform_int_distribution<int> grid(0, 30);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(200);
    std::vector<int> l(200);
    for (std::size_t i = 0; i < 200; ++i) {
      l[i] = static_cast<int>(gen() % 2);
      s[i] = (grid(gen) + 4 * l[i]) / 34.0;
    }
    if (std::count(l.begin(), l.end(), 1) == 0 || std::count(l.begin(), l.end(), 0) == 0) continue;
    auc_err = std::max(auc_err, std::abs(compute_auc(s, l) - oracle_auc(s, l)));
  }
  return {hand_ok && mismatches == 0 && auc_err <= 1e-12,
          std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches" +
              fmt(", hand cpm=%.6f", hand_cpm) + fmt(", max auc error=%.2g", auc_err)};
}

Outcome augmentation_invariants() {
  const auto cube = random_cube(24, 5);
  bool identity = apply_augment(cube, AugmentSpec{}).data == cube.data;

  bool double_flip = true;
  for (int axis = 0; axis < 3; ++axis) {
    AugmentSpec flip;
    flip.flip_axis = axis;
    double_flip = double_flip && apply_augment(apply_augment(cube, flip), flip).data == cube.data;
  }

  AugmentSpec quarter;
  quarter.rotation = RotationStep{{2}, {90.0}};
  const auto rot = apply_augment(cube, quarter);
  bool permutation = true;
  const int n = cube.side;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) permutation = permutation && rot.at(i, j, k) == cube.at(j, n - 1 - i, k);

  Rng rng(123);
  bool ranges = true;
  for (int t = 0; t < 10000; ++t) {
    const auto spec = sample_augment_spec(rng);
    if (spec.zoom) ranges = ranges && spec.zoom->factor > 1.0 && spec.zoom->factor <= 1.25;
    if (spec.shift) ranges = ranges && spec.shift->fraction >= -0.25 && spec.shift->fraction <= 0.25;
    try {
      spec.validate();
    } catch (const Error&) {
      ranges = false;
    }
  }
  std::string detail = std::string("identity=") + (identity ? "ok" : "bad") + " double_flip=" + (double_flip ? "ok" : "bad") +
                       " quarter_turn=" + (permutation ? "ok" : "bad") + " 10000 sampled specs " +
                       (ranges ? "in range" : "OUT OF RANGE");
  return {identity && double_flip && permutation && ranges, detail};
}

Outcome dataset_determinism(const DatasetFixture& fx, const TempDir& dir) {
  const auto records = load_candidates(fx.candidates, true);
  RepresentationParams params;
  const auto m = make_manifest(records, params, 2, 2024);
  build_dataset(fx.volumes, m, dir / "a", {1, false, false});
  const auto report = build_dataset(fx.volumes, m, dir / "b", {2, false, false});
  const bool identical = snapshot_tree(dir / "a") == snapshot_tree(dir / "b");

  double worst_imbalance = 0.0;
  for (const auto& fc : report.folds)
    worst_imbalance = std::max(worst_imbalance, std::abs(static_cast<double>(fc.positive_total()) -
                                                         static_cast<double>(fc.negatives)) /
                                                    static_cast<double>(fc.negatives));

  const auto t = make_manifest(records, params, 2, 2024, {0});
  const auto test_report = build_dataset(fx.volumes, t, dir / "t");
  std::size_t test_aug = test_report.folds[0].augmented;
  for (const auto& e : std::filesystem::directory_iterator(dir / "t" / "fold0" / "pos"))
    if (e.path().filename().string().find("_a") != std::string::npos) ++test_aug;
  const bool train_balanced = test_report.folds[1].balanced();

  return {identical && worst_imbalance <= 0.01 && test_aug == 0 && train_balanced,
          std::string("trees ") + (identical ? "byte-identical" : "DIFFER") + fmt(", max imbalance=%.4f", worst_imbalance) +
              ", test-fold augmented=" + std::to_string(test_aug)};
}

Outcome performance(const DatasetFixture& fx, const TempDir& dir) {
  auto cube = random_cube(64, 11);
  cube.value_unit = ValueUnit::normalized;
  const auto cfg = compat123_config();
  std::vector<double> times;
  for (int rep = 0; rep < 30; ++rep) {
    const auto t0 = Clock::now();
    const auto img = spiral_transform(cube, cfg);
    times.push_back(seconds_since(t0));
    if (img.data.empty()) return {false, "empty image"};
  }
  std::sort(times.begin(), times.end());
  const double median_ms = 1000.0 * times[times.size() / 2];

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned jobs = std::max(2u, std::min(4u, hw));
  const auto m = make_manifest(load_candidates(fx.candidates, true), RepresentationParams{}, 2, 7);
  auto time_build = [&](unsigned j, const char* name) {
    const auto t0 = Clock::now();
    build_dataset(fx.volumes, m, dir / name, {j, false, false});
    return seconds_since(t0);
  };
  const double serial = time_build(1, "p1");
  const double parallel = time_build(jobs, "pn");
  const double speedup = serial / parallel;
  const bool scaling = speedup >= 0.7 * jobs;

  return {median_ms < 10.0 && scaling, fmt("spiral 64^3 median=%.3fms", median_ms) + fmt(", build 1 job=%.2fs", serial) +
                                          ", " + std::to_string(jobs) + fmt(" jobs=%.2fs", parallel) +
                                          fmt(" speedup=%.2f", speedup) + " (" + std::to_string(hw) +
                                          " hardware threads)"};
}

}  // namespace

int main() {
  TempDir dir("spiralrep-acceptance");
  const auto fx = write_dataset_fixture(dir.path());

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"surface point asymptotics", count_asymptotics},
      {"spiral geometry ball oracle", ball_transition},
      {"interpolation oracle", interpolation_oracle},
      {"spiral image shapes", image_shapes},
      {"intensity mapping", intensity_mapping},
      {"FROC/CPM/AUC oracle", froc_cpm_oracle},
      {"augmentation invariants", augmentation_invariants},
      {"dataset determinism and balance", [&] { return dataset_determinism(fx, dir); }},
      {"performance", [&] { return performance(fx, dir); }},
  };

  int failures = 0;
  int index = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", ++index, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", index - failures, index);
  return failures == 0 ? 0 : 1;
}
