#pragma once

// Dataset construction: candidates are split into folds by scan, each selected
// candidate is resampled, normalized and turned into the chosen
// representation, and positives in training folds are augmented until they
// match the fold's negative count.
//
// Output tree:
//   out/fold{F}/{pos|neg}/c{index:07}.s2dt          original candidate
//   out/fold{F}/pos/c{index:07}_a{copy:04}.s2dt     augmented copy
//   out/provenance.jsonl                             one line per emitted sample
//   out/manifest.json, out/report.json

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spiralrep/augment.hpp"
#include "spiralrep/error.hpp"
#include "spiralrep/hash.hpp"
#include "spiralrep/parallel.hpp"
#include "spiralrep/random.hpp"
#include "spiralrep/resample.hpp"
#include "spiralrep/spiral.hpp"
#include "spiralrep/tensor_io.hpp"
#include "spiralrep/views.hpp"
#include "spiralrep/volume_io.hpp"

namespace spiralrep {

enum class DatasetMode { spiral, center_slice, nine_view, cube };

inline const char* to_string(DatasetMode mode) {
  switch (mode) {
    case DatasetMode::spiral: return "spiral";
    case DatasetMode::center_slice: return "center_slice";
    case DatasetMode::nine_view: return "nine_view";
    case DatasetMode::cube: return "cube";
  }
  return "spiral";
}

/// Accepts the manifest names plus the CLI spellings `slice` and `nineview`.
inline DatasetMode parse_dataset_mode(std::string_view s) {
  if (s == "spiral") return DatasetMode::spiral;
  if (s == "center_slice" || s == "slice") return DatasetMode::center_slice;
  if (s == "nine_view" || s == "nineview") return DatasetMode::nine_view;
  if (s == "cube") return DatasetMode::cube;
  throw Error(ErrorCode::invalid_argument, "unknown mode '" + std::string(s) + "'");
}

/// Parameters of the VOI -> representation step shared by every sample.
struct RepresentationParams {
  DatasetMode mode = DatasetMode::spiral;
  double voi_mm = kDefaultVoiMm;
  int side = kDefaultSide;
  SpiralConfig spiral = compat123_config();
  std::optional<SpiralSchedule> schedule;  // overrides build_schedule(spiral), e.g. imported from file

  SpiralSchedule resolved_schedule() const { return schedule ? *schedule : build_schedule(spiral); }
};

/// Turns a normalized cube into the tensor for `mode`.
inline Tensor represent(const VoiCube& cube, DatasetMode mode, const SpiralSchedule& schedule, int samples_per_ray) {
  Tensor t;
  auto from_2d = [&](Representation2D rep) {
    t.dims = {static_cast<std::uint32_t>(rep.rows), static_cast<std::uint32_t>(rep.cols)};
    t.data = std::move(rep.data);
  };
  switch (mode) {
    case DatasetMode::spiral: from_2d(to_representation(spiral_transform(cube, schedule, samples_per_ray))); break;
    case DatasetMode::center_slice: from_2d(center_slice(cube)); break;
    case DatasetMode::nine_view: from_2d(nine_views(cube)); break;
    case DatasetMode::cube: {
      const auto s = static_cast<std::uint32_t>(cube.side);
      t.dims = {s, s, s};
      t.data = cube_passthrough(cube).data;
      break;
    }
  }
  return t;
}

struct ManifestCandidate {
  std::size_t index = 0;  // row in the source candidate list
  std::string scan_id;
  Vec3 world_pos;
  int label = 0;
  int fold = 0;
  bool selected = true;
};

struct FoldCounts {
  int fold = 0;
  bool test = false;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t augmented = 0;  // planned augmented positives

  std::size_t positive_total() const { return positives + augmented; }
  bool balanced() const {
    if (test) return true;
    const double diff = std::abs(static_cast<double>(positive_total()) - static_cast<double>(negatives));
    return diff <= 0.01 * static_cast<double>(negatives);
  }
};

struct DatasetManifest {
  RepresentationParams params;
  int n_folds = 10;
  std::uint64_t global_seed = 0;
  std::vector<int> test_folds;
  int subsample_factor = 1;
  std::map<std::string, int> fold_of;
  std::vector<ManifestCandidate> candidates;

  bool is_test_fold(int f) const { return std::find(test_folds.begin(), test_folds.end(), f) != test_folds.end(); }

  void validate() const {
    if (n_folds < 1) throw Error(ErrorCode::invalid_argument, "n_folds must be >= 1");
    for (int f : test_folds)
      if (f < 0 || f >= n_folds) throw Error(ErrorCode::invalid_argument, "test fold out of range");
    for (const auto& [scan, f] : fold_of)
      if (f < 0 || f >= n_folds) throw Error(ErrorCode::invalid_argument, "fold index out of range for " + scan);
    for (const auto& c : candidates) {
      auto it = fold_of.find(c.scan_id);
      if (it == fold_of.end() || it->second != c.fold)
        throw Error(ErrorCode::consistency, "candidate " + std::to_string(c.index) + " fold disagrees with its scan");
    }
  }

  /// Per-fold counts over selected candidates, including the augmentation plan.
  std::vector<FoldCounts> fold_counts() const {
    std::vector<FoldCounts> counts(static_cast<std::size_t>(n_folds));
    for (int f = 0; f < n_folds; ++f) {
      counts[static_cast<std::size_t>(f)].fold = f;
      counts[static_cast<std::size_t>(f)].test = is_test_fold(f);
    }
    for (const auto& c : candidates) {
      if (!c.selected) continue;
      auto& fc = counts[static_cast<std::size_t>(c.fold)];
      (c.label ? fc.positives : fc.negatives)++;
    }
    for (auto& fc : counts) {
      if (!fc.test && fc.positives > 0 && fc.negatives > fc.positives) fc.augmented = fc.negatives - fc.positives;
    }
    return counts;
  }

  /// Augmented copies planned for each selected positive, keyed by candidate
  /// index. A fold's deficit is spread evenly over its positives in index order.
  std::map<std::size_t, std::size_t> augmentation_plan() const {
    std::map<std::size_t, std::size_t> plan;
    const auto counts = fold_counts();
    std::vector<std::size_t> rank(static_cast<std::size_t>(n_folds), 0);
    for (const auto& c : candidates) {
      if (!c.selected || !c.label) continue;
      const auto& fc = counts[static_cast<std::size_t>(c.fold)];
      if (fc.augmented == 0) continue;
      const std::size_t r = rank[static_cast<std::size_t>(c.fold)]++;
      const std::size_t n = fc.augmented / fc.positives + (r < fc.augmented % fc.positives ? 1 : 0);
      if (n) plan[c.index] = n;
    }
    return plan;
  }
};

/// Scans are sorted, shuffled with the global seed and dealt round-robin into
/// folds unless an explicit scan -> fold map is given.
inline DatasetManifest make_manifest(std::span<const CandidateRecord> records, RepresentationParams params, int n_folds,
                                     std::uint64_t global_seed, std::vector<int> test_folds = {},
                                     std::optional<std::map<std::string, int>> fold_map = std::nullopt) {
  if (records.empty()) throw Error(ErrorCode::invalid_argument, "no candidates");
  DatasetManifest m;
  m.params = std::move(params);
  m.n_folds = n_folds;
  m.global_seed = global_seed;
  m.test_folds = std::move(test_folds);

  if (fold_map) {
    m.fold_of = *fold_map;
  } else {
    std::set<std::string> unique;
    for (const auto& r : records) unique.insert(r.scan_id);
    std::vector<std::string> scans(unique.begin(), unique.end());
    Rng rng(hash_combine(global_seed, fnv1a64("fold-assignment")));
    for (std::size_t i = scans.size(); i > 1; --i) std::swap(scans[i - 1], scans[rng.below(i)]);
    for (std::size_t i = 0; i < scans.size(); ++i) m.fold_of[scans[i]] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
  }

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.label) throw Error(ErrorCode::invalid_argument, "candidate " + std::to_string(i) + " has no class label");
    auto it = m.fold_of.find(r.scan_id);
    if (it == m.fold_of.end()) throw Error(ErrorCode::invalid_argument, "scan " + r.scan_id + " has no fold");
    m.candidates.push_back({i, r.scan_id, r.world_pos, *r.label, it->second, true});
  }
  m.validate();
  return m;
}

/// Keeps floor(n / factor) of each class in every training fold, chosen with a
/// seeded shuffle; test folds are left intact.
inline DatasetManifest subsample(DatasetManifest m, int factor) {
  if (factor < 1) throw Error(ErrorCode::invalid_argument, "subsample factor must be >= 1");
  if (factor == 1) return m;

  for (int f = 0; f < m.n_folds; ++f) {
    if (m.is_test_fold(f)) continue;
    for (int label = 0; label <= 1; ++label) {
      std::vector<std::size_t> members;
      for (std::size_t n = 0; n < m.candidates.size(); ++n) {
        const auto& c = m.candidates[n];
        if (c.selected && c.fold == f && c.label == label) members.push_back(n);
      }
      if (members.empty()) continue;
      const std::size_t keep = members.size() / static_cast<std::size_t>(factor);
      if (keep == 0)
        throw Error(ErrorCode::invalid_argument, "subsample factor " + std::to_string(factor) + " empties class " +
                                                     std::to_string(label) + " in fold " + std::to_string(f));
      Rng rng(hash_combine(hash_combine(m.global_seed, static_cast<std::uint64_t>(f * 2 + label)),
                           static_cast<std::uint64_t>(factor) * static_cast<std::uint64_t>(m.subsample_factor)));
      for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
      for (std::size_t i = keep; i < members.size(); ++i) m.candidates[members[i]].selected = false;
    }
  }
  m.subsample_factor *= factor;
  return m;
}

inline nlohmann::json fold_counts_json(const std::vector<FoldCounts>& counts) {
  auto arr = nlohmann::json::array();
  for (const auto& fc : counts) {
    arr.push_back({{"fold", fc.fold},
                   {"test", fc.test},
                   {"positives", fc.positives},
                   {"augmented", fc.augmented},
                   {"negatives", fc.negatives},
                   {"balanced", fc.balanced()}});
  }
  return arr;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["mode"] = to_string(m.params.mode);
  j["voi_mm"] = m.params.voi_mm;
  j["side"] = m.params.side;
  j["n_folds"] = m.n_folds;
  j["global_seed"] = m.global_seed;
  j["test_folds"] = m.test_folds;
  j["subsample_factor"] = m.subsample_factor;
  j["fold_of"] = m.fold_of;
  j["fold_counts"] = fold_counts_json(m.fold_counts());
  if (m.params.mode == DatasetMode::spiral) {
    j["spiral_config"] = m.params.spiral.canonical();
    const auto sched = m.params.resolved_schedule();
    std::ostringstream os;
    export_schedule(m.params.spiral, sched, os);
    j["fingerprints"] = {{"spiral_config", m.params.spiral.fingerprint()}, {"schedule", to_hex(fnv1a64(os.str()))}};
  }
  return j;
}

struct SampleFailure {
  std::size_t index = 0;
  std::string scan_id;
  std::string message;
};

struct BuildReport {
  std::vector<FoldCounts> folds;  // emitted counts
  std::vector<SampleFailure> failures;
  std::size_t samples_written = 0;

  bool balanced() const {
    return std::all_of(folds.begin(), folds.end(), [](const auto& f) { return f.balanced(); });
  }
};

inline nlohmann::json to_json(const BuildReport& r) {
  nlohmann::json j;
  j["folds"] = fold_counts_json(r.folds);
  j["samples_written"] = r.samples_written;
  j["balanced"] = r.balanced();
  auto failures = nlohmann::json::array();
  for (const auto& f : r.failures) failures.push_back({{"index", f.index}, {"scan_id", f.scan_id}, {"error", f.message}});
  j["failures"] = failures;
  return j;
}

struct BuildOptions {
  unsigned jobs = 1;
  bool emit_pgm = false;
  bool overwrite = false;
};

/// Seed of augmented copy sampling for one candidate.
inline std::uint64_t candidate_seed(std::uint64_t global_seed, std::size_t index) {
  return hash_combine(global_seed, static_cast<std::uint64_t>(index));
}

inline std::string sample_name(std::size_t index, std::optional<std::size_t> copy = std::nullopt) {
  char buf[64];
  if (copy)
    std::snprintf(buf, sizeof buf, "c%07zu_a%04zu", index, *copy);
  else
    std::snprintf(buf, sizeof buf, "c%07zu", index);
  return buf;
}

namespace detail {

struct EmittedSample {
  std::string relative_path;
  std::optional<AugmentSpec> augment;
};

inline std::size_t count_files(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".s2dt") ++n;
  return n;
}

}  // namespace detail

/// Builds the dataset tree under `out`. Volumes are looked up as
/// `<volumes>/<scan_id>.mhd`. Candidates whose scan cannot be loaded, or whose
/// processing fails, are listed in the report and left out of the counts.
inline BuildReport build_dataset(const std::filesystem::path& volumes, DatasetManifest manifest,
                                 const std::filesystem::path& out, const BuildOptions& options = {}) {
  namespace fs = std::filesystem;
  if (manifest.candidates.empty()) throw Error(ErrorCode::invalid_argument, "no candidates");
  manifest.validate();

  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!options.overwrite) throw Error(ErrorCode::io, "output directory " + out.string() + " is not empty");
    fs::remove_all(out);
  }
  fs::create_directories(out);

  BuildReport report;
  const auto& params = manifest.params;
  const SpiralSchedule schedule =
      params.mode == DatasetMode::spiral ? params.resolved_schedule() : SpiralSchedule{};

  // Unresolvable scans drop out before the balance plan is made.
  std::map<std::string, fs::path> scan_paths;
  for (auto& c : manifest.candidates) {
    if (!c.selected) continue;
    auto path = volumes / (c.scan_id + ".mhd");
    if (!fs::exists(path)) {
      report.failures.push_back({c.index, c.scan_id, "unresolved scan: no volume at " + path.string()});
      c.selected = false;
      continue;
    }
    scan_paths[c.scan_id] = path;
  }

  const auto plan = manifest.augmentation_plan();
  for (int f = 0; f < manifest.n_folds; ++f) {
    for (const char* cls : {"pos", "neg"}) fs::create_directories(out / ("fold" + std::to_string(f)) / cls);
  }

  std::map<std::string, std::vector<std::size_t>> by_scan;  // scan -> positions in manifest.candidates
  for (std::size_t n = 0; n < manifest.candidates.size(); ++n) {
    const auto& c = manifest.candidates[n];
    if (c.selected) by_scan[c.scan_id].push_back(n);
  }

  std::vector<std::vector<detail::EmittedSample>> emitted(manifest.candidates.size());
  std::vector<std::optional<std::string>> errors(manifest.candidates.size());

  auto write_sample = [&](const VoiCube& cube, const fs::path& rel) {
    const Tensor t = represent(cube, params.mode, schedule, params.spiral.samples_per_ray);
    write_s2dt(out / rel, t.dims, t.data);
    if (options.emit_pgm && t.dims.size() == 2) {
      Representation2D rep{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), t.data, ViewKind::spiral, {}};
      auto pgm = rel;
      write_pgm(out / pgm.replace_extension(".pgm"), rep);
    }
  };

  for (const auto& [scan, members] : by_scan) {
    std::shared_ptr<const Volume3D> volume;
    try {
      volume = std::make_shared<const Volume3D>(load_metaimage(scan_paths.at(scan)));
    } catch (const std::exception& e) {
      for (auto n : members) errors[n] = e.what();
      continue;
    }

    // Phase 1: one task per candidate; positives keep their cube for phase 2.
    std::vector<std::optional<VoiCube>> cubes(members.size());
    parallel_for(members.size(), options.jobs, [&](std::size_t m) {
      const auto n = members[m];
      const auto& c = manifest.candidates[n];
      try {
        VoiCube cube = rescale_intensity(extract_voi(*volume, c.world_pos, params.voi_mm, params.side));
        const fs::path rel = fs::path("fold" + std::to_string(c.fold)) / (c.label ? "pos" : "neg") /
                             (sample_name(c.index) + ".s2dt");
        write_sample(cube, rel);
        emitted[n].push_back({rel.generic_string(), std::nullopt});
        if (plan.count(c.index)) cubes[m] = std::move(cube);
      } catch (const std::exception& e) {
        errors[n] = e.what();
      }
    });

    // Phase 2: one task per augmented copy. Specs are drawn sequentially per
    // candidate from candidate_seed so results do not depend on scheduling.
    struct CopyTask {
      std::size_t member;
      std::size_t copy;
      AugmentSpec spec;
    };
    std::vector<CopyTask> tasks;
    for (std::size_t m = 0; m < members.size(); ++m) {
      if (!cubes[m]) continue;
      const auto& c = manifest.candidates[members[m]];
      Rng rng(candidate_seed(manifest.global_seed, c.index));
      const auto copies = plan.at(c.index);
      for (std::size_t j = 0; j < copies; ++j) tasks.push_back({m, j, sample_augment_spec(rng)});
    }
    std::vector<std::optional<std::string>> task_errors(tasks.size());
    std::vector<std::string> task_paths(tasks.size());
    parallel_for(tasks.size(), options.jobs, [&](std::size_t t) {
      const auto& task = tasks[t];
      const auto& c = manifest.candidates[members[task.member]];
      try {
        const VoiCube aug = apply_augment(*cubes[task.member], task.spec);
        const fs::path rel =
            fs::path("fold" + std::to_string(c.fold)) / "pos" / (sample_name(c.index, task.copy) + ".s2dt");
        write_sample(aug, rel);
        task_paths[t] = rel.generic_string();
      } catch (const std::exception& e) {
        task_errors[t] = e.what();
      }
    });
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto n = members[tasks[t].member];
      if (task_errors[t])
        errors[n] = *task_errors[t];
      else
        emitted[n].push_back({task_paths[t], tasks[t].spec});
    }
  }

  // Report: counts over what was actually emitted.
  report.folds = manifest.fold_counts();
  for (auto& fc : report.folds) fc.positives = fc.negatives = fc.augmented = 0;

  std::ofstream log(out / "provenance.jsonl");
  if (!log) throw Error(ErrorCode::io, "cannot write provenance log");
  for (std::size_t n = 0; n < manifest.candidates.size(); ++n) {
    const auto& c = manifest.candidates[n];
    if (errors[n]) {
      report.failures.push_back({c.index, c.scan_id, *errors[n]});
      for (const auto& s : emitted[n]) {
        fs::remove(out / s.relative_path);
        fs::remove(fs::path(out / s.relative_path).replace_extension(".pgm"));
      }
      continue;
    }
    for (const auto& s : emitted[n]) {
      auto& fc = report.folds[static_cast<std::size_t>(c.fold)];
      if (s.augment)
        ++fc.augmented;
      else
        (c.label ? fc.positives : fc.negatives)++;
      nlohmann::json line{{"sample", s.relative_path},
                          {"candidate", c.index},
                          {"scan_id", c.scan_id},
                          {"label", c.label},
                          {"fold", c.fold},
                          {"world", {c.world_pos.x, c.world_pos.y, c.world_pos.z}},
                          {"augment", s.augment ? to_json(*s.augment) : nlohmann::json(nullptr)}};
      log << line.dump() << '\n';
      ++report.samples_written;
    }
  }
  std::sort(report.failures.begin(), report.failures.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });

  // Cross-check the tree against the emitted bookkeeping.
  for (const auto& fc : report.folds) {
    const auto fold_dir = out / ("fold" + std::to_string(fc.fold));
    const auto pos_files = detail::count_files(fold_dir / "pos");
    const auto neg_files = detail::count_files(fold_dir / "neg");
    if (pos_files != fc.positive_total() || neg_files != fc.negatives)
      throw Error(ErrorCode::consistency, "fold " + std::to_string(fc.fold) + ": file count mismatch after build");
    if (fc.test && fc.augmented != 0)
      throw Error(ErrorCode::consistency, "fold " + std::to_string(fc.fold) + ": test fold received augmentation");
  }

  std::ofstream(out / "manifest.json") << to_json(manifest).dump(2) << '\n';
  std::ofstream(out / "report.json") << to_json(report).dump(2) << '\n';
  return report;
}

}  // namespace spiralrep
