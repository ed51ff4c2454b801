// spiralrep command line: transform, build, schedule, eval.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spiralrep/spiralrep.hpp"

namespace fs = std::filesystem;
using namespace spiralrep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

void log_line(const char* level, const std::string& msg) { std::cerr << "level=" << level << " msg=\"" << msg << "\"\n"; }

struct SpiralFlags {
  int n = 10;
  int samples = 32;
  std::string rule = "floor";
  bool poles = false;
  std::string schedule_file;
  CLI::Option* n_opt = nullptr;
  CLI::Option* samples_opt = nullptr;
  CLI::Option* rule_opt = nullptr;
  CLI::Option* poles_opt = nullptr;
  CLI::Option* schedule_opt = nullptr;

  void add_to(CLI::App* app) {
    n_opt = app->add_option("--n", n, "Azimuth steps N (default: shipped 123-column schedule)")->check(CLI::Range(2, 100000));
    samples_opt = app->add_option("--samples", samples, "Samples per ray (image rows)")->check(CLI::Range(2, 100000));
    rule_opt = app->add_option("--rule", rule, "Ray count rounding rule")->check(CLI::IsMember({"floor", "round", "ceil"}));
    poles_opt = app->add_flag("--poles", poles, "Emit one ray at each pole");
    schedule_opt = app->add_option("--schedule", schedule_file, "Schedule file from 'schedule --export'");
  }

  bool explicit_geometry() const { return n_opt->count() || rule_opt->count() || poles_opt->count(); }

  /// Explicit --n/--rule/--poles select a derived schedule; otherwise the
  /// 123-column compatibility schedule is used.
  void apply(RepresentationParams& p) const {
    if (schedule_opt->count()) {
      if (explicit_geometry()) throw CLI::ValidationError("--schedule cannot be combined with --n, --rule or --poles");
      auto loaded = import_schedule(fs::path(schedule_file));
      p.spiral = loaded.config;
      p.schedule = std::move(loaded.schedule);
    } else if (explicit_geometry()) {
      p.spiral = SpiralConfig{};
      p.spiral.n_steps = n;
      p.spiral.latitude_rule = parse_latitude_rule(rule);
      p.spiral.include_poles = poles;
    } else {
      p.spiral = compat123_config();
    }
    if (samples_opt->count() || !schedule_opt->count()) p.spiral.samples_per_ray = samples;
    p.spiral.validate();
  }
};

struct VoiFlags {
  double voi_mm = kDefaultVoiMm;
  int side = kDefaultSide;
  std::string mode = "spiral";

  void add_to(CLI::App* app) {
    app->add_option("--voi-mm", voi_mm, "VOI edge length in mm")->check(CLI::PositiveNumber);
    app->add_option("--side", side, "VOI voxels per edge")->check(CLI::Range(2, 1024));
    app->add_option("--mode", mode, "Representation")
        ->check(CLI::IsMember({"spiral", "slice", "center_slice", "nineview", "nine_view", "cube"}));
  }
};

/// Config JSON keys mirror long flag names. Values are turned into arguments
/// placed before the explicit ones so explicit flags take precedence.
std::vector<std::string> config_arguments(const fs::path& path, CLI::App* sub, const std::vector<std::string>& given) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::parse, path.string() + ": top level must be an object");

  std::vector<std::string> args;
  for (const auto& [raw_key, value] : j.items()) {
    std::string key = raw_key;
    for (auto& ch : key)
      if (ch == '_') ch = '-';
    const std::string flag = "--" + key;
    if (key == "config" || sub->get_option_no_throw(flag) == nullptr)
      throw CLI::ValidationError("config key '" + raw_key + "' is not a flag of '" + sub->get_name() + "'");
    bool seen = false;
    for (const auto& g : given) seen = seen || g == flag || g.rfind(flag + "=", 0) == 0;
    if (seen) continue;

    auto scalar = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < value.size(); ++i) joined += (i ? "," : "") + scalar(value[i]);
      args.push_back(flag);
      args.push_back(joined);
    } else if (!value.is_null()) {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

Vec3 parse_center(const std::string& s) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 3) throw CLI::ValidationError("--center expects x,y,z");
  Vec3 v;
  for (int a = 0; a < 3; ++a) {
    auto d = text::parse_double(text::trim(parts[static_cast<std::size_t>(a)]));
    if (!d) throw CLI::ValidationError("--center: bad number '" + std::string(parts[static_cast<std::size_t>(a)]) + "'");
    v[a] = *d;
  }
  return v;
}

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

// ---- transform ----

struct TransformArgs {
  std::string input, center, candidates, out = ".";
  bool pgm = false;
  SpiralFlags spiral;
  VoiFlags voi;
};

int run_transform(const TransformArgs& a, unsigned jobs) {
  RepresentationParams params;
  params.mode = parse_dataset_mode(a.voi.mode);
  params.voi_mm = a.voi.voi_mm;
  params.side = a.voi.side;
  a.spiral.apply(params);

  const fs::path input(a.input);
  const std::string stem = input.stem().string();
  struct Job {
    std::string name;
    Vec3 world;
  };
  std::vector<Job> work;
  if (!a.center.empty()) {
    work.push_back({stem + "_center", parse_center(a.center)});
  } else {
    const auto records = load_candidates(a.candidates, candidates_have_labels(a.candidates));
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].scan_id == stem) work.push_back({stem + "_" + sample_name(i), records[i].world_pos});
    if (work.empty()) throw Error(ErrorCode::unresolved_scan, "no candidates for scan '" + stem + "' in " + a.candidates);
  }

  const Volume3D vol = load_metaimage(input, [](const std::string& w) { log_line("warn", w); });
  const SpiralSchedule schedule = params.mode == DatasetMode::spiral ? params.resolved_schedule() : SpiralSchedule{};
  const fs::path out(a.out);
  fs::create_directories(out);

  std::vector<std::string> lines(work.size());
  std::vector<char> ok(work.size(), 0);  // not vector<bool>: written concurrently
  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const auto& job = work[i];
    try {
      const VoiCube cube = rescale_intensity(extract_voi(vol, job.world, params.voi_mm, params.side));
      const Tensor t = represent(cube, params.mode, schedule, params.spiral.samples_per_ray);
      const fs::path path = out / (job.name + ".s2dt");
      write_s2dt(path, t.dims, t.data);
      if (a.pgm && t.dims.size() == 2) {
        Representation2D rep{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), t.data, ViewKind::spiral, {}};
        write_pgm(fs::path(path).replace_extension(".pgm"), rep);
      }
      lines[i] = job.name + " ok " + dims_string(t.dims) + " " + path.string();
      ok[i] = 1;
    } catch (const std::exception& e) {
      lines[i] = job.name + " failed " + e.what();
    }
  });

  std::size_t failed = 0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    std::cout << lines[i] << '\n';
    if (!ok[i]) {
      ++failed;
      log_line("error", lines[i]);
    }
  }
  return failed == 0 ? kExitOk : (failed == work.size() ? kExitFatal : kExitPartial);
}

// ---- build ----

struct BuildArgs {
  std::string volumes, candidates, out;
  int folds = 10;
  std::uint64_t seed = 0;
  int subsample = 1;
  std::vector<int> test_folds;
  bool force = false, pgm = false;
  SpiralFlags spiral;
  VoiFlags voi;
};

int run_build(const BuildArgs& a, unsigned jobs) {
  RepresentationParams params;
  params.mode = parse_dataset_mode(a.voi.mode);
  params.voi_mm = a.voi.voi_mm;
  params.side = a.voi.side;
  a.spiral.apply(params);

  const auto records = load_candidates(a.candidates, true);
  auto manifest = make_manifest(records, params, a.folds, a.seed, a.test_folds);
  manifest = subsample(std::move(manifest), a.subsample);
  log_line("info", "building " + std::to_string(records.size()) + " candidates into " + a.out);

  const auto report = build_dataset(a.volumes, manifest, a.out, {jobs, a.pgm, a.force});
  std::cout << to_json(report).dump(2) << '\n';
  for (const auto& f : report.failures) log_line("error", "candidate " + std::to_string(f.index) + ": " + f.message);
  return report.failures.empty() ? kExitOk : kExitPartial;
}

// ---- schedule ----

struct ScheduleArgs {
  std::string export_path;
  SpiralFlags spiral;
};

int run_schedule(const ScheduleArgs& a) {
  RepresentationParams params;
  a.spiral.apply(params);
  const auto sched = params.resolved_schedule();
  const double expected = expected_surface_points(params.spiral.n_steps);
  const double rays = static_cast<double>(sched.size());

  std::vector<int> per_lat(static_cast<std::size_t>(params.spiral.n_steps) + 1, 0);
  for (int k : sched.latitude) ++per_lat[static_cast<std::size_t>(k)];
  std::string counts;
  for (std::size_t k = 0; k < per_lat.size(); ++k) counts += (k ? " " : "") + std::to_string(per_lat[k]);

  char buf[160];
  std::cout << "config " << params.spiral.canonical() << '\n';
  std::cout << "count " << sched.size() << '\n';
  std::snprintf(buf, sizeof buf, "expected %.2f\nrelative_error %.5f\n", expected, std::abs(rays - expected) / expected);
  std::cout << buf;
  std::cout << "per_latitude " << counts << '\n';
  std::cout << "fingerprint " << params.spiral.fingerprint() << '\n';
  if (!a.export_path.empty()) {
    export_schedule(params.spiral, sched, fs::path(a.export_path));
    log_line("info", "schedule written to " + a.export_path);
  }
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string pred, ref, exclude, out;
  std::size_t scans = 0;
  CLI::Option* scans_opt = nullptr;
};

int run_eval(const EvalArgs& a) {
  PredictionSet preds;
  preds.entries = load_predictions(a.pred);
  const auto ref = load_reference(a.ref);
  const auto excluded = a.exclude.empty() ? std::vector<ReferenceNodule>{} : load_reference(a.exclude);
  if (a.scans_opt->count()) {
    preds.scan_count = a.scans;
  } else {
    std::set<std::string> ids;
    for (const auto& p : preds.entries) ids.insert(p.scan_id);
    for (const auto& r : ref) ids.insert(r.scan_id);
    preds.scan_count = std::max<std::size_t>(1, ids.size());
  }

  const auto r = evaluate(preds, ref, excluded);
  nlohmann::json j;
  j["cpm"] = r.cpm;
  j["auc"] = r.auc;
  j["scan_count"] = preds.scan_count;
  j["nodules"] = r.nodules;
  j["detected"] = r.detected;
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  j["excluded"] = r.excluded;
  auto ops = nlohmann::json::array();
  for (std::size_t k = 0; k < kCpmOperatingPoints.size(); ++k)
    ops.push_back({{"fps_per_scan", kCpmOperatingPoints[k]}, {"sensitivity", r.sensitivities[k]}});
  j["operating_points"] = ops;

  if (!a.out.empty()) {
    const fs::path out(a.out);
    fs::create_directories(out);
    std::ofstream csv(out / "froc.csv");
    csv << "threshold,fps_per_scan,sensitivity\n";
    char buf[96];
    for (const auto& p : r.curve.points) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fps_per_scan, p.sensitivity);
      csv << buf;
    }
    std::ofstream(out / "report.json") << j.dump(2) << '\n';
    if (!csv) throw Error(ErrorCode::io, "cannot write " + (out / "froc.csv").string());
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

unsigned jobs_default() {
  if (const char* env = std::getenv("SPIRALREP_JOBS")) {
    if (auto v = text::parse_int<unsigned>(env); v && *v > 0) return *v;
    log_line("warn", std::string("ignoring SPIRALREP_JOBS=") + env);
  }
  return default_jobs();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiral-scan and baseline 2D representations of CT candidates"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  unsigned jobs = jobs_default();
  app.add_option("--config", config_path, "JSON file with flag defaults (keys are flag names)");
  app.add_option("--jobs", jobs, "Worker threads (env SPIRALREP_JOBS)")->check(CLI::Range(1u, 1024u));

  TransformArgs ta;
  auto* transform = app.add_subcommand("transform", "Represent candidates of one volume");
  transform->add_option("--input", ta.input, "MetaImage header (.mhd)")->required();
  auto* center_opt = transform->add_option("--center", ta.center, "World position x,y,z in mm");
  auto* cand_opt = transform->add_option("--candidates", ta.candidates, "Candidate CSV (rows for this scan are used)");
  center_opt->excludes(cand_opt);
  transform->add_option("--out", ta.out, "Output directory");
  transform->add_flag("--pgm", ta.pgm, "Also write 8-bit PGM previews");
  ta.spiral.add_to(transform);
  ta.voi.add_to(transform);

  BuildArgs ba;
  auto* build = app.add_subcommand("build", "Build a fold-split, class-balanced dataset tree");
  build->add_option("--volumes", ba.volumes, "Directory of <scan_id>.mhd volumes")->required();
  build->add_option("--candidates", ba.candidates, "Labelled candidate CSV")->required();
  build->add_option("--out", ba.out, "Output directory")->required();
  build->add_option("--folds", ba.folds, "Number of folds")->check(CLI::Range(1, 1000));
  build->add_option("--seed", ba.seed, "Global seed");
  build->add_option("--subsample", ba.subsample, "Keep 1/k of each training class")->check(CLI::Range(1, 1000000));
  build->add_option("--test-fold", ba.test_folds, "Folds left unaugmented and unsubsampled")->delimiter(',');
  build->add_flag("--force", ba.force, "Replace a non-empty output directory");
  build->add_flag("--pgm", ba.pgm, "Also write 8-bit PGM previews");
  ba.spiral.add_to(build);
  ba.voi.add_to(build);

  ScheduleArgs sa;
  auto* schedule = app.add_subcommand("schedule", "Print or export a ray schedule");
  schedule->add_option("--export", sa.export_path, "Write the schedule to this file");
  sa.spiral.add_to(schedule);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "FROC, CPM and AUC of candidate predictions");
  eval->add_option("--pred", ea.pred, "Predictions CSV (seriesuid,coordX,coordY,coordZ,probability)")->required();
  eval->add_option("--ref", ea.ref, "Reference CSV (seriesuid,coordX,coordY,coordZ,diameter_mm)")->required();
  eval->add_option("--exclude", ea.exclude, "Irrelevant findings, same layout as --ref");
  ea.scans_opt = eval->add_option("--scans", ea.scans, "Number of scans (default: distinct ids)")->check(CLI::PositiveNumber);
  eval->add_option("--out", ea.out, "Directory for froc.csv and report.json");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Config values are inserted right after the subcommand name.
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--config") config_path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (!args.empty() && args.back().rfind("--config=", 0) == 0) config_path = args.back().substr(9);
    if (!config_path.empty()) {
      for (std::size_t i = 0; i < args.size(); ++i) {
        auto* sub = app.get_subcommand_no_throw(args[i]);
        if (sub == nullptr || (i > 0 && args[i - 1] == "--config")) continue;
        const auto extra = config_arguments(config_path, sub, args);
        args.insert(args.begin() + static_cast<long>(i) + 1, extra.begin(), extra.end());
        break;
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitFatal;
  } catch (const std::exception& e) {
    log_line("error", e.what());
    return kExitFatal;
  }

  try {
    if (*transform) {
      if (ta.center.empty() == ta.candidates.empty())
        throw CLI::ValidationError("transform needs exactly one of --center or --candidates");
      return run_transform(ta, jobs);
    }
    if (*build) return run_build(ba, jobs);
    if (*schedule) return run_schedule(sa);
    if (*eval) return run_eval(ea);
  } catch (const CLI::Error& e) {
    log_line("error", e.what());
    return kExitFatal;
  } catch (const std::exception& e) {
    log_line("error", e.what());
    return kExitFatal;
  }
  return kExitFatal;
}
