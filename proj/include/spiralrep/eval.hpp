#pragma once

// Candidate classification scoring: hit matching against reference nodules,
// FROC sweep, CPM over the seven standard operating points, and ROC AUC.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spiralrep/error.hpp"
#include "spiralrep/geometry.hpp"
#include "spiralrep/text.hpp"

namespace spiralrep {

struct Prediction {
  std::string scan_id;
  Vec3 world_pos;
  double score = 0.0;
};

struct PredictionSet {
  std::vector<Prediction> entries;
  std::size_t scan_count = 1;

  void validate() const {
    if (scan_count < 1) throw Error(ErrorCode::invalid_argument, "scan_count must be >= 1");
    for (const auto& p : entries) {
      if (!std::isfinite(p.score) || p.score < 0.0 || p.score > 1.0)
        throw Error(ErrorCode::invalid_argument, "prediction score outside [0,1]");
    }
  }
};

struct ReferenceNodule {
  std::string scan_id;
  Vec3 world_pos;
  double radius_mm = 0.0;
};

struct LabeledPrediction {
  double score = 0.0;
  std::vector<std::size_t> hits;  // indices into the reference list
  bool excluded = false;          // inside an irrelevant finding only; neither TP nor FP

  bool is_tp() const { return !hits.empty(); }
};

struct MatchResult {
  std::vector<LabeledPrediction> predictions;
  std::size_t nodule_count = 0;
};

/// A prediction hits a nodule when its Euclidean distance to the nodule center
/// is strictly below the nodule radius, in the same scan.
inline MatchResult match_candidates(const PredictionSet& predictions, std::span<const ReferenceNodule> reference,
                                    std::span<const ReferenceNodule> excluded = {}) {
  predictions.validate();
  for (const auto& r : reference) {
    if (!(r.radius_mm > 0.0)) throw Error(ErrorCode::invalid_argument, "reference radius must be positive");
  }
  for (const auto& r : excluded) {
    if (!(r.radius_mm > 0.0)) throw Error(ErrorCode::invalid_argument, "excluded finding radius must be positive");
  }

  std::map<std::string, std::vector<std::size_t>> by_scan;
  for (std::size_t n = 0; n < reference.size(); ++n) by_scan[reference[n].scan_id].push_back(n);
  std::map<std::string, std::vector<std::size_t>> excluded_by_scan;
  for (std::size_t n = 0; n < excluded.size(); ++n) excluded_by_scan[excluded[n].scan_id].push_back(n);

  auto inside = [](Vec3 p, const ReferenceNodule& r) {
    const Vec3 d = p - r.world_pos;
    return dot(d, d) < r.radius_mm * r.radius_mm;
  };

  MatchResult out;
  out.nodule_count = reference.size();
  out.predictions.reserve(predictions.entries.size());
  for (const auto& p : predictions.entries) {
    LabeledPrediction lp;
    lp.score = p.score;
    if (auto it = by_scan.find(p.scan_id); it != by_scan.end()) {
      for (auto n : it->second)
        if (inside(p.world_pos, reference[n])) lp.hits.push_back(n);
    }
    if (lp.hits.empty()) {
      if (auto it = excluded_by_scan.find(p.scan_id); it != excluded_by_scan.end()) {
        for (auto n : it->second) lp.excluded = lp.excluded || inside(p.world_pos, excluded[n]);
      }
    }
    out.predictions.push_back(std::move(lp));
  }
  return out;
}

struct FrocPoint {
  double threshold = 0.0;
  double fps_per_scan = 0.0;
  double sensitivity = 0.0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // thresholds descending; fps and sensitivity non-decreasing
};

/// One point per distinct score, sweeping thresholds from high to low; a
/// prediction counts once its score is >= the threshold.
inline FrocCurve compute_froc(const MatchResult& labeled, std::size_t scan_count) {
  if (scan_count < 1) throw Error(ErrorCode::invalid_argument, "scan_count must be >= 1");
  if (labeled.nodule_count == 0) throw Error(ErrorCode::invalid_argument, "no reference nodules");

  std::vector<const LabeledPrediction*> order;
  for (const auto& p : labeled.predictions)
    if (!p.excluded) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->score > b->score; });

  std::vector<bool> detected(labeled.nodule_count, false);
  std::size_t n_detected = 0, n_fp = 0;
  FrocCurve curve;
  for (std::size_t i = 0; i < order.size();) {
    const double t = order[i]->score;
    for (; i < order.size() && order[i]->score == t; ++i) {
      if (!order[i]->is_tp()) {
        ++n_fp;
        continue;
      }
      for (auto n : order[i]->hits) {
        if (!detected[n]) {
          detected[n] = true;
          ++n_detected;
        }
      }
    }
    curve.points.push_back({t, static_cast<double>(n_fp) / static_cast<double>(scan_count),
                            static_cast<double>(n_detected) / static_cast<double>(labeled.nodule_count)});
  }
  return curve;
}

inline constexpr std::array<double, 7> kCpmOperatingPoints{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

/// Step-function sensitivity: the best sensitivity reached at or below each
/// FP rate, 0 when the curve never gets that low.
inline std::array<double, 7> operating_point_sensitivities(const FrocCurve& curve) {
  std::array<double, 7> out{};
  for (std::size_t k = 0; k < kCpmOperatingPoints.size(); ++k) {
    for (const auto& p : curve.points)
      if (p.fps_per_scan <= kCpmOperatingPoints[k]) out[k] = std::max(out[k], p.sensitivity);
  }
  return out;
}

inline double compute_cpm(const FrocCurve& curve) {
  if (curve.points.empty()) throw Error(ErrorCode::invalid_argument, "empty FROC curve");
  const auto s = operating_point_sensitivities(curve);
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

/// Mann-Whitney AUC with midranks for tied scores.
inline double compute_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::invalid_argument, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::invalid_argument, "AUC needs both classes present");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

struct EvalReport {
  double auc = 0.0;
  double cpm = 0.0;
  std::array<double, 7> sensitivities{};
  FrocCurve curve;
  std::size_t nodules = 0;
  std::size_t detected = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t excluded = 0;
};

inline EvalReport evaluate(const PredictionSet& predictions, std::span<const ReferenceNodule> reference,
                           std::span<const ReferenceNodule> excluded = {}) {
  const auto matched = match_candidates(predictions, reference, excluded);
  EvalReport r;
  r.curve = compute_froc(matched, predictions.scan_count);
  r.cpm = compute_cpm(r.curve);
  r.sensitivities = operating_point_sensitivities(r.curve);
  r.nodules = matched.nodule_count;

  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<bool> hit(reference.size(), false);
  for (const auto& p : matched.predictions) {
    if (p.excluded) {
      ++r.excluded;
      continue;
    }
    scores.push_back(p.score);
    labels.push_back(p.is_tp() ? 1 : 0);
    (p.is_tp() ? r.true_positives : r.false_positives)++;
    for (auto n : p.hits) hit[n] = true;
  }
  r.detected = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
  r.auc = compute_auc(scores, labels);
  return r;
}

namespace detail {

template <typename Row>
void for_each_csv_row(const std::filesystem::path& path, std::size_t columns, Row&& row) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse, path.string() + ":1: missing header row");
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = text::chomp_cr(line);
    if (text::trim(view).empty()) continue;
    const auto cols = text::split(view, ',');
    auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (cols.size() != columns)
      fail("expected " + std::to_string(columns) + " columns, got " + std::to_string(cols.size()));
    std::array<double, 4> v{};
    for (std::size_t a = 0; a < 4; ++a) {
      auto d = text::parse_double(cols[a + 1]);
      if (!d) fail("non-numeric field '" + std::string(cols[a + 1]) + "'");
      v[a] = *d;
    }
    const auto id = text::trim(cols[0]);
    if (id.empty()) fail("empty seriesuid");
    row(std::string(id), Vec3{v[0], v[1], v[2]}, v[3], fail);
  }
}

}  // namespace detail

/// `seriesuid,coordX,coordY,coordZ,probability`
inline std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  detail::for_each_csv_row(path, 5, [&](std::string id, Vec3 p, double score, auto& fail) {
    if (score < 0.0 || score > 1.0) fail("probability outside [0,1]");
    out.push_back({std::move(id), p, score});
  });
  return out;
}

/// `seriesuid,coordX,coordY,coordZ,diameter_mm`; radius is half the diameter.
inline std::vector<ReferenceNodule> load_reference(const std::filesystem::path& path) {
  std::vector<ReferenceNodule> out;
  detail::for_each_csv_row(path, 5, [&](std::string id, Vec3 p, double diameter, auto& fail) {
    if (!(diameter > 0.0)) fail("diameter_mm must be positive");
    out.push_back({std::move(id), p, 0.5 * diameter});
  });
  return out;
}

}  // namespace spiralrep
