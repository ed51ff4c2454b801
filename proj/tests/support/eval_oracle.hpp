#pragma once

// Brute-force references for the evaluation routines: all-pairs matching,
// quadratic threshold sweep and pair-counting AUC.

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "spiralrep/eval.hpp"

namespace spiralrep::testing {

struct OracleLabel {
  bool tp = false;
  bool excluded = false;
  std::vector<std::size_t> hits;
};

inline std::vector<OracleLabel> oracle_match(const PredictionSet& preds, const std::vector<ReferenceNodule>& ref,
                                             const std::vector<ReferenceNodule>& excl = {}) {
  std::vector<OracleLabel> out;
  for (const auto& p : preds.entries) {
    OracleLabel l;
    for (std::size_t n = 0; n < ref.size(); ++n) {
      if (ref[n].scan_id != p.scan_id) continue;
      const double dx = p.world_pos.x - ref[n].world_pos.x, dy = p.world_pos.y - ref[n].world_pos.y,
                   dz = p.world_pos.z - ref[n].world_pos.z;
      if (std::sqrt(dx * dx + dy * dy + dz * dz) < ref[n].radius_mm) l.hits.push_back(n);
    }
    l.tp = !l.hits.empty();
    if (!l.tp) {
      for (const auto& e : excl) {
        if (e.scan_id != p.scan_id) continue;
        const double dx = p.world_pos.x - e.world_pos.x, dy = p.world_pos.y - e.world_pos.y,
                     dz = p.world_pos.z - e.world_pos.z;
        if (std::sqrt(dx * dx + dy * dy + dz * dz) < e.radius_mm) l.excluded = true;
      }
    }
    out.push_back(l);
  }
  return out;
}

/// For each distinct score t (descending): FPs with score >= t and nodules hit
/// by some prediction with score >= t, recomputed from scratch.
inline std::vector<FrocPoint> oracle_froc(const PredictionSet& preds, const std::vector<OracleLabel>& labels,
                                          std::size_t nodule_count) {
  std::set<double, std::greater<>> thresholds;
  for (std::size_t i = 0; i < preds.entries.size(); ++i)
    if (!labels[i].excluded) thresholds.insert(preds.entries[i].score);
  std::vector<FrocPoint> out;
  for (double t : thresholds) {
    std::size_t fp = 0;
    std::set<std::size_t> detected;
    for (std::size_t i = 0; i < preds.entries.size(); ++i) {
      if (labels[i].excluded || preds.entries[i].score < t) continue;
      if (!labels[i].tp) ++fp;
      for (auto n : labels[i].hits) detected.insert(n);
    }
    out.push_back({t, static_cast<double>(fp) / static_cast<double>(preds.scan_count),
                   static_cast<double>(detected.size()) / static_cast<double>(nodule_count)});
  }
  return out;
}

inline double oracle_cpm(const std::vector<FrocPoint>& curve) {
  const double ops[7] = {0.125, 0.25, 0.5, 1, 2, 4, 8};
  double sum = 0.0;
  for (double op : ops) {
    double best = 0.0;
    for (const auto& p : curve)
      if (p.fps_per_scan <= op && p.sensitivity > best) best = p.sensitivity;
    sum += best;
  }
  return sum / 7.0;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

struct RandomEvalInstance {
  PredictionSet predictions;
  std::vector<ReferenceNodule> reference;
  std::vector<ReferenceNodule> excluded;
};

/// Predictions clustered near nodules so that hits, misses, duplicates and
/// tied scores all occur.
inline RandomEvalInstance random_eval_instance(std::uint64_t seed, std::size_t n_predictions = 50) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> scan(0, 3), coarse(0, 9);
  std::uniform_real_distribution<double> pos(-40, 40), rad(2, 8), jitter(-6, 6);
  RandomEvalInstance inst;
  inst.predictions.scan_count = 4;
  const std::size_t n_nodules = 3 + gen() % 6;
  for (std::size_t n = 0; n < n_nodules; ++n)
    inst.reference.push_back({"s" + std::to_string(scan(gen)), {pos(gen), pos(gen), pos(gen)}, rad(gen)});
  for (int n = 0; n < 2; ++n)
    inst.excluded.push_back({"s" + std::to_string(scan(gen)), {pos(gen), pos(gen), pos(gen)}, rad(gen)});
  for (std::size_t i = 0; i < n_predictions; ++i) {
    Prediction p;
    if (gen() % 2) {
      const auto& anchor = gen() % 4 ? inst.reference[gen() % inst.reference.size()] : inst.excluded[gen() % 2];
      p.scan_id = anchor.scan_id;
      p.world_pos = {anchor.world_pos.x + jitter(gen), anchor.world_pos.y + jitter(gen), anchor.world_pos.z + jitter(gen)};
    } else {
      p.scan_id = "s" + std::to_string(scan(gen));
      p.world_pos = {pos(gen), pos(gen), pos(gen)};
    }
    p.score = coarse(gen) / 9.0;  // coarse grid forces ties
    inst.predictions.entries.push_back(p);
  }
  return inst;
}

}  // namespace spiralrep::testing
