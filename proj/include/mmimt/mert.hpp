#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmimt/metrics.hpp"
#include "mmimt/rerank.hpp"
#include "mmimt/rng.hpp"
#include "mmimt/util.hpp"

// Weight tuning by coordinate-wise exact line search. For one weight the
// candidate scores are lines in that weight, so the reranked top-1 per
// sentence changes only at pairwise intersection points; evaluating the
// corpus BLEU at one midpoint per interval covers every reachable value.

namespace mmimt {

// One N-best candidate prepared for tuning: its features plus the
// sentence-level BLEU statistics it would contribute if selected.
struct TuningCandidate {
  FeatureVector features;
  BleuStats stats;
};

struct TuningSentence {
  std::vector<TuningCandidate> candidates;  // decoder order, best-first
};

struct MertConfig {
  int restarts = 8;           // random starts beyond the all-zero one
  int max_passes = 30;        // coordinate sweeps per start
  double restart_range = 1.0; // restart weights drawn from [-range, range]
  std::uint64_t seed = 1;

  void validate() const {
    if (restarts < 0) throw DataError("restart count must be non-negative");
    if (max_passes < 1) throw DataError("pass limit must be positive");
    if (restart_range <= 0) throw DataError("restart range must be positive");
  }
};

struct MertResult {
  RerankWeights weights;
  double bleu = 0.0;
};

namespace detail {

inline double weight_dim(const RerankWeights& w, int dim) {
  return dim == 0 ? w.lambda : dim == 1 ? w.gamma_lm : w.eta;
}

inline void set_weight_dim(RerankWeights& w, int dim, double value) {
  (dim == 0 ? w.lambda : dim == 1 ? w.gamma_lm : w.eta) = value;
}

inline double feature_dim(const FeatureVector& f, int dim) {
  return dim == 0 ? f.logp_bwd : dim == 1 ? f.logp_lm : static_cast<double>(f.target_length);
}

// Index of the best-scoring candidate; exact ties keep the earliest.
inline int select_top(const TuningSentence& sentence, const RerankWeights& w) {
  int best = 0;
  double best_score = rerank_score(sentence.candidates[0].features, w);
  for (size_t i = 1; i < sentence.candidates.size(); ++i) {
    double s = rerank_score(sentence.candidates[i].features, w);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace detail

inline double corpus_bleu_at(const std::vector<TuningSentence>& dev, const RerankWeights& w) {
  BleuStats stats;
  for (const TuningSentence& s : dev) stats += s.candidates[detail::select_top(s, w)].stats;
  return bleu_from_stats(stats).bleu;
}

// Intersection points of the score lines score_i(t) = offset_i + slope_i * t
// over all candidate pairs; parallel lines contribute none.
inline std::vector<double> line_search_critical_points(const std::vector<double>& offsets,
                                                       const std::vector<double>& slopes) {
  if (offsets.size() != slopes.size())
    throw DataError("line search needs one slope per offset");
  std::vector<double> points;
  for (size_t i = 0; i < offsets.size(); ++i)
    for (size_t j = i + 1; j < offsets.size(); ++j) {
      if (slopes[i] == slopes[j]) continue;
      double t = (offsets[j] - offsets[i]) / (slopes[i] - slopes[j]);
      if (std::isfinite(t)) points.push_back(t);
    }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return points;
}

namespace detail {

// Best value for one weight with the others held fixed. Returns true and
// updates (w, bleu) only on strict improvement.
inline bool line_search_dim(const std::vector<TuningSentence>& dev, int dim, RerankWeights& w,
                            double& bleu) {
  std::vector<double> criticals;
  for (const TuningSentence& s : dev) {
    std::vector<double> offsets, slopes;
    offsets.reserve(s.candidates.size());
    slopes.reserve(s.candidates.size());
    for (const TuningCandidate& c : s.candidates) {
      double slope = feature_dim(c.features, dim);
      offsets.push_back(rerank_score(c.features, w) - weight_dim(w, dim) * slope);
      slopes.push_back(slope);
    }
    auto points = line_search_critical_points(offsets, slopes);
    criticals.insert(criticals.end(), points.begin(), points.end());
  }
  if (criticals.empty()) return false;  // the objective is constant in this weight
  std::sort(criticals.begin(), criticals.end());
  criticals.erase(std::unique(criticals.begin(), criticals.end()), criticals.end());

  std::vector<double> trials;
  trials.push_back(criticals.front() - 1.0);
  for (size_t i = 0; i + 1 < criticals.size(); ++i)
    trials.push_back(0.5 * (criticals[i] + criticals[i + 1]));
  trials.push_back(criticals.back() + 1.0);

  bool improved = false;
  for (double t : trials) {
    RerankWeights trial = w;
    set_weight_dim(trial, dim, t);
    double b = corpus_bleu_at(dev, trial);
    if (b > bleu) {
      bleu = b;
      w = trial;
      improved = true;
    }
  }
  return improved;
}

inline MertResult mert_from_start(const std::vector<TuningSentence>& dev, RerankWeights start,
                                  int max_passes) {
  MertResult result;
  result.weights = start;
  result.bleu = corpus_bleu_at(dev, start);
  for (int pass = 0; pass < max_passes; ++pass) {
    bool any = false;
    for (int dim = 0; dim < 3; ++dim)
      if (line_search_dim(dev, dim, result.weights, result.bleu)) any = true;
    if (!any) break;
  }
  return result;
}

}  // namespace detail

inline MertResult mert_tune(const std::vector<TuningSentence>& dev, const MertConfig& cfg) {
  cfg.validate();
  if (dev.empty()) throw DataError("tuning needs a non-empty development set");
  for (const TuningSentence& s : dev)
    if (s.candidates.empty()) throw DataError("tuning sentence with an empty n-best list");

  MertResult best = detail::mert_from_start(dev, RerankWeights{}, cfg.max_passes);
  Rng rng(derive_seed(cfg.seed, "mert_restart"));
  for (int r = 0; r < cfg.restarts; ++r) {
    RerankWeights start;
    start.lambda = rng.uniform(-cfg.restart_range, cfg.restart_range);
    start.gamma_lm = rng.uniform(-cfg.restart_range, cfg.restart_range);
    start.eta = rng.uniform(-cfg.restart_range, cfg.restart_range);
    MertResult candidate = detail::mert_from_start(dev, start, cfg.max_passes);
    if (candidate.bleu > best.bleu) best = candidate;  // ties keep the earlier start
  }
  return best;
}

}  // namespace mmimt
