#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mmimt/util.hpp"

// Corpus BLEU (4-gram, modified precision, closest-reference brevity penalty,
// unsmoothed) and distinct-n diversity over N-best lists. All functions work
// on content sequences; callers strip the end marker first.

namespace mmimt {

constexpr int kBleuOrder = 4;

// Additive sufficient statistics: corpus BLEU is computed from the sum of
// per-sentence stats, which is what lets tuning sweep candidate swaps cheaply.
struct BleuStats {
  std::array<long, kBleuOrder> matched{};  // clipped n-gram matches
  std::array<long, kBleuOrder> total{};    // candidate n-gram counts
  long candidate_len = 0;
  long reference_len = 0;  // closest reference length, summed over sentences

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
      matched[n] += o.matched[n];
      total[n] += o.total[n];
    }
    candidate_len += o.candidate_len;
    reference_len += o.reference_len;
    return *this;
  }
  friend BleuStats operator+(BleuStats a, const BleuStats& b) { return a += b; }
};

struct BleuReport {
  double bleu = 0.0;
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 0.0;
  long candidate_len = 0;
  long reference_len = 0;
};

namespace detail {

template <typename Token>
std::map<std::vector<Token>, long> ngram_counts(const std::vector<Token>& seq, int n) {
  std::map<std::vector<Token>, long> counts;
  for (int i = 0; i + n <= static_cast<int>(seq.size()); ++i)
    ++counts[std::vector<Token>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

}  // namespace detail

template <typename Token>
BleuStats sentence_bleu_stats(const std::vector<Token>& candidate,
                              const std::vector<std::vector<Token>>& references) {
  if (references.empty()) throw DataError("sentence needs at least one reference");
  BleuStats stats;
  stats.candidate_len = static_cast<long>(candidate.size());

  long closest = static_cast<long>(references[0].size());
  for (const auto& ref : references) {
    long len = static_cast<long>(ref.size());
    long cur = std::labs(closest - stats.candidate_len);
    long alt = std::labs(len - stats.candidate_len);
    if (alt < cur || (alt == cur && len < closest)) closest = len;
  }
  stats.reference_len = closest;

  for (int n = 1; n <= kBleuOrder; ++n) {
    auto cand_counts = detail::ngram_counts(candidate, n);
    std::map<std::vector<Token>, long> max_ref;
    for (const auto& ref : references)
      for (const auto& [gram, count] : detail::ngram_counts(ref, n))
        max_ref[gram] = std::max(max_ref[gram], count);
    for (const auto& [gram, count] : cand_counts) {
      stats.total[n - 1] += count;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) stats.matched[n - 1] += std::min(count, it->second);
    }
  }
  return stats;
}

inline BleuReport bleu_from_stats(const BleuStats& stats) {
  BleuReport report;
  report.candidate_len = stats.candidate_len;
  report.reference_len = stats.reference_len;
  double log_precision_sum = 0.0;
  bool any_zero = false;
  for (int n = 0; n < kBleuOrder; ++n) {
    double p = stats.total[n] > 0
                   ? static_cast<double>(stats.matched[n]) / static_cast<double>(stats.total[n])
                   : 0.0;
    report.precisions[n] = p;
    if (p > 0)
      log_precision_sum += std::log(p);
    else
      any_zero = true;
  }
  if (stats.candidate_len > 0)
    report.brevity_penalty =
        std::min(1.0, std::exp(1.0 - static_cast<double>(stats.reference_len) /
                                         static_cast<double>(stats.candidate_len)));
  report.bleu = any_zero ? 0.0
                         : report.brevity_penalty * std::exp(log_precision_sum / kBleuOrder);
  return report;
}

template <typename Token>
BleuReport corpus_bleu(const std::vector<std::vector<Token>>& candidates,
                       const std::vector<std::vector<std::vector<Token>>>& references) {
  if (candidates.empty()) throw DataError("empty candidate set");
  if (candidates.size() != references.size())
    throw DataError("candidate and reference counts differ");
  BleuStats stats;
  for (size_t i = 0; i < candidates.size(); ++i)
    stats += sentence_bleu_stats(candidates[i], references[i]);
  return bleu_from_stats(stats);
}

// Single-reference convenience.
template <typename Token>
BleuReport corpus_bleu(const std::vector<std::vector<Token>>& candidates,
                       const std::vector<std::vector<Token>>& references) {
  std::vector<std::vector<std::vector<Token>>> sets;
  sets.reserve(references.size());
  for (const auto& r : references) sets.push_back({r});
  return corpus_bleu(candidates, sets);
}

struct DiversityReport {
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  long total_tokens = 0;
};

// Per source: distinct n-grams across the list's candidates over the total
// n-gram count; the corpus value is the mean over sources that have any
// n-grams of that order.
template <typename Token>
double distinct_n(const std::vector<std::vector<std::vector<Token>>>& lists, int n) {
  if (n < 1) throw DataError("distinct-n order must be positive");
  if (lists.empty()) throw DataError("distinct-n needs at least one list");
  double sum = 0.0;
  int counted = 0;
  for (const auto& list : lists) {
    if (list.empty()) throw DataError("distinct-n list is empty");
    std::set<std::vector<Token>> grams;
    long total = 0;
    for (const auto& cand : list) {
      for (int i = 0; i + n <= static_cast<int>(cand.size()); ++i) {
        grams.insert(std::vector<Token>(cand.begin() + i, cand.begin() + i + n));
        ++total;
      }
    }
    if (total == 0) continue;
    sum += static_cast<double>(grams.size()) / static_cast<double>(total);
    ++counted;
  }
  if (counted == 0) throw DataError("no n-grams to count");
  return sum / counted;
}

template <typename Token>
DiversityReport diversity_report(const std::vector<std::vector<std::vector<Token>>>& lists) {
  DiversityReport report;
  report.distinct_1 = distinct_n(lists, 1);
  report.distinct_2 = distinct_n(lists, 2);
  for (const auto& list : lists)
    for (const auto& cand : list) report.total_tokens += static_cast<long>(cand.size());
  return report;
}

inline std::vector<std::string> format_bleu_report(const BleuReport& r) {
  std::vector<std::string> lines;
  lines.push_back("BLEU=" + fmt_g17(r.bleu));
  for (int n = 0; n < kBleuOrder; ++n)
    lines.push_back("p" + std::to_string(n + 1) + "=" + fmt_g17(r.precisions[n]));
  lines.push_back("BP=" + fmt_g17(r.brevity_penalty));
  lines.push_back("candidate_len=" + std::to_string(r.candidate_len));
  lines.push_back("reference_len=" + std::to_string(r.reference_len));
  return lines;
}

inline std::vector<std::string> format_diversity_report(const DiversityReport& r) {
  return {"distinct1=" + fmt_g17(r.distinct_1), "distinct2=" + fmt_g17(r.distinct_2),
          "total_tokens=" + std::to_string(r.total_tokens)};
}

}  // namespace mmimt
