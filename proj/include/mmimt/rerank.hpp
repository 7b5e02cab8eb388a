#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "mmimt/model.hpp"
#include "mmimt/util.hpp"

// Candidate features and the linear reranking score. The forward logprob
// keeps a fixed weight of one; the backward, language-model, and length
// features carry tunable weights.

namespace mmimt {

struct FeatureVector {
  double logp_fwd = 0.0;  // log p(target | source)
  double logp_bwd = 0.0;  // log p(source | target)
  double logp_lm = 0.0;   // per-content-token mean of the LM logprob
  int target_length = 0;  // content tokens, end marker excluded
};

struct RerankWeights {
  double lambda = 0.0;    // on logp_bwd
  double gamma_lm = 0.0;  // on logp_lm
  double eta = 0.0;       // on target_length
};

inline double rerank_score(const FeatureVector& f, const RerankWeights& w) {
  return f.logp_fwd + w.lambda * f.logp_bwd + w.gamma_lm * f.logp_lm +
         w.eta * f.target_length;
}

// Scores a finished candidate (content + end marker) against all three
// models. The backward score swaps the sentence roles: the candidate's
// content becomes the source and the original source, closed with the end
// marker, becomes the target.
inline FeatureVector extract_features(const TokenSequence& x, const TokenSequence& y,
                                      const Seq2SeqModel& forward, const Seq2SeqModel& backward,
                                      const Seq2SeqModel& lm) {
  if (forward.direction != Direction::forward)
    throw DataError("extract_features: forward model has the wrong direction tag");
  if (backward.direction != Direction::backward)
    throw DataError("extract_features: backward model has the wrong direction tag");
  if (!lm.is_language_model()) throw DataError("extract_features: lm is not a language model");
  if (y.size() < 2 || y.back() != Vocabulary::kEosId)
    throw DataError("extract_features: candidate must be non-empty and end-marked");

  FeatureVector f;
  f.target_length = static_cast<int>(y.size()) - 1;
  f.logp_fwd = sequence_logprob(forward, x, y);

  TokenSequence y_content(y.begin(), y.end() - 1);
  TokenSequence x_closed = x;
  x_closed.push_back(Vocabulary::kEosId);
  f.logp_bwd = sequence_logprob(backward, y_content, x_closed);

  f.logp_lm = lm_logprob(lm, y) / f.target_length;
  return f;
}

// Permutation that reorders an N-best list by descending score; candidates
// with exactly equal scores keep their original (decoder) order.
inline std::vector<int> rerank_order(const std::vector<FeatureVector>& features,
                                     const RerankWeights& w) {
  std::vector<double> scores(features.size());
  for (size_t i = 0; i < features.size(); ++i) scores[i] = rerank_score(features[i], w);
  std::vector<int> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

// Features file, one candidate per line:
//   sent_id ||| tokens ||| logp_fwd logp_bwd logp_lm target_length
struct FeatureFileEntry {
  int sent_id = 0;
  std::vector<std::string> tokens;
  FeatureVector features;
};

inline void append_features(std::ostream& out, int sent_id,
                            const std::vector<std::string>& tokens, const FeatureVector& f) {
  out << sent_id << " ||| " << join(tokens) << " ||| " << fmt_g17(f.logp_fwd) << ' '
      << fmt_g17(f.logp_bwd) << ' ' << fmt_g17(f.logp_lm) << ' ' << f.target_length << '\n';
}

inline std::vector<FeatureFileEntry> load_features(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<FeatureFileEntry> out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string where = path + ":" + std::to_string(i + 1);
    auto fields = split_on(lines[i], " ||| ");
    if (fields.size() != 3) throw DataError(where + ": expected 3 ||| fields");
    auto values = split_whitespace(fields[2]);
    if (values.size() != 4) throw DataError(where + ": expected 4 feature values");
    FeatureFileEntry e;
    e.sent_id = static_cast<int>(parse_long(fields[0], where));
    e.tokens = split_whitespace(fields[1]);
    e.features.logp_fwd = parse_double(values[0], where);
    e.features.logp_bwd = parse_double(values[1], where);
    e.features.logp_lm = parse_double(values[2], where);
    e.features.target_length = static_cast<int>(parse_long(values[3], where));
    if (e.sent_id < 0 || e.features.target_length < 1)
      throw DataError(where + ": bad id or target length");
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError(path + ": empty features file");
  return out;
}

inline void save_weights(const std::string& path, const RerankWeights& w) {
  write_lines(path, {"lambda=" + fmt_g17(w.lambda), "gamma_lm=" + fmt_g17(w.gamma_lm),
                     "eta=" + fmt_g17(w.eta)});
}

inline RerankWeights load_weights(const std::string& path) {
  auto lines = read_lines(path);
  RerankWeights w;
  bool seen[3] = {false, false, false};
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string where = path + ":" + std::to_string(i + 1);
    auto eq = lines[i].find('=');
    if (eq == std::string::npos) throw DataError(where + ": expected name=value");
    std::string name = lines[i].substr(0, eq);
    double value = parse_double(lines[i].substr(eq + 1), where);
    if (name == "lambda") {
      w.lambda = value;
      seen[0] = true;
    } else if (name == "gamma_lm") {
      w.gamma_lm = value;
      seen[1] = true;
    } else if (name == "eta") {
      w.eta = value;
      seen[2] = true;
    } else {
      throw DataError(where + ": unknown weight " + name);
    }
  }
  if (!seen[0] || !seen[1] || !seen[2])
    throw DataError(path + ": weights file must set lambda, gamma_lm, and eta");
  return w;
}

}  // namespace mmimt
