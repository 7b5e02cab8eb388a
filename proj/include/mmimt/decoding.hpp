#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mmimt/core.hpp"
#include "mmimt/model.hpp"
#include "mmimt/util.hpp"

// Beam search over target sequences. Each step expands every live hypothesis
// with its top-W next tokens (W defaults to the beam size), ranks the pool by
// an adjusted score, and keeps the best K unfinished ones. A hypothesis that
// emits the end marker inside the allowed length window moves to the N-best
// accumulator, which may therefore grow beyond K entries. The adjusted score
// subtracts gamma * (rank among siblings) to push expansion across parents;
// with gamma = 0 it equals the raw score and the search is the standard one.
// Ranking across finished candidates always uses the raw cumulative logprob.

namespace mmimt {

struct DecodeConfig {
  int beam_size = 200;
  double diversity_penalty = 0.0;  // gamma; 0 disables the sibling-rank penalty
  double min_length_ratio = 0.75;
  double max_length_ratio = 1.5;
  int expansion_width = 0;  // tokens per parent; 0 means beam_size

  void validate() const {
    if (beam_size < 1) throw DataError("beam size must be positive");
    if (diversity_penalty < 0) throw DataError("diversity penalty must be non-negative");
    if (min_length_ratio <= 0 || max_length_ratio < min_length_ratio)
      throw DataError("bad decode length ratios");
    if (expansion_width < 0) throw DataError("bad expansion width");
  }
  int width() const { return expansion_width > 0 ? expansion_width : beam_size; }
};

struct Hypothesis {
  TokenSequence tokens;  // content tokens; finished ones carry the end marker
  double score = 0.0;    // cumulative logprob, end-marker term included when finished
  DecoderState state;    // valid while unfinished
  int parent = -1;       // beam slot this hypothesis was expanded from
  int sibling_rank = 0;  // 1-based rank among its parent's expansions
  bool finished = false;

  int content_length() const {
    return static_cast<int>(tokens.size()) - (finished ? 1 : 0);
  }
};

struct NBestList {
  TokenSequence source;
  std::vector<Hypothesis> entries;  // sorted by raw score, best first
};

// One proposed extension of a beam entry, before pruning.
struct Candidate {
  int parent = -1;
  int token = -1;
  int sibling_rank = 0;   // 1-based, ordered by descending token probability
  double score = 0.0;     // parent score + token logprob
  double adjusted = 0.0;  // score minus any diversity penalty
};

// Expands every hypothesis with its top-`width` tokens. Within a parent,
// candidates are ordered by descending probability, ties to the lower token
// id; that order defines the sibling rank.
inline std::vector<Candidate> expand(const std::vector<Hypothesis>& beam,
                                     const std::vector<StepPrediction>& predictions, int width) {
  if (beam.empty()) throw DataError("expand: empty beam");
  if (beam.size() != predictions.size()) throw DataError("expand: one prediction per hypothesis");
  std::vector<Candidate> out;
  std::vector<int> ids;
  for (size_t b = 0; b < beam.size(); ++b) {
    if (beam[b].finished) throw DataError("expand: finished hypothesis in the beam");
    const Eigen::VectorXd& lp = predictions[b].log_probs;
    int v = static_cast<int>(lp.size());
    ids.resize(v);
    for (int i = 0; i < v; ++i) ids[i] = i;
    int keep = std::min(width, v);
    std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(), [&](int a, int c) {
      if (lp(a) != lp(c)) return lp(a) > lp(c);
      return a < c;
    });
    for (int k = 0; k < keep; ++k) {
      Candidate cand;
      cand.parent = static_cast<int>(b);
      cand.token = ids[k];
      cand.sibling_rank = k + 1;
      cand.score = beam[b].score + lp(ids[k]);
      cand.adjusted = cand.score;
      out.push_back(cand);
    }
  }
  return out;
}

// Applies the sibling-rank penalty. Raw scores are kept untouched.
inline void diverse_rescore(std::vector<Candidate>& candidates, double gamma) {
  for (auto& c : candidates) c.adjusted = c.score - gamma * c.sibling_rank;
}

namespace detail {

// Lexicographic comparison of (parent tokens + appended token) without
// materializing the concatenation.
inline bool candidate_tokens_less(const std::vector<Hypothesis>& beam, const Candidate& a,
                                  const Candidate& b) {
  const TokenSequence& ta = beam[a.parent].tokens;
  const TokenSequence& tb = beam[b.parent].tokens;
  size_t la = ta.size() + 1, lb = tb.size() + 1;
  for (size_t i = 0; i < std::min(la, lb); ++i) {
    int va = i < ta.size() ? ta[i] : a.token;
    int vb = i < tb.size() ? tb[i] : b.token;
    if (va != vb) return va < vb;
  }
  return la < lb;
}

// Indices of the top-k unfinished candidates by adjusted score; ties broken
// by ascending token sequence.
inline std::vector<int> top_k_by_adjusted(const std::vector<Hypothesis>& beam,
                                          const std::vector<Candidate>& cands,
                                          const std::vector<int>& pool, int k) {
  std::vector<int> idx = pool;
  int keep = std::min<int>(k, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), [&](int a, int b) {
    if (cands[a].adjusted != cands[b].adjusted) return cands[a].adjusted > cands[b].adjusted;
    return candidate_tokens_less(beam, cands[a], cands[b]);
  });
  idx.resize(keep);
  return idx;
}

}  // namespace detail

// Routes expanded candidates: end-marker candidates inside the length window
// join the N-best accumulator (below the minimum they are dropped); the best
// K unfinished ones form the next beam. Once the maximum content length is
// reached the survivors are force-terminated into the N-best list instead.
inline std::vector<Hypothesis> prune_and_collect(const Seq2SeqModel& model,
                                                 const EncodedSource& enc,
                                                 const std::vector<Hypothesis>& beam,
                                                 const std::vector<StepPrediction>& predictions,
                                                 const std::vector<Candidate>& candidates,
                                                 const DecodeConfig& cfg, int min_len, int max_len,
                                                 std::vector<Hypothesis>& nbest) {
  std::vector<int> unfinished;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    if (c.token == Vocabulary::kEosId) {
      int content = static_cast<int>(beam[c.parent].tokens.size());
      if (content >= min_len) {
        Hypothesis done;
        done.tokens = beam[c.parent].tokens;
        done.tokens.push_back(Vocabulary::kEosId);
        done.score = c.score;
        done.parent = c.parent;
        done.sibling_rank = c.sibling_rank;
        done.finished = true;
        nbest.push_back(std::move(done));
      }
    } else {
      unfinished.push_back(static_cast<int>(i));
    }
  }

  std::vector<int> survivors =
      detail::top_k_by_adjusted(beam, candidates, unfinished, cfg.beam_size);
  std::vector<Hypothesis> next;
  next.reserve(survivors.size());
  for (int i : survivors) {
    const Candidate& c = candidates[i];
    Hypothesis h;
    h.tokens = beam[c.parent].tokens;
    h.tokens.push_back(c.token);
    h.score = c.score;
    h.state = advance_decoder(model, beam[c.parent].state, c.token,
                              predictions[c.parent].attended);
    h.parent = c.parent;
    h.sibling_rank = c.sibling_rank;
    next.push_back(std::move(h));
  }

  if (!next.empty() && static_cast<int>(next.front().tokens.size()) >= max_len) {
    // Every survivor has the same length; close them all with the end marker.
    for (Hypothesis& h : next) {
      StepPrediction pred = predict_next(model, &enc, h.state);
      h.score += pred.log_probs(Vocabulary::kEosId);
      h.tokens.push_back(Vocabulary::kEosId);
      h.finished = true;
      h.state = DecoderState{};
      nbest.push_back(std::move(h));
    }
    next.clear();
  }
  return next;
}

namespace detail {

inline void sort_nbest(std::vector<Hypothesis>& entries) {
  std::sort(entries.begin(), entries.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
}

}  // namespace detail

inline NBestList beam_search(const Seq2SeqModel& model, const TokenSequence& x,
                             const DecodeConfig& cfg) {
  cfg.validate();
  EncodedSource enc = encode_source(model, x, true);
  int nx = static_cast<int>(x.size());
  int min_len = std::max(1, static_cast<int>(std::ceil(cfg.min_length_ratio * nx)));
  int max_len = static_cast<int>(std::floor(cfg.max_length_ratio * nx));
  if (max_len < min_len) throw DataError("decode failed: empty length window");

  NBestList result;
  result.source = x;
  std::vector<Hypothesis> beam(1);
  beam[0].state = initial_decoder_state(enc);

  while (!beam.empty()) {
    std::vector<StepPrediction> predictions;
    predictions.reserve(beam.size());
    for (const Hypothesis& h : beam) predictions.push_back(predict_next(model, &enc, h.state));
    std::vector<Candidate> candidates = expand(beam, predictions, cfg.width());
    if (cfg.diversity_penalty > 0) diverse_rescore(candidates, cfg.diversity_penalty);
    beam = prune_and_collect(model, enc, beam, predictions, candidates, cfg, min_len, max_len,
                             result.entries);
  }
  if (result.entries.empty()) throw DataError("decode failed: no finished hypothesis");
  detail::sort_nbest(result.entries);
  return result;
}

// Scores every content sequence over the target alphabet (end marker
// excluded) with lengths inside [min_len, max_len]. Intended for tiny
// vocabularies; refuses search spaces beyond one million sequences.
inline NBestList exhaustive_search(const Seq2SeqModel& model, const TokenSequence& x, int min_len,
                                   int max_len) {
  if (min_len < 1 || max_len < min_len) throw DataError("bad exhaustive length bounds");
  int last = model.target_vocab() - 1;  // alphabet is every id except the end marker
  double count = 0;
  for (int len = min_len; len <= max_len; ++len)
    count += std::pow(static_cast<double>(last), len);
  if (count > 1e6) throw DataError("exhaustive search space too large");

  NBestList result;
  result.source = x;
  for (int len = min_len; len <= max_len; ++len) {
    TokenSequence current(len, 1);
    while (true) {
      TokenSequence y = current;
      y.push_back(Vocabulary::kEosId);
      Hypothesis h;
      h.score = sequence_logprob(model, x, y);
      h.tokens = std::move(y);
      h.finished = true;
      result.entries.push_back(std::move(h));

      int pos = len - 1;
      while (pos >= 0 && current[pos] == last) current[pos--] = 1;
      if (pos < 0) break;
      ++current[pos];
    }
  }
  detail::sort_nbest(result.entries);
  return result;
}

// N-best list file format, one entry per line:
//   sentence_id ||| tokens ||| logprob ||| rank
// Tokens are the content sequence (no end marker); rank is 1-based.
struct NBestFileEntry {
  int sent_id = 0;
  std::vector<std::string> tokens;
  double logprob = 0.0;
  int rank = 0;
};

inline void append_nbest(std::ostream& out, int sent_id, const NBestList& list,
                         const Vocabulary& target_vocab) {
  for (size_t r = 0; r < list.entries.size(); ++r) {
    const Hypothesis& h = list.entries[r];
    TokenSequence content(h.tokens.begin(), h.tokens.end() - (h.finished ? 1 : 0));
    out << sent_id << " ||| " << join(target_vocab.decode(content)) << " ||| "
        << fmt_g17(h.score) << " ||| " << (r + 1) << '\n';
  }
}

inline std::vector<NBestFileEntry> load_nbest(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<NBestFileEntry> out;
  out.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string where = path + ":" + std::to_string(i + 1);
    auto fields = split_on(lines[i], " ||| ");
    if (fields.size() != 4) throw DataError(where + ": expected 4 ||| fields");
    NBestFileEntry e;
    e.sent_id = static_cast<int>(parse_long(fields[0], where));
    e.tokens = split_whitespace(fields[1]);
    e.logprob = parse_double(fields[2], where);
    e.rank = static_cast<int>(parse_long(fields[3], where));
    if (e.sent_id < 0 || e.rank < 1) throw DataError(where + ": bad id or rank");
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError(path + ": empty n-best file");
  return out;
}

}  // namespace mmimt
