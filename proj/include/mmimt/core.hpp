#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmimt/rng.hpp"
#include "mmimt/util.hpp"

namespace mmimt {

using TokenSequence = std::vector<int>;

// Token ids with two reserved entries: id 0 is the sentence-end marker, id 1
// stands for any out-of-vocabulary token. Sentences are stored without the
// end marker; scoring appends it where needed.
class Vocabulary {
 public:
  static constexpr int kEosId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kReservedIds = 2;
  static constexpr const char* kEosToken = "</s>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary() {
    add(kEosToken);
    add(kUnkToken);
  }

  explicit Vocabulary(const std::vector<std::string>& content_tokens) : Vocabulary() {
    for (const auto& t : content_tokens) add(t);
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  // Returns the id for a token, or the unknown id if absent.
  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
    return tokens_[id];
  }

  TokenSequence encode(const std::vector<std::string>& tokens) const {
    TokenSequence out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  std::vector<std::string> decode(const TokenSequence& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

  void save(const std::string& path) const { write_lines(path, tokens_); }

  static Vocabulary load(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.size() < 2 || lines[0] != kEosToken || lines[1] != kUnkToken)
      throw DataError("vocabulary file " + path + " must start with the reserved tokens");
    Vocabulary v;
    for (size_t i = 2; i < lines.size(); ++i) {
      if (lines[i].empty()) throw DataError("empty token at line " + std::to_string(i + 1) + " of " + path);
      if (!v.add(lines[i])) throw DataError("duplicate token '" + lines[i] + "' in " + path);
    }
    return v;
  }

 private:
  bool add(const std::string& token) {
    if (ids_.count(token)) return false;
    ids_.emplace(token, size());
    tokens_.push_back(token);
    return true;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Selects the most frequent tokens from tokenized sentences; ties broken
// lexicographically. max_size counts the two reserved entries.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                                   int max_size) {
  if (max_size < 3) throw DataError("vocabulary size must be at least 3");
  std::map<std::string, long> counts;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) {
      if (tok == Vocabulary::kEosToken || tok == Vocabulary::kUnkToken) continue;
      ++counts[tok];
    }
  if (counts.empty()) throw DataError("empty corpus");
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  size_t keep = std::min(items.size(), static_cast<size_t>(max_size - 2));
  std::vector<std::string> selected;
  selected.reserve(keep);
  for (size_t i = 0; i < keep; ++i) selected.push_back(items[i].first);
  return Vocabulary(selected);
}

struct ParallelCorpus {
  std::vector<std::pair<TokenSequence, TokenSequence>> pairs;

  size_t size() const { return pairs.size(); }
};

inline ParallelCorpus swapped(const ParallelCorpus& corpus) {
  ParallelCorpus out;
  out.pairs.reserve(corpus.size());
  for (const auto& [src, tgt] : corpus.pairs) out.pairs.emplace_back(tgt, src);
  return out;
}

enum class ReorderRule { identity, reversal };

inline ReorderRule parse_reorder_rule(const std::string& s) {
  if (s == "identity") return ReorderRule::identity;
  if (s == "reversal") return ReorderRule::reversal;
  throw DataError("unknown reorder rule '" + s + "'");
}

// Describes a synthetic translation task: the target is the source passed
// through a token substitution, reordered, with optional per-token noise.
// Content tokens are named t0..t{n-1}; substitution[i] gives the image of
// content token i and must be a bijection.
struct SyntheticTaskSpec {
  int vocab_size = 20;
  std::vector<int> substitution;
  ReorderRule rule = ReorderRule::reversal;
  int min_length = 3;
  int max_length = 8;
  double noise_rate = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size < 2) throw DataError("synthetic task needs at least 2 content tokens");
    if (static_cast<int>(substitution.size()) != vocab_size)
      throw DataError("substitution table size does not match vocabulary size");
    std::vector<char> seen(vocab_size, 0);
    for (int v : substitution) {
      if (v < 0 || v >= vocab_size || seen[v]) throw DataError("substitution table is not a bijection");
      seen[v] = 1;
    }
    if (min_length < 1 || max_length < min_length) throw DataError("bad sentence length range");
    if (noise_rate < 0.0 || noise_rate > 1.0) throw DataError("noise rate must be in [0, 1]");
  }
};

// Builds a task spec with a seed-derived random substitution permutation.
inline SyntheticTaskSpec make_synthetic_task(int vocab_size, ReorderRule rule, int min_length,
                                             int max_length, double noise_rate,
                                             std::uint64_t seed) {
  SyntheticTaskSpec spec;
  spec.vocab_size = vocab_size;
  spec.rule = rule;
  spec.min_length = min_length;
  spec.max_length = max_length;
  spec.noise_rate = noise_rate;
  spec.seed = seed;
  if (vocab_size >= 2) {
    spec.substitution.resize(vocab_size);
    for (int i = 0; i < vocab_size; ++i) spec.substitution[i] = i;
    Rng rng(derive_seed(seed, "substitution"));
    rng.shuffle(spec.substitution);
  }
  spec.validate();
  return spec;
}

inline std::string synthetic_token_name(int content_index) {
  return "t" + std::to_string(content_index);
}

// The vocabulary shared by both sides of a synthetic task: reserved entries
// followed by t0..t{n-1}, so content token i has id i + 2.
inline Vocabulary synthetic_vocabulary(const SyntheticTaskSpec& spec) {
  std::vector<std::string> names;
  names.reserve(spec.vocab_size);
  for (int i = 0; i < spec.vocab_size; ++i) names.push_back(synthetic_token_name(i));
  return Vocabulary(names);
}

// Generates source/target pairs. Ids are under synthetic_vocabulary(spec):
// content token i maps to id i + 2. Deterministic in (spec, n_pairs).
inline ParallelCorpus generate_synthetic_corpus(const SyntheticTaskSpec& spec, int n_pairs) {
  spec.validate();
  if (n_pairs < 1) throw DataError("corpus must contain at least one pair");
  Rng rng(derive_seed(spec.seed, "corpus"));
  ParallelCorpus corpus;
  corpus.pairs.reserve(n_pairs);
  for (int p = 0; p < n_pairs; ++p) {
    int len = spec.min_length + rng.uniform_int(spec.max_length - spec.min_length + 1);
    TokenSequence src(len);
    for (int i = 0; i < len; ++i) src[i] = 2 + rng.uniform_int(spec.vocab_size);
    TokenSequence tgt(len);
    for (int i = 0; i < len; ++i) tgt[i] = 2 + spec.substitution[src[i] - 2];
    if (spec.rule == ReorderRule::reversal) std::reverse(tgt.begin(), tgt.end());
    for (int i = 0; i < len; ++i)
      if (rng.uniform() < spec.noise_rate) tgt[i] = 2 + rng.uniform_int(spec.vocab_size);
    corpus.pairs.emplace_back(std::move(src), std::move(tgt));
  }
  return corpus;
}

// Plain-text corpus files: one sentence per line, tokens separated by single
// spaces. Empty lines are rejected.
inline std::vector<std::vector<std::string>> load_sentences(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i) {
    auto toks = split_whitespace(lines[i]);
    if (toks.empty())
      throw DataError(path + ":" + std::to_string(i + 1) + ": empty sentence");
    out.push_back(std::move(toks));
  }
  if (out.empty()) throw DataError(path + ": empty corpus");
  return out;
}

inline void save_sentences(const std::string& path,
                           const std::vector<std::vector<std::string>>& sentences) {
  std::vector<std::string> lines;
  lines.reserve(sentences.size());
  for (const auto& s : sentences) lines.push_back(join(s));
  write_lines(path, lines);
}

inline std::vector<TokenSequence> encode_sentences(
    const Vocabulary& vocab, const std::vector<std::vector<std::string>>& sentences) {
  std::vector<TokenSequence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(vocab.encode(s));
  return out;
}

}  // namespace mmimt
