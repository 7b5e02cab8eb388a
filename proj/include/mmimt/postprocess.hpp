#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "mmimt/core.hpp"
#include "mmimt/model.hpp"
#include "mmimt/util.hpp"

// Attention-based unknown-token repair: hard alignments from an attention
// model, a most-frequent-pairing dictionary over a parallel corpus, and the
// rewrite that sends each unknown target token back to its aligned source
// token's dictionary translation (or the source token itself as fallback).

namespace mmimt {

// One source position per target content token.
using AlignmentRecord = std::vector<int>;

// Forced-decodes the content translation and returns its hard alignment.
inline AlignmentRecord align_translation(const Seq2SeqModel& model, const TokenSequence& x,
                                         const TokenSequence& y_content) {
  TokenSequence y = y_content;
  y.push_back(Vocabulary::kEosId);
  return forced_decode(model, x, y).alignment;
}

inline std::vector<AlignmentRecord> extract_alignments(const Seq2SeqModel& model,
                                                       const ParallelCorpus& corpus) {
  std::vector<AlignmentRecord> out;
  out.reserve(corpus.pairs.size());
  for (const auto& [x, y] : corpus.pairs) out.push_back(align_translation(model, x, y));
  return out;
}

struct DictEntry {
  int target = 0;
  long count = 0;
};

// Each source id maps to the target id it is most often aligned with; count
// ties break toward the lower target id. Reserved ids never enter.
struct BilingualDictionary {
  std::map<int, DictEntry> entries;
};

inline BilingualDictionary build_dictionary(const std::vector<AlignmentRecord>& alignments,
                                            const ParallelCorpus& corpus) {
  if (alignments.size() != corpus.pairs.size())
    throw DataError("alignments do not cover the corpus");
  std::map<int, std::map<int, long>> counts;
  for (size_t i = 0; i < alignments.size(); ++i) {
    const auto& [x, y] = corpus.pairs[i];
    const AlignmentRecord& align = alignments[i];
    if (align.size() != y.size()) throw DataError("alignment length mismatch");
    for (size_t t = 0; t < y.size(); ++t) {
      int pos = align[t];
      if (pos < 0 || pos >= static_cast<int>(x.size()))
        throw DataError("alignment position out of range");
      int src = x[pos];
      int tgt = y[t];
      if (src < Vocabulary::kReservedIds || tgt < Vocabulary::kReservedIds) continue;
      ++counts[src][tgt];
    }
  }
  BilingualDictionary dict;
  for (const auto& [src, tallies] : counts) {
    DictEntry best;
    for (const auto& [tgt, count] : tallies) {
      if (count > best.count || (count == best.count && tgt < best.target)) {
        best.target = tgt;
        best.count = count;
      }
    }
    dict.entries[src] = best;
  }
  return dict;
}

// String-level dictionary as stored on disk, independent of any vocabulary.
using StringDictionary = std::map<std::string, std::pair<std::string, long>>;

inline StringDictionary dictionary_strings(const BilingualDictionary& dict,
                                           const Vocabulary& source_vocab,
                                           const Vocabulary& target_vocab) {
  StringDictionary out;
  for (const auto& [src, entry] : dict.entries)
    out[source_vocab.token(src)] = {target_vocab.token(entry.target), entry.count};
  return out;
}

inline void save_dictionary(const std::string& path, const StringDictionary& dict) {
  std::vector<std::string> lines;
  lines.reserve(dict.size());
  for (const auto& [src, entry] : dict)
    lines.push_back(src + "\t" + entry.first + "\t" + std::to_string(entry.second));
  write_lines(path, lines);
}

inline StringDictionary load_dictionary(const std::string& path) {
  StringDictionary out;
  auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string where = path + ":" + std::to_string(i + 1);
    auto fields = split_on(lines[i], "\t");
    if (fields.size() != 3) throw DataError(where + ": expected 3 tab fields");
    if (fields[0].empty() || fields[1].empty()) throw DataError(where + ": empty token");
    long count = parse_long(fields[2], where);
    if (count < 1) throw DataError(where + ": bad count");
    if (!out.emplace(fields[0], std::make_pair(fields[1], count)).second)
      throw DataError(where + ": duplicate source token");
  }
  return out;
}

// Rewrites unknown markers using the aligned raw source token's dictionary
// translation; source tokens missing from the dictionary copy through. All
// other tokens and the sequence length are untouched.
inline std::vector<std::string> replace_unk(const std::vector<std::string>& translation,
                                            const std::vector<std::string>& source_tokens,
                                            const AlignmentRecord& alignment,
                                            const StringDictionary& dict) {
  if (alignment.size() != translation.size())
    throw DataError("alignment length does not match the translation");
  std::vector<std::string> out = translation;
  for (size_t t = 0; t < out.size(); ++t) {
    if (out[t] != Vocabulary::kUnkToken) continue;
    int pos = alignment[t];
    if (pos < 0 || pos >= static_cast<int>(source_tokens.size()))
      throw DataError("alignment position out of range");
    const std::string& src = source_tokens[pos];
    auto it = dict.find(src);
    out[t] = it != dict.end() ? it->second.first : src;
  }
  return out;
}

}  // namespace mmimt
