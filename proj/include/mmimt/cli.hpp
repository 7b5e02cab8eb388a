#pragma once

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mmimt/core.hpp"
#include "mmimt/decoding.hpp"
#include "mmimt/mert.hpp"
#include "mmimt/metrics.hpp"
#include "mmimt/model.hpp"
#include "mmimt/postprocess.hpp"
#include "mmimt/rerank.hpp"
#include "mmimt/rng.hpp"
#include "mmimt/train.hpp"
#include "mmimt/util.hpp"

// Command-line pipeline: generate data, train the three models, decode,
// extract features, tune weights, rerank, evaluate, and repair unknown
// tokens. Every command is a pure function of its flags, input files, and
// seed; rerunning one produces byte-identical artifacts.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

namespace mmimt {
namespace cli {

struct GenDataArgs {
  int vocab = 20;
  std::string rule = "identity";
  int min_len = 3;
  int max_len = 8;
  double noise = 0.0;
  int pairs = 0;
  std::string prefix;
  std::uint64_t seed = 1;
};

inline void cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  SyntheticTaskSpec spec = make_synthetic_task(a.vocab, parse_reorder_rule(a.rule), a.min_len,
                                               a.max_len, a.noise, derive_seed(a.seed, "gen-data"));
  ParallelCorpus corpus = generate_synthetic_corpus(spec, a.pairs);
  Vocabulary vocab = synthetic_vocabulary(spec);
  std::vector<std::vector<std::string>> src, tgt;
  src.reserve(corpus.pairs.size());
  tgt.reserve(corpus.pairs.size());
  for (const auto& [x, y] : corpus.pairs) {
    src.push_back(vocab.decode(x));
    tgt.push_back(vocab.decode(y));
  }
  save_sentences(a.prefix + ".src", src);
  save_sentences(a.prefix + ".tgt", tgt);
  save_sentences(a.prefix + ".mono", tgt);
  std::vector<std::string> table;
  table.reserve(a.vocab);
  for (int i = 0; i < a.vocab; ++i)
    table.push_back(synthetic_token_name(i) + "\t" + synthetic_token_name(spec.substitution[i]));
  write_lines(a.prefix + ".subst", table);
  out << "wrote " << corpus.pairs.size() << " pairs to " << a.prefix << ".{src,tgt,mono,subst}\n";
}

struct TrainArgs {
  std::string src, tgt, model_path;
  int layers = 1;
  int hidden = 32;
  bool attention = true;
  int vocab_cap = 10000;
  TrainConfig cfg;
  std::uint64_t seed = 1;
};

inline void report_loss(const TrainResult& r, std::ostream& out) {
  for (size_t e = 0; e < r.epoch_loss.size(); ++e)
    out << "epoch " << (e + 1) << " loss=" << fmt_g17(r.epoch_loss[e]) << '\n';
}

// `backward` flips which side the model encodes but shares the stage seed
// with forward training, so training backward on (s, t) writes exactly the
// parameters of training forward on (t, s).
inline void cmd_train(TrainArgs a, bool backward, std::ostream& out) {
  auto src_lines = load_sentences(a.src);
  auto tgt_lines = load_sentences(a.tgt);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("source and target line counts differ");
  Vocabulary src_vocab = build_vocabulary(src_lines, a.vocab_cap);
  Vocabulary tgt_vocab = build_vocabulary(tgt_lines, a.vocab_cap);
  ParallelCorpus corpus;
  auto xs = encode_sentences(src_vocab, src_lines);
  auto ys = encode_sentences(tgt_vocab, tgt_lines);
  corpus.pairs.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i)
    corpus.pairs.push_back({std::move(xs[i]), std::move(ys[i])});

  a.cfg.seed = derive_seed(a.seed, "train");
  const Vocabulary& model_src = backward ? tgt_vocab : src_vocab;
  const Vocabulary& model_tgt = backward ? src_vocab : tgt_vocab;
  Seq2SeqModel model =
      make_seq2seq(model_src.size(), model_tgt.size(), a.layers, a.hidden, a.attention,
                   backward ? Direction::backward : Direction::forward);
  TrainResult r = backward ? train_backward(model, corpus, a.cfg) : train(model, corpus, a.cfg);
  report_loss(r, out);
  save_model(model, a.model_path);
  model_src.save(a.model_path + ".src.vocab");
  model_tgt.save(a.model_path + ".tgt.vocab");
  out << "saved " << a.model_path << '\n';
}

struct LmArgs {
  std::string text, model_path, parallel_vocab;
  int layers = 1;
  int hidden = 32;
  int vocab_cap = 10000;
  TrainConfig cfg;
  std::uint64_t seed = 1;
};

inline void cmd_train_lm(LmArgs a, std::ostream& out) {
  auto lines = load_sentences(a.text);
  Vocabulary vocab = a.parallel_vocab.empty() ? build_vocabulary(lines, a.vocab_cap)
                                              : Vocabulary::load(a.parallel_vocab);
  auto sentences = encode_sentences(vocab, lines);
  Seq2SeqModel model = make_language_model(vocab.size(), a.layers, a.hidden);
  a.cfg.seed = derive_seed(a.seed, "train-lm");
  TrainResult r = train_lm(model, sentences, a.cfg);
  out << "kept " << r.kept_sentences << " of " << lines.size() << " sentences\n";
  report_loss(r, out);
  save_model(model, a.model_path);
  vocab.save(a.model_path + ".vocab");
  out << "saved " << a.model_path << '\n';
}

struct DecodeArgs {
  std::string model_path, input, output;
  DecodeConfig cfg;
};

inline int cmd_decode(const DecodeArgs& a, std::ostream& out, std::ostream& err) {
  Seq2SeqModel model = load_model(a.model_path);
  if (model.is_language_model()) throw DataError("a language model cannot decode");
  Vocabulary src_vocab = Vocabulary::load(a.model_path + ".src.vocab");
  Vocabulary tgt_vocab = Vocabulary::load(a.model_path + ".tgt.vocab");
  auto lines = load_sentences(a.input);
  std::ofstream file(a.output);
  if (!file) throw DataError("cannot write " + a.output);
  long failures = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    try {
      NBestList list = beam_search(model, src_vocab.encode(lines[i]), a.cfg);
      append_nbest(file, static_cast<int>(i), list, tgt_vocab);
    } catch (const DataError& e) {
      err << "line " << (i + 1) << ": " << e.what() << '\n';
      ++failures;
    }
  }
  out << "decoded " << (lines.size() - failures) << " of " << lines.size() << " sentences\n";
  return failures > 0 ? 2 : 0;
}

struct FeaturesArgs {
  std::string nbest, source, forward, backward, lm, output;
};

inline void cmd_features(const FeaturesArgs& a, std::ostream& out) {
  auto entries = load_nbest(a.nbest);
  auto src_lines = load_sentences(a.source);
  Seq2SeqModel fwd = load_model(a.forward);
  Seq2SeqModel bwd = load_model(a.backward);
  Seq2SeqModel lm = load_model(a.lm);
  if (bwd.source_vocab() != fwd.target_vocab() || bwd.target_vocab() != fwd.source_vocab())
    throw DataError("backward model vocabulary shapes do not mirror the forward model");
  if (!lm.is_language_model() || lm.target_vocab() != fwd.target_vocab())
    throw DataError("language model vocabulary does not match the forward target side");
  Vocabulary src_vocab = Vocabulary::load(a.forward + ".src.vocab");
  Vocabulary tgt_vocab = Vocabulary::load(a.forward + ".tgt.vocab");
  std::ofstream file(a.output);
  if (!file) throw DataError("cannot write " + a.output);
  for (const auto& e : entries) {
    if (e.sent_id >= static_cast<int>(src_lines.size()))
      throw DataError("n-best sentence id " + std::to_string(e.sent_id) + " has no source line");
    TokenSequence x = src_vocab.encode(src_lines[e.sent_id]);
    TokenSequence y = tgt_vocab.encode(e.tokens);
    y.push_back(Vocabulary::kEosId);
    append_features(file, e.sent_id, e.tokens, extract_features(x, y, fwd, bwd, lm));
  }
  out << "wrote " << entries.size() << " feature lines\n";
}

struct TuneArgs {
  std::string features, refs, output;
  MertConfig cfg;
  std::uint64_t seed = 1;
};

inline void cmd_tune(TuneArgs a, std::ostream& out) {
  auto feats = load_features(a.features);
  auto refs = load_sentences(a.refs);
  std::map<int, TuningSentence> grouped;
  for (const auto& e : feats) {
    if (e.sent_id >= static_cast<int>(refs.size()))
      throw DataError("feature sentence id " + std::to_string(e.sent_id) +
                      " has no reference line");
    TuningCandidate c;
    c.features = e.features;
    c.stats = sentence_bleu_stats(e.tokens, {refs[e.sent_id]});
    grouped[e.sent_id].candidates.push_back(std::move(c));
  }
  std::vector<TuningSentence> dev;
  dev.reserve(grouped.size());
  for (auto& [id, s] : grouped) dev.push_back(std::move(s));
  a.cfg.seed = derive_seed(a.seed, "tune");
  MertResult result = mert_tune(dev, a.cfg);
  save_weights(a.output, result.weights);
  out << "dev_bleu=" << fmt_g17(result.bleu) << '\n';
  out << "saved " << a.output << '\n';
}

struct RerankArgs {
  std::string features, weights, output;
};

inline void cmd_rerank(const RerankArgs& a, std::ostream& out) {
  auto feats = load_features(a.features);
  RerankWeights w = load_weights(a.weights);
  std::map<int, std::vector<FeatureFileEntry>> grouped;
  for (auto& e : feats) {
    int id = e.sent_id;
    grouped[id].push_back(std::move(e));
  }
  std::vector<std::vector<std::string>> top;
  top.reserve(grouped.size());
  for (auto& [id, group] : grouped) {
    std::vector<FeatureVector> fs;
    fs.reserve(group.size());
    for (const auto& g : group) fs.push_back(g.features);
    top.push_back(group[rerank_order(fs, w)[0]].tokens);
  }
  save_sentences(a.output, top);
  out << "wrote " << top.size() << " sentences\n";
}

struct EvalArgs {
  std::string candidates, refs, nbest;
};

inline void cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto cands = load_sentences(a.candidates);
  auto refs = load_sentences(a.refs);
  if (cands.size() != refs.size())
    throw DataError("candidate and reference line counts differ");
  BleuReport r = corpus_bleu(cands, refs);
  for (const auto& line : format_bleu_report(r)) out << line << '\n';

  std::vector<std::vector<std::vector<std::string>>> lists;
  if (!a.nbest.empty()) {
    std::map<int, std::vector<std::vector<std::string>>> grouped;
    for (auto& e : load_nbest(a.nbest)) grouped[e.sent_id].push_back(std::move(e.tokens));
    lists.reserve(grouped.size());
    for (auto& [id, list] : grouped) lists.push_back(std::move(list));
  } else {
    lists.reserve(cands.size());
    for (const auto& c : cands) lists.push_back({c});
  }
  for (const auto& line : format_diversity_report(diversity_report(lists))) out << line << '\n';
}

struct BuildDictArgs {
  std::string model, src, tgt, output;
};

inline void cmd_build_dict(const BuildDictArgs& a, std::ostream& out) {
  Seq2SeqModel model = load_model(a.model);
  Vocabulary src_vocab = Vocabulary::load(a.model + ".src.vocab");
  Vocabulary tgt_vocab = Vocabulary::load(a.model + ".tgt.vocab");
  auto src_lines = load_sentences(a.src);
  auto tgt_lines = load_sentences(a.tgt);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("source and target line counts differ");
  ParallelCorpus corpus;
  auto xs = encode_sentences(src_vocab, src_lines);
  auto ys = encode_sentences(tgt_vocab, tgt_lines);
  corpus.pairs.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i)
    corpus.pairs.push_back({std::move(xs[i]), std::move(ys[i])});
  auto dict = build_dictionary(extract_alignments(model, corpus), corpus);
  save_dictionary(a.output, dictionary_strings(dict, src_vocab, tgt_vocab));
  out << "dictionary entries: " << dict.entries.size() << '\n';
}

struct ReplaceUnkArgs {
  std::string model, source, input, dict, output;
};

inline void cmd_replace_unk(const ReplaceUnkArgs& a, std::ostream& out) {
  Seq2SeqModel model = load_model(a.model);
  Vocabulary src_vocab = Vocabulary::load(a.model + ".src.vocab");
  Vocabulary tgt_vocab = Vocabulary::load(a.model + ".tgt.vocab");
  auto src_lines = load_sentences(a.source);
  auto trans_lines = load_sentences(a.input);
  if (src_lines.size() != trans_lines.size())
    throw DataError("source and translation line counts differ");
  StringDictionary dict = load_dictionary(a.dict);
  std::vector<std::vector<std::string>> fixed;
  fixed.reserve(trans_lines.size());
  long rewritten = 0;
  for (size_t i = 0; i < trans_lines.size(); ++i) {
    AlignmentRecord align = align_translation(model, src_vocab.encode(src_lines[i]),
                                              tgt_vocab.encode(trans_lines[i]));
    auto repaired = replace_unk(trans_lines[i], src_lines[i], align, dict);
    for (size_t t = 0; t < repaired.size(); ++t)
      if (repaired[t] != trans_lines[i][t]) ++rewritten;
    fixed.push_back(std::move(repaired));
  }
  save_sentences(a.output, fixed);
  out << "rewrote " << rewritten << " tokens in " << fixed.size() << " sentences\n";
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sequence-to-sequence decoding and reranking toolkit"};
  app.name("mmimt");
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file with one [subcommand] section per command");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic parallel corpus");
  gen->add_option("--vocab", gd.vocab, "content vocabulary size");
  gen->add_option("--rule", gd.rule, "reordering rule")
      ->check(CLI::IsMember({"identity", "reversal"}));
  gen->add_option("--min-len", gd.min_len, "minimum sentence length");
  gen->add_option("--max-len", gd.max_len, "maximum sentence length");
  gen->add_option("--noise", gd.noise, "target-side substitution noise rate");
  gen->add_option("--pairs", gd.pairs, "number of sentence pairs")->required();
  gen->add_option("--out-prefix", gd.prefix, "output path prefix")->required();
  gen->add_option("--seed", gd.seed, "random seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the forward translation model");
  TrainArgs trb;
  auto* train_bwd_cmd =
      app.add_subcommand("train-backward", "train the source-given-target model");
  for (auto [sub, a] : {std::pair{train_cmd, &tr}, std::pair{train_bwd_cmd, &trb}}) {
    sub->add_option("--src", a->src, "source text file")->required();
    sub->add_option("--tgt", a->tgt, "target text file")->required();
    sub->add_option("--model", a->model_path, "output model path")->required();
    sub->add_option("--layers", a->layers, "LSTM layers per side");
    sub->add_option("--hidden", a->hidden, "hidden units");
    sub->add_flag("--attention,!--no-attention", a->attention, "use attention and input feeding");
    sub->add_option("--vocab-cap", a->vocab_cap, "maximum vocabulary size");
    sub->add_option("--epochs", a->cfg.epochs, "training epochs");
    sub->add_option("--batch", a->cfg.batch_size, "batch size");
    sub->add_option("--lr", a->cfg.learning_rate, "learning rate");
    sub->add_option("--clip", a->cfg.clip_threshold, "gradient norm clip");
    sub->add_option("--halve-after", a->cfg.halve_after, "epoch after which the rate halves");
    sub->add_option("--init-range", a->cfg.init_half_range, "uniform init half range");
    sub->add_option("--seed", a->seed, "random seed");
  }

  LmArgs lm;
  auto* lm_cmd = app.add_subcommand("train-lm", "train the target language model");
  lm_cmd->add_option("--text", lm.text, "monolingual text file")->required();
  lm_cmd->add_option("--model", lm.model_path, "output model path")->required();
  lm_cmd->add_option("--parallel-vocab", lm.parallel_vocab,
                     "vocabulary file from the translation model; enables the UNK filter");
  lm_cmd->add_option("--layers", lm.layers, "LSTM layers");
  lm_cmd->add_option("--hidden", lm.hidden, "hidden units");
  lm_cmd->add_option("--vocab-cap", lm.vocab_cap, "maximum vocabulary size");
  lm_cmd->add_option("--epochs", lm.cfg.epochs, "training epochs");
  lm_cmd->add_option("--batch", lm.cfg.batch_size, "batch size");
  lm_cmd->add_option("--lr", lm.cfg.learning_rate, "learning rate");
  lm_cmd->add_option("--clip", lm.cfg.clip_threshold, "gradient norm clip");
  lm_cmd->add_option("--halve-after", lm.cfg.halve_after, "epoch after which the rate halves");
  lm_cmd->add_option("--init-range", lm.cfg.init_half_range, "uniform init half range");
  lm_cmd->add_option("--seed", lm.seed, "random seed");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "beam-search an input file into an n-best list");
  dec_cmd->add_option("--model", dec.model_path, "translation model path")->required();
  dec_cmd->add_option("--input", dec.input, "source text file")->required();
  dec_cmd->add_option("--output", dec.output, "n-best output path")->required();
  dec_cmd->add_option("--beam", dec.cfg.beam_size, "beam size");
  dec_cmd->add_option("--diversity", dec.cfg.diversity_penalty, "sibling-rank penalty");
  dec_cmd->add_option("--min-ratio", dec.cfg.min_length_ratio, "minimum length ratio");
  dec_cmd->add_option("--max-ratio", dec.cfg.max_length_ratio, "maximum length ratio");
  dec_cmd->add_option("--width", dec.cfg.expansion_width, "expansions per hypothesis (0 = beam)");

  FeaturesArgs fe;
  auto* fe_cmd = app.add_subcommand("features", "score n-best candidates with all three models");
  fe_cmd->add_option("--nbest", fe.nbest, "n-best file")->required();
  fe_cmd->add_option("--source", fe.source, "source text file")->required();
  fe_cmd->add_option("--forward", fe.forward, "forward model path")->required();
  fe_cmd->add_option("--backward", fe.backward, "backward model path")->required();
  fe_cmd->add_option("--lm", fe.lm, "language model path")->required();
  fe_cmd->add_option("--output", fe.output, "features output path")->required();

  TuneArgs tu;
  auto* tu_cmd = app.add_subcommand("tune", "fit reranking weights to development BLEU");
  tu_cmd->add_option("--features", tu.features, "features file")->required();
  tu_cmd->add_option("--refs", tu.refs, "reference text file")->required();
  tu_cmd->add_option("--output", tu.output, "weights output path")->required();
  tu_cmd->add_option("--restarts", tu.cfg.restarts, "random restarts");
  tu_cmd->add_option("--max-passes", tu.cfg.max_passes, "coordinate sweeps per start");
  tu_cmd->add_option("--restart-range", tu.cfg.restart_range, "restart weight range");
  tu_cmd->add_option("--seed", tu.seed, "random seed");

  RerankArgs rr;
  auto* rr_cmd = app.add_subcommand("rerank", "write the top candidate under the given weights");
  rr_cmd->add_option("--features", rr.features, "features file")->required();
  rr_cmd->add_option("--weights", rr.weights, "weights file")->required();
  rr_cmd->add_option("--output", rr.output, "translation output path")->required();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "score candidates against references");
  ev_cmd->add_option("--candidates", ev.candidates, "candidate text file")->required();
  ev_cmd->add_option("--refs", ev.refs, "reference text file")->required();
  ev_cmd->add_option("--nbest", ev.nbest, "n-best file for the diversity report");

  BuildDictArgs bd;
  auto* bd_cmd = app.add_subcommand("build-dict", "extract a dictionary from alignments");
  bd_cmd->add_option("--model", bd.model, "attention model path")->required();
  bd_cmd->add_option("--src", bd.src, "source text file")->required();
  bd_cmd->add_option("--tgt", bd.tgt, "target text file")->required();
  bd_cmd->add_option("--output", bd.output, "dictionary output path")->required();

  ReplaceUnkArgs ru;
  auto* ru_cmd = app.add_subcommand("replace-unk", "rewrite unknown tokens via alignments");
  ru_cmd->add_option("--model", ru.model, "attention model path")->required();
  ru_cmd->add_option("--source", ru.source, "source text file")->required();
  ru_cmd->add_option("--input", ru.input, "translation text file")->required();
  ru_cmd->add_option("--dict", ru.dict, "dictionary file")->required();
  ru_cmd->add_option("--output", ru.output, "repaired output path")->required();

  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      cmd_gen_data(gd, out);
    } else if (train_cmd->parsed()) {
      cmd_train(tr, false, out);
    } else if (train_bwd_cmd->parsed()) {
      cmd_train(trb, true, out);
    } else if (lm_cmd->parsed()) {
      cmd_train_lm(lm, out);
    } else if (dec_cmd->parsed()) {
      return cmd_decode(dec, out, err);
    } else if (fe_cmd->parsed()) {
      cmd_features(fe, out);
    } else if (tu_cmd->parsed()) {
      cmd_tune(tu, out);
    } else if (rr_cmd->parsed()) {
      cmd_rerank(rr, out);
    } else if (ev_cmd->parsed()) {
      cmd_eval(ev, out);
    } else if (bd_cmd->parsed()) {
      cmd_build_dict(bd, out);
    } else if (ru_cmd->parsed()) {
      cmd_replace_unk(ru, out);
    }
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace cli
}  // namespace mmimt
