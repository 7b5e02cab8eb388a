// Acceptance suite: one pass/fail line per criterion, exit 0 only if every
// requested criterion passes. Expensive shared artifacts (the two trained
// reversal models and their evaluation data) are built once by
//   acceptance setup --dir DIR
// and the checks run with
//   acceptance run [criterion] --dir DIR
// where a bare `run` executes all criteria in order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmimt/cli.hpp"
#include "reference_beam.hpp"

namespace fs = std::filesystem;
using namespace mmimt;

namespace {

constexpr std::uint64_t kTaskSeed = 71;

struct Failure {
  std::string reason;
};

void require(bool ok, const std::string& reason) {
  if (!ok) throw Failure{reason};
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct SetupPaths {
  fs::path dir;

  std::string f(const std::string& name) const { return (dir / name).string(); }

  void check_ready() const {
    require(fs::exists(dir / "ready"),
            "setup artifacts missing in " + dir.string() + "; run `acceptance setup` first");
  }
};

// ---------------------------------------------------------------------------
// Shared task: vocab-20 reversal with 10% target noise, 2000 training pairs.
// Two models are trained on it: a fully converged one for the end-to-end
// check and a partially converged one for the diversity check (a saturated
// model's n-best lists have nothing left to diversify).

SyntheticTaskSpec shared_task() {
  return make_synthetic_task(20, ReorderRule::reversal, 3, 8, 0.1, kTaskSeed);
}

ParallelCorpus clean_sample(const SyntheticTaskSpec& base, const std::string& stage, int n) {
  SyntheticTaskSpec clean = base;
  clean.noise_rate = 0.0;
  clean.seed = derive_seed(kTaskSeed, stage);
  return generate_synthetic_corpus(clean, n);
}

void do_setup(const SetupPaths& p) {
  fs::create_directories(p.dir);
  SyntheticTaskSpec spec = shared_task();
  ParallelCorpus corpus = generate_synthetic_corpus(spec, 2000);
  Vocabulary vocab = synthetic_vocabulary(spec);
  vocab.save(p.f("task.vocab"));
  std::cout << "setup: generated " << corpus.pairs.size() << " training pairs\n";

  std::set<TokenSequence> train_src;
  for (const auto& [x, y] : corpus.pairs) train_src.insert(x);
  ParallelCorpus pool = clean_sample(spec, "heldout", 260);
  std::vector<std::vector<std::string>> ho_src, ho_tgt;
  for (const auto& [x, y] : pool.pairs) {
    if (train_src.count(x) || ho_src.size() >= 200) continue;
    ho_src.push_back(vocab.decode(x));
    ho_tgt.push_back(vocab.decode(y));
  }
  save_sentences(p.f("heldout.src"), ho_src);
  save_sentences(p.f("heldout.tgt"), ho_tgt);
  std::cout << "setup: wrote " << ho_src.size() << " noise-free held-out pairs\n";

  for (auto [stage, count, name] : {std::tuple{"divdev", 25, "div_dev.src"},
                                    std::tuple{"divtest", 100, "div_test.src"}}) {
    ParallelCorpus sample = clean_sample(spec, stage, count);
    std::vector<std::vector<std::string>> src;
    for (const auto& [x, y] : sample.pairs) src.push_back(vocab.decode(x));
    save_sentences(p.f(name), src);
  }

  TrainConfig full;
  full.epochs = 30;
  full.halve_after = 20;
  full.seed = kTaskSeed;
  Seq2SeqModel e2e = make_seq2seq(vocab.size(), vocab.size(), 2, 64, true);
  std::cout << "setup: training the converged model (30 epochs)..." << std::endl;
  TrainResult r = train(e2e, corpus, full);
  save_model(e2e, p.f("e2e.model"));
  std::cout << "setup: final epoch loss " << num(r.epoch_loss.back()) << "\n";

  TrainConfig partial = full;
  partial.epochs = 8;
  partial.halve_after = 99;
  Seq2SeqModel div = make_seq2seq(vocab.size(), vocab.size(), 2, 64, true);
  std::cout << "setup: training the partially converged model (8 epochs)..." << std::endl;
  train(div, corpus, partial);
  save_model(div, p.f("diversity.model"));

  std::ofstream(p.dir / "ready") << "acceptance artifacts v1\n";
  std::cout << "setup: done\n";
}

// ---------------------------------------------------------------------------
// 1. gradient_oracle: analytic gradients vs central finite differences.

using Pairs = std::vector<std::pair<TokenSequence, TokenSequence>>;

double data_loss(const Seq2SeqModel& m, const Pairs& data) {
  double nll = 0.0;
  for (const auto& [x, y] : data)
    nll -= m.is_language_model() ? lm_logprob(m, y) : sequence_logprob(m, x, y);
  return nll / data.size();
}

double max_fd_rel_error(Seq2SeqModel& model, const Pairs& data, double eps) {
  Seq2SeqModel grads = zeros_like(model);
  for (const auto& [x, y] : data) pair_loss_and_grad(model, x, y, grads, 1.0 / data.size());
  std::vector<Eigen::MatrixXd*> params, gs;
  for_each_parameter(model, [&](const std::string&, Eigen::MatrixXd& w) { params.push_back(&w); });
  for_each_parameter(grads, [&](const std::string&, Eigen::MatrixXd& w) { gs.push_back(&w); });
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& w = *params[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        double orig = w(r, c);
        w(r, c) = orig + eps;
        double up = data_loss(model, data);
        w(r, c) = orig - eps;
        double down = data_loss(model, data);
        w(r, c) = orig;
        double fd = (up - down) / (2 * eps);
        double an = (*gs[i])(r, c);
        worst = std::max(worst, std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)}));
      }
  }
  return worst;
}

Pairs random_pairs(int src_v, int tgt_v, std::uint64_t seed, bool lm) {
  Rng rng(seed);
  Pairs data;
  for (int p = 0; p < 2; ++p) {
    TokenSequence x, y;
    int nx = 2 + rng.uniform_int(3), ny = 2 + rng.uniform_int(3);
    for (int i = 0; i < nx; ++i) x.push_back(2 + rng.uniform_int(src_v - 2));
    for (int i = 0; i < ny; ++i) y.push_back(2 + rng.uniform_int(tgt_v - 2));
    y.push_back(Vocabulary::kEosId);
    data.push_back({lm ? TokenSequence{} : x, y});
  }
  return data;
}

void crit_gradient_oracle(const SetupPaths&) {
  const double eps = 1e-4, tol = 1e-4;
  struct Config {
    int layers, hidden, src_v, tgt_v;
    bool attention;
  };
  int idx = 0;
  for (Config c : {Config{1, 4, 7, 8, false}, Config{2, 4, 9, 10, false}, Config{1, 4, 7, 8, true},
                   Config{2, 3, 8, 12, true}, Config{1, 8, 12, 9, true},
                   Config{2, 6, 10, 7, false}}) {
    Seq2SeqModel m = make_seq2seq(c.src_v, c.tgt_v, c.layers, c.hidden, c.attention);
    init_parameters(m, 0.1, 301 + idx);
    double err = max_fd_rel_error(m, random_pairs(c.src_v, c.tgt_v, 351 + idx, false), eps);
    require(err < tol, "seq2seq config " + std::to_string(idx) + " (layers " +
                           std::to_string(c.layers) + ", hidden " + std::to_string(c.hidden) +
                           ", attention " + std::to_string(c.attention) +
                           ") max relative error " + num(err));
    ++idx;
  }
  Seq2SeqModel lm = make_language_model(10, 1, 6);
  init_parameters(lm, 0.1, 399);
  double err = max_fd_rel_error(lm, random_pairs(10, 10, 398, true), eps);
  require(err < tol, "language model max relative error " + num(err));
}

// ---------------------------------------------------------------------------
// 2. beam_vs_exhaustive: a beam wide enough to hold every candidate sequence
// must return the exhaustive argmax. Target vocab 4 and lengths [1,4] give
// 3 + 9 + 27 + 81 = 120 sequences; a source of length 2 with ratio bounds
// 0.5 and 2.0 yields exactly that window.

void crit_beam_vs_exhaustive(const SetupPaths&) {
  for (int trial = 0; trial < 50; ++trial) {
    Seq2SeqModel m = make_seq2seq(5, 4, 1 + trial % 2, 3 + trial % 4, trial % 3 != 0);
    init_parameters(m, 0.6, 400 + trial);
    Rng rng(500 + trial);
    TokenSequence x{2 + rng.uniform_int(3), 2 + rng.uniform_int(3)};

    DecodeConfig dc;
    dc.beam_size = 130;
    dc.min_length_ratio = 0.5;
    dc.max_length_ratio = 2.0;
    NBestList beam = beam_search(m, x, dc);
    NBestList full = exhaustive_search(m, x, 1, 4);
    require(!beam.entries.empty() && !full.entries.empty(),
            "trial " + std::to_string(trial) + ": empty result");
    require(beam.entries[0].tokens == full.entries[0].tokens,
            "trial " + std::to_string(trial) + ": beam top-1 differs from exhaustive top-1");
    double gap = std::abs(beam.entries[0].score - full.entries[0].score);
    require(gap <= 1e-9,
            "trial " + std::to_string(trial) + ": top-1 score gap " + num(gap) + " > 1e-9");
  }
}

// ---------------------------------------------------------------------------
// 3. diversity_identity: zero diversity penalty must reproduce the plain
// beam (independently coded in reference_beam.hpp) bit for bit.

void crit_diversity_identity(const SetupPaths&) {
  Vocabulary toy_vocab({"a", "b", "c", "d", "e"});
  for (int trial = 0; trial < 20; ++trial) {
    Seq2SeqModel m = make_seq2seq(6, 7, 1 + trial % 2, 4 + trial % 3, trial % 2 == 0);
    init_parameters(m, 0.4, 600 + trial);
    Rng rng(650 + trial);
    TokenSequence x{2 + rng.uniform_int(4), 2 + rng.uniform_int(4), 2 + rng.uniform_int(4)};

    DecodeConfig dc;
    dc.beam_size = 5;
    NBestList mine = beam_search(m, x, dc);
    std::vector<refbeam::Entry> ref = refbeam::plain_beam(m, x, 5);
    require(mine.entries.size() == ref.size(),
            "trial " + std::to_string(trial) + ": list sizes differ (" +
                std::to_string(mine.entries.size()) + " vs " + std::to_string(ref.size()) + ")");
    NBestList ref_list;
    ref_list.source = x;
    for (const auto& e : ref) {
      Hypothesis h;
      h.tokens = e.tokens;
      h.score = e.score;
      h.finished = true;
      ref_list.entries.push_back(std::move(h));
    }
    for (size_t i = 0; i < ref.size(); ++i) {
      require(mine.entries[i].tokens == ref[i].tokens,
              "trial " + std::to_string(trial) + ": tokens differ at rank " + std::to_string(i));
      require(mine.entries[i].score == ref[i].score,
              "trial " + std::to_string(trial) + ": scores differ at rank " + std::to_string(i));
    }
    std::ostringstream a, b;
    append_nbest(a, trial, mine, toy_vocab);
    append_nbest(b, trial, ref_list, toy_vocab);
    require(a.str() == b.str(), "trial " + std::to_string(trial) + ": serialized lists differ");
  }
}

// ---------------------------------------------------------------------------
// 4. diversity_direction: on the partially converged reversal model, the
// sibling-rank penalty must raise distinct-1 and distinct-2 of the 50-best
// lists. The penalty value is chosen on a 25-source dev sweep; the strict
// comparison runs on 100 separate sources.

DiversityReport distinct_at(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources,
                            const Vocabulary& vocab, double gamma) {
  DecodeConfig dc;
  dc.beam_size = 50;
  dc.diversity_penalty = gamma;
  std::vector<std::vector<std::vector<std::string>>> lists;
  for (const TokenSequence& x : sources) {
    NBestList nb = beam_search(model, x, dc);
    if (nb.entries.size() > 50) nb.entries.resize(50);
    std::vector<std::vector<std::string>> cands;
    for (const auto& e : nb.entries) {
      TokenSequence content = e.tokens;
      content.pop_back();
      cands.push_back(vocab.decode(content));
    }
    lists.push_back(std::move(cands));
  }
  return diversity_report(lists);
}

std::vector<TokenSequence> encode_file(const std::string& path, const Vocabulary& vocab) {
  std::vector<TokenSequence> out;
  for (const auto& line : load_sentences(path)) out.push_back(vocab.encode(line));
  return out;
}

void crit_diversity_direction(const SetupPaths& p) {
  p.check_ready();
  Seq2SeqModel model = load_model(p.f("diversity.model"));
  Vocabulary vocab = Vocabulary::load(p.f("task.vocab"));
  auto dev = encode_file(p.f("div_dev.src"), vocab);
  auto test = encode_file(p.f("div_test.src"), vocab);

  double best_gamma = 0.0, best_sum = -1.0;
  for (double gamma : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    DiversityReport r = distinct_at(model, dev, vocab, gamma);
    if (r.distinct_1 + r.distinct_2 > best_sum) {
      best_sum = r.distinct_1 + r.distinct_2;
      best_gamma = gamma;
    }
  }
  DiversityReport base = distinct_at(model, test, vocab, 0.0);
  DiversityReport tuned = distinct_at(model, test, vocab, best_gamma);
  std::cout << "  penalty " << num(best_gamma) << ": distinct-1 " << num(base.distinct_1)
            << " -> " << num(tuned.distinct_1) << ", distinct-2 " << num(base.distinct_2)
            << " -> " << num(tuned.distinct_2) << " over " << test.size() << " sources\n";
  require(tuned.distinct_1 > base.distinct_1,
          "distinct-1 did not increase (" + num(base.distinct_1) + " -> " +
              num(tuned.distinct_1) + ")");
  require(tuned.distinct_2 > base.distinct_2,
          "distinct-2 did not increase (" + num(base.distinct_2) + " -> " +
              num(tuned.distinct_2) + ")");
}

// ---------------------------------------------------------------------------
// 5. synthetic_end_to_end: the converged model must reach corpus BLEU 0.90
// greedily on 200 noise-free held-out pairs.

void crit_synthetic_end_to_end(const SetupPaths& p) {
  p.check_ready();
  Seq2SeqModel model = load_model(p.f("e2e.model"));
  Vocabulary vocab = Vocabulary::load(p.f("task.vocab"));
  auto src = load_sentences(p.f("heldout.src"));
  auto refs = load_sentences(p.f("heldout.tgt"));
  require(src.size() == refs.size() && src.size() >= 200,
          "held-out set has " + std::to_string(src.size()) + " pairs, expected 200");

  DecodeConfig greedy;
  greedy.beam_size = 1;
  std::vector<std::vector<std::string>> cands;
  int failures = 0;
  for (const auto& line : src) {
    try {
      NBestList nb = beam_search(model, vocab.encode(line), greedy);
      TokenSequence content = nb.entries[0].tokens;
      content.pop_back();
      cands.push_back(vocab.decode(content));
    } catch (const DataError&) {
      cands.push_back({});
      ++failures;
    }
  }
  BleuReport report = corpus_bleu(cands, refs);
  std::cout << "  greedy BLEU " << num(report.bleu) << " (" << failures
            << " decode failures scored as empty)\n";
  require(report.bleu >= 0.90, "greedy BLEU " + num(report.bleu) + " < 0.90");
}

// ---------------------------------------------------------------------------
// 6. rerank_direction: an undertrained forward model's 50-best lists,
// reranked with a fully trained backward model, language model, and
// MERT-tuned weights, must never lose to the decode-only top-1 on held-out
// data and must beat it strictly in at least 2 of 3 seeded repetitions.

struct DecodedSentence {
  TokenSequence source;
  NBestList nbest;
  std::vector<std::string> ref;
};

void crit_rerank_direction(const SetupPaths&) {
  int strict = 0;
  for (std::uint64_t seed : {101, 102, 103}) {
    SyntheticTaskSpec spec = make_synthetic_task(10, ReorderRule::reversal, 3, 6, 0.0, seed);
    ParallelCorpus corpus = generate_synthetic_corpus(spec, 1200);
    Vocabulary vocab = synthetic_vocabulary(spec);
    std::set<TokenSequence> train_src;
    for (const auto& [x, y] : corpus.pairs) train_src.insert(x);
    SyntheticTaskSpec ho = spec;
    ho.seed = derive_seed(seed, "heldout");
    ParallelCorpus pool = generate_synthetic_corpus(ho, 220);
    std::vector<std::pair<TokenSequence, TokenSequence>> dev, test;
    for (const auto& pr : pool.pairs) {
      if (train_src.count(pr.first)) continue;
      if (dev.size() < 50) dev.push_back(pr);
      else if (test.size() < 80) test.push_back(pr);
    }

    int v = vocab.size();
    TrainConfig full;
    full.epochs = 28;
    full.halve_after = 18;
    full.seed = seed;
    TrainConfig quarter = full;
    quarter.epochs = full.epochs / 4;
    Seq2SeqModel fwd = make_seq2seq(v, v, 1, 32, true);
    Seq2SeqModel bwd = make_seq2seq(v, v, 1, 32, true, Direction::backward);
    Seq2SeqModel lm = make_language_model(v, 1, 32);
    train(fwd, corpus, quarter);
    train_backward(bwd, corpus, full);
    std::vector<TokenSequence> mono;
    for (const auto& [x, y] : corpus.pairs) mono.push_back(y);
    train_lm(lm, mono, full);

    DecodeConfig dc;
    dc.beam_size = 50;
    auto decode_set = [&](const std::vector<std::pair<TokenSequence, TokenSequence>>& data) {
      std::vector<DecodedSentence> out;
      for (const auto& [x, y] : data) {
        DecodedSentence d;
        d.source = x;
        d.ref = vocab.decode(y);
        d.nbest = beam_search(fwd, x, dc);
        out.push_back(std::move(d));
      }
      return out;
    };
    auto dev_d = decode_set(dev);
    auto test_d = decode_set(test);

    auto featurize = [&](const DecodedSentence& d) {
      std::vector<FeatureVector> fs;
      for (const auto& e : d.nbest.entries)
        fs.push_back(extract_features(d.source, e.tokens, fwd, bwd, lm));
      return fs;
    };

    // exact line search is quadratic in candidates per sentence, so the
    // tuner sees each dev sentence's 50 best only
    std::vector<TuningSentence> dev_tune;
    for (auto& d : dev_d) {
      if (d.nbest.entries.size() > 50) d.nbest.entries.resize(50);
      TuningSentence s;
      auto fs = featurize(d);
      for (size_t i = 0; i < fs.size(); ++i) {
        TuningCandidate c;
        c.features = fs[i];
        TokenSequence content = d.nbest.entries[i].tokens;
        content.pop_back();
        c.stats = sentence_bleu_stats(vocab.decode(content), {d.ref});
        s.candidates.push_back(std::move(c));
      }
      dev_tune.push_back(std::move(s));
    }
    MertConfig mc;
    mc.seed = seed;
    mc.restarts = 3;
    MertResult mr = mert_tune(dev_tune, mc);

    std::vector<std::vector<std::string>> base, reranked, refs;
    for (const auto& d : test_d) {
      refs.push_back(d.ref);
      TokenSequence top = d.nbest.entries[0].tokens;
      top.pop_back();
      base.push_back(vocab.decode(top));
      auto fs = featurize(d);
      TokenSequence best = d.nbest.entries[rerank_order(fs, mr.weights)[0]].tokens;
      best.pop_back();
      reranked.push_back(vocab.decode(best));
    }
    double decode_bleu = corpus_bleu(base, refs).bleu;
    double rerank_bleu = corpus_bleu(reranked, refs).bleu;
    std::cout << "  seed " << seed << ": decode-only BLEU " << num(decode_bleu)
              << ", reranked BLEU " << num(rerank_bleu) << "\n";
    require(rerank_bleu >= decode_bleu, "seed " + std::to_string(seed) + ": reranked BLEU " +
                                            num(rerank_bleu) + " below decode-only " +
                                            num(decode_bleu));
    if (rerank_bleu > decode_bleu) ++strict;
  }
  require(strict >= 2,
          "strict improvement in only " + std::to_string(strict) + " of 3 repetitions");
}

// ---------------------------------------------------------------------------
// 7. mert_correctness: the tuner must recover the planted weight interval,
// match grid search exactly, and never fall below the zero-weight baseline.

RerankWeights lambda_only(double lambda) {
  RerankWeights w;
  w.lambda = lambda;
  return w;
}

FeatureVector fv(double f, double b, double l, int len) {
  FeatureVector v;
  v.logp_fwd = f;
  v.logp_bwd = b;
  v.logp_lm = l;
  v.target_length = len;
  return v;
}

TuningCandidate planted(const std::vector<std::string>& tokens,
                        const std::vector<std::string>& ref, const FeatureVector& features) {
  TuningCandidate c;
  c.features = features;
  c.stats = sentence_bleu_stats(tokens, {ref});
  return c;
}

void crit_mert_correctness(const SetupPaths&) {
  // reference wins sentence A iff lambda >= 0.8 and sentence B iff
  // lambda <= 1.2 (candidate order breaks the exact-tie boundaries toward
  // the reference), so corpus BLEU 1 exactly on [0.8, 1.2]
  std::vector<std::string> refA{"a", "b", "c", "d"}, refB{"p", "q", "r", "s"};
  TuningSentence A, B;
  A.candidates.push_back(planted(refA, refA, fv(-2.0, -1.0, -0.5, 4)));
  A.candidates.push_back(planted({"w", "x", "y", "z"}, refA, fv(-1.2, -2.0, -0.5, 4)));
  B.candidates.push_back(planted(refB, refB, fv(-1.0, -2.0, -0.5, 4)));
  B.candidates.push_back(planted({"h", "i", "j", "k"}, refB, fv(-2.2, -1.0, -0.5, 4)));
  std::vector<TuningSentence> dev{A, B};

  double grid_best = 0.0;
  for (double lambda = -2.0; lambda <= 2.0; lambda += 0.01) {
    if (std::abs(lambda - 0.8) < 1e-6 || std::abs(lambda - 1.2) < 1e-6) continue;
    double b = corpus_bleu_at(dev, lambda_only(lambda));
    grid_best = std::max(grid_best, b);
    bool inside = lambda > 0.8 && lambda < 1.2;
    require(inside ? b == 1.0 : b < 1.0,
            "grid check at lambda " + num(lambda) + " gave BLEU " + num(b));
  }
  require(grid_best == 1.0, "grid best " + num(grid_best) + " != 1");

  MertConfig mc;
  mc.seed = 7;
  mc.restarts = 4;
  MertResult result = mert_tune(dev, mc);
  std::cout << "  recovered lambda " << num(result.weights.lambda) << " in [0.8, 1.2], dev BLEU "
            << num(result.bleu) << "\n";
  require(result.weights.lambda >= 0.8 && result.weights.lambda <= 1.2,
          "tuned lambda " + num(result.weights.lambda) + " outside [0.8, 1.2]");
  require(result.bleu == grid_best, "tuned BLEU " + num(result.bleu) + " != grid best 1");
  require(result.bleu >= corpus_bleu_at(dev, RerankWeights{}), "tuned below zero-weight baseline");

  // random dev sets: tuned never below the zero-weight baseline
  std::vector<std::string> pool{"m", "n", "o", "u", "v"};
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(800 + trial);
    std::vector<TuningSentence> rand_dev;
    for (int s = 0; s < 6; ++s) {
      std::vector<std::string> ref;
      for (int t = 0; t < 4; ++t) ref.push_back(pool[rng.uniform_int(5)]);
      TuningSentence sent;
      for (int c = 0; c < 5; ++c) {
        std::vector<std::string> tokens;
        int len = 3 + rng.uniform_int(3);
        for (int t = 0; t < len; ++t) tokens.push_back(pool[rng.uniform_int(5)]);
        sent.candidates.push_back(planted(
            tokens, ref,
            fv(-10 * rng.uniform(), -10 * rng.uniform(), -5 * rng.uniform(), len)));
      }
      rand_dev.push_back(std::move(sent));
    }
    MertConfig rc;
    rc.seed = 880 + trial;
    rc.restarts = 3;
    MertResult r = mert_tune(rand_dev, rc);
    double baseline = corpus_bleu_at(rand_dev, RerankWeights{});
    require(r.bleu >= baseline, "trial " + std::to_string(trial) + ": tuned BLEU " + num(r.bleu) +
                                    " below zero-weight baseline " + num(baseline));
  }
}

// ---------------------------------------------------------------------------
// 8. bleu_oracle: the hand-counted clipping example, identity, and
// permutation invariance of the corpus statistics.

void crit_bleu_oracle(const SetupPaths&) {
  std::vector<std::vector<std::string>> clip_cand{{"the", "the", "the"}};
  std::vector<std::vector<std::string>> clip_ref{{"the", "cat"}};
  BleuReport clip = corpus_bleu(clip_cand, clip_ref);
  require(clip.precisions[0] == 1.0 / 3.0,
          "clipping example p1 " + num(clip.precisions[0]) + " != 1/3");
  require(clip.precisions[1] == 0.0, "clipping example p2 " + num(clip.precisions[1]) + " != 0");
  require(clip.bleu == 0.0, "clipping example BLEU " + num(clip.bleu) + " != 0");

  std::vector<std::vector<std::string>> refs{
      {"the", "cat", "sat", "on", "the", "mat"}, {"a", "stitch", "in", "time", "saves", "nine"},
      {"all", "roads", "lead", "to", "rome"},    {"birds", "of", "a", "feather", "flock"},
      {"every", "cloud", "has", "a", "lining"},  {"actions", "speak", "louder", "than", "words"}};
  BleuReport identity = corpus_bleu(refs, refs);
  require(identity.bleu == 1.0, "identity BLEU " + num(identity.bleu) + " != 1");
  require(identity.brevity_penalty == 1.0, "identity BP != 1");

  std::vector<std::vector<std::string>> cands = refs;
  cands[1][2] = "on";
  cands[3].push_back("together");
  cands[4] = {"every", "cloud"};
  double baseline = corpus_bleu(cands, refs).bleu;
  require(baseline > 0.0 && baseline < 1.0, "shuffle baseline degenerate: " + num(baseline));
  Rng rng(900);
  std::vector<int> order{0, 1, 2, 3, 4, 5};
  for (int shuffle = 0; shuffle < 10; ++shuffle) {
    rng.shuffle(order);
    std::vector<std::vector<std::string>> c2, r2;
    for (int i : order) {
      c2.push_back(cands[i]);
      r2.push_back(refs[i]);
    }
    double b = corpus_bleu(c2, r2).bleu;
    require(b == baseline,
            "shuffle " + std::to_string(shuffle) + ": BLEU " + num(b) + " != " + num(baseline));
  }
}

// ---------------------------------------------------------------------------
// 9. unk_replacement: on the noise-free bijection task the extracted
// dictionary must equal the generator's substitution for every observed
// token, and masked UNKs must all be rewritten.

void crit_unk_replacement(const SetupPaths&) {
  SyntheticTaskSpec spec = make_synthetic_task(10, ReorderRule::reversal, 2, 6, 0.0, 55);
  ParallelCorpus corpus = generate_synthetic_corpus(spec, 600);
  Vocabulary vocab = synthetic_vocabulary(spec);
  Seq2SeqModel model = make_seq2seq(vocab.size(), vocab.size(), 1, 16, true);
  TrainConfig tc;
  tc.seed = 55;
  tc.epochs = 30;
  tc.halve_after = 20;
  train(model, corpus, tc);

  BilingualDictionary dict = build_dictionary(extract_alignments(model, corpus), corpus);
  std::set<int> observed;
  for (const auto& [x, y] : corpus.pairs)
    for (int t : x)
      if (t >= Vocabulary::kReservedIds) observed.insert(t);
  for (int src : observed) {
    auto it = dict.entries.find(src);
    require(it != dict.entries.end(),
            "observed source id " + std::to_string(src) + " missing from dictionary");
    int want = spec.substitution[src - Vocabulary::kReservedIds] + Vocabulary::kReservedIds;
    require(it->second.target == want, "dictionary maps id " + std::to_string(src) + " to " +
                                           std::to_string(it->second.target) + ", generator says " +
                                           std::to_string(want));
  }

  SyntheticTaskSpec ho = spec;
  ho.seed = derive_seed(55, "unk-test");
  ParallelCorpus test = generate_synthetic_corpus(ho, 100);
  StringDictionary sdict = dictionary_strings(dict, vocab, vocab);
  int masked = 0, unks_left = 0, restored = 0;
  for (const auto& [x, y] : test.pairs) {
    std::vector<std::string> truth = vocab.decode(y);
    std::vector<std::string> translation = truth;
    TokenSequence masked_ids = y;
    for (size_t t = 0; t < translation.size(); t += 3) {
      translation[t] = Vocabulary::kUnkToken;
      masked_ids[t] = Vocabulary::kUnkId;
      ++masked;
    }
    AlignmentRecord align = align_translation(model, x, masked_ids);
    std::vector<std::string> fixed = replace_unk(translation, vocab.decode(x), align, sdict);
    for (size_t t = 0; t < fixed.size(); ++t) {
      if (fixed[t] == Vocabulary::kUnkToken) ++unks_left;
      if (translation[t] == Vocabulary::kUnkToken && fixed[t] == truth[t]) ++restored;
    }
  }
  std::cout << "  dictionary matched on " << observed.size() << " tokens; " << restored << " of "
            << masked << " masked tokens restored exactly\n";
  require(unks_left == 0,
          std::to_string(unks_left) + " UNK tokens remain across 100 test sentences");
}

// ---------------------------------------------------------------------------
// 10. determinism: the full command-line pipeline, run twice with one seed,
// must produce byte-identical artifacts at every stage.

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "missing artifact " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void crit_determinism(const SetupPaths& p) {
  struct RunOutput {
    int decode_code;
    std::string decode_err, eval_out;
  };
  auto pipeline = [&](const std::string& tag) {
    fs::path root = p.dir / ("determinism_" + tag);
    fs::remove_all(root);
    fs::create_directories(root);
    std::string pre = (root / "d").string();
    auto cli = [&](const std::vector<std::string>& args, int expected) {
      std::ostringstream out, err;
      int code = cli::run_cli(args, out, err);
      require(code == expected, "pipeline step `" + args[0] + "` exited " + std::to_string(code) +
                                    ": " + err.str());
      return std::pair{out.str(), err.str()};
    };
    cli({"gen-data", "--vocab", "8", "--rule", "reversal", "--min-len", "2", "--max-len", "6",
         "--pairs", "100", "--out-prefix", pre, "--seed", "5"},
        0);
    cli({"train", "--src", pre + ".src", "--tgt", pre + ".tgt", "--model", pre + ".fwd",
         "--hidden", "10", "--epochs", "3", "--seed", "5"},
        0);
    cli({"train-backward", "--src", pre + ".src", "--tgt", pre + ".tgt", "--model", pre + ".bwd",
         "--hidden", "10", "--epochs", "3", "--seed", "5"},
        0);
    cli({"train-lm", "--text", pre + ".mono", "--model", pre + ".lm", "--hidden", "10",
         "--epochs", "3", "--parallel-vocab", pre + ".fwd.tgt.vocab", "--seed", "5"},
        0);
    RunOutput r;
    {
      std::ostringstream out, err;
      r.decode_code = cli::run_cli({"decode", "--model", pre + ".fwd", "--input", pre + ".src",
                                    "--output", pre + ".nbest", "--beam", "3"},
                                   out, err);
      require(r.decode_code == 0 || r.decode_code == 2,
              "decode exited " + std::to_string(r.decode_code));
      r.decode_err = err.str();
    }
    cli({"features", "--nbest", pre + ".nbest", "--source", pre + ".src", "--forward",
         pre + ".fwd", "--backward", pre + ".bwd", "--lm", pre + ".lm", "--output",
         pre + ".feats"},
        0);
    cli({"tune", "--features", pre + ".feats", "--refs", pre + ".tgt", "--output",
         pre + ".weights", "--restarts", "2", "--seed", "5"},
        0);
    cli({"rerank", "--features", pre + ".feats", "--weights", pre + ".weights", "--output",
         pre + ".out"},
        0);
    r.eval_out = cli({"eval", "--candidates", pre + ".out", "--refs", pre + ".tgt", "--nbest",
                      pre + ".nbest"},
                     0)
                     .first;
    return r;
  };

  RunOutput a = pipeline("a");
  RunOutput b = pipeline("b");
  require(a.decode_code == b.decode_code && a.decode_err == b.decode_err,
          "decode outcome differs between runs");
  require(a.eval_out == b.eval_out, "eval output differs between runs");
  for (std::string ext :
       {".src", ".tgt", ".mono", ".subst", ".fwd", ".fwd.src.vocab", ".fwd.tgt.vocab", ".bwd",
        ".bwd.src.vocab", ".bwd.tgt.vocab", ".lm", ".lm.vocab", ".nbest", ".feats", ".weights",
        ".out"}) {
    std::string fa = (p.dir / "determinism_a" / ("d" + ext)).string();
    std::string fb = (p.dir / "determinism_b" / ("d" + ext)).string();
    require(slurp(fa) == slurp(fb), "artifact d" + ext + " differs between runs");
  }
  fs::remove_all(p.dir / "determinism_a");
  fs::remove_all(p.dir / "determinism_b");
}

// ---------------------------------------------------------------------------

using Criterion = std::function<void(const SetupPaths&)>;

const std::vector<std::pair<std::string, Criterion>>& criteria() {
  static const std::vector<std::pair<std::string, Criterion>> table{
      {"gradient_oracle", crit_gradient_oracle},
      {"beam_vs_exhaustive", crit_beam_vs_exhaustive},
      {"diversity_identity", crit_diversity_identity},
      {"diversity_direction", crit_diversity_direction},
      {"synthetic_end_to_end", crit_synthetic_end_to_end},
      {"rerank_direction", crit_rerank_direction},
      {"mert_correctness", crit_mert_correctness},
      {"bleu_oracle", crit_bleu_oracle},
      {"unk_replacement", crit_unk_replacement},
      {"determinism", crit_determinism},
  };
  return table;
}

int usage(std::ostream& err) {
  err << "usage: acceptance setup [--dir DIR]\n"
      << "       acceptance run [criterion] [--dir DIR]\n"
      << "criteria:";
  for (const auto& [name, fn] : criteria()) err << " " << name;
  err << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string mode, selected;
  SetupPaths paths{fs::path("acceptance_work")};
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--dir") {
      if (i + 1 >= args.size()) return usage(std::cerr);
      paths.dir = args[++i];
    } else if (mode.empty()) {
      mode = args[i];
    } else if (mode == "run" && selected.empty()) {
      selected = args[i];
    } else {
      return usage(std::cerr);
    }
  }
  if (mode != "setup" && mode != "run") return usage(std::cerr);

  if (mode == "setup") {
    try {
      do_setup(paths);
    } catch (const std::exception& e) {
      std::cerr << "setup failed: " << e.what() << "\n";
      return 1;
    }
    return 0;
  }

  std::vector<std::pair<std::string, Criterion>> todo;
  for (const auto& entry : criteria())
    if (selected.empty() || entry.first == selected) todo.push_back(entry);
  if (todo.empty()) {
    std::cerr << "unknown criterion: " << selected << "\n";
    return usage(std::cerr);
  }

  int failed = 0;
  for (const auto& [name, fn] : todo) {
    auto start = std::chrono::steady_clock::now();
    std::string verdict = "[PASS]", reason;
    try {
      fn(paths);
    } catch (const Failure& f) {
      verdict = "[FAIL]";
      reason = f.reason;
      ++failed;
    } catch (const std::exception& e) {
      verdict = "[FAIL]";
      reason = e.what();
      ++failed;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char line[512];
    std::snprintf(line, sizeof line, "%s %s (%.1f s)", verdict.c_str(), name.c_str(), secs);
    std::cout << line;
    if (!reason.empty()) std::cout << ": " << reason;
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
