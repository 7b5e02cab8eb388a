#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmimt/core.hpp"
#include "mmimt/model.hpp"
#include "mmimt/rng.hpp"
#include "mmimt/util.hpp"

// Plain minibatch gradient descent with global-norm gradient clipping.
//
// Index conventions inside the backward pass:
//  * Encoder states are numbered 0..Nx; advance j consumes fed token j and
//    maps state j to state j+1. State 0 is all zeros.
//  * Decoder states are numbered 0..Ny-1; state 0 is the encoder's final
//    state per layer. Prediction t reads state t and scores y[t]; advance t
//    consumes (y[t], attended vector of prediction t) and produces state t+1.
//  * The language model instead advances first: advance t consumes input[t]
//    (the start marker, then y shifted right) producing state t+1, and
//    prediction t reads state t+1.

namespace mmimt {

struct TrainConfig {
  double learning_rate = 0.5;
  double clip_threshold = 5.0;
  double init_half_range = 0.1;
  int epochs = 10;
  int halve_after = 8;  // epochs after this one run at successively halved rates
  int batch_size = 16;
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate <= 0 || clip_threshold <= 0 || init_half_range <= 0)
      throw DataError("training rates must be positive");
    if (epochs < 1 || halve_after < 0 || batch_size < 1)
      throw DataError("bad training schedule");
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean per-sentence NLL, one entry per epoch
  long kept_sentences = 0;         // after any corpus filtering
};

namespace detail {

struct StepCache {
  Eigen::VectorXd z;  // [h_prev; external input]
  Eigen::ArrayXd i, f, o, g;
  Eigen::VectorXd c_prev, c, h;
};

inline void lstm_step_cached(const LstmLayerParams& p, const LstmState& prev,
                             const Eigen::VectorXd& input, StepCache& s) {
  s.z.resize(p.input_width());
  s.z << prev.h, input;
  s.i = sigmoid_array((p.w_input * s.z).array());
  s.f = sigmoid_array((p.w_forget * s.z).array());
  s.o = sigmoid_array((p.w_output * s.z).array());
  s.g = (p.w_cell * s.z).array().tanh();
  s.c_prev = prev.c;
  s.c = (s.f * prev.c.array() + s.i * s.g).matrix();
  s.h = (s.o * s.c.array().tanh()).matrix();
}

// Backward through one cached step. Accumulates parameter gradients into dp;
// dz gets the gradient on the concatenated input (head = previous hidden),
// dc_prev the gradient on the previous cell.
inline void lstm_backward(const LstmLayerParams& p, const StepCache& s, const Eigen::VectorXd& dh,
                          const Eigen::VectorXd& dc_in, LstmLayerParams& dp, Eigen::VectorXd& dz,
                          Eigen::VectorXd& dc_prev) {
  Eigen::ArrayXd tanh_c = s.c.array().tanh();
  Eigen::ArrayXd d_o = dh.array() * tanh_c;
  Eigen::ArrayXd dc = dc_in.array() + dh.array() * s.o * (1.0 - tanh_c.square());
  Eigen::ArrayXd di = dc * s.g;
  Eigen::ArrayXd df = dc * s.c_prev.array();
  Eigen::ArrayXd dg = dc * s.i;
  dc_prev = (dc * s.f).matrix();
  Eigen::VectorXd dai = (di * s.i * (1.0 - s.i)).matrix();
  Eigen::VectorXd daf = (df * s.f * (1.0 - s.f)).matrix();
  Eigen::VectorXd dao = (d_o * s.o * (1.0 - s.o)).matrix();
  Eigen::VectorXd dag = (dg * (1.0 - s.g.square())).matrix();
  dp.w_input.noalias() += dai * s.z.transpose();
  dp.w_forget.noalias() += daf * s.z.transpose();
  dp.w_output.noalias() += dao * s.z.transpose();
  dp.w_cell.noalias() += dag * s.z.transpose();
  dz.noalias() = p.w_input.transpose() * dai;
  dz.noalias() += p.w_forget.transpose() * daf;
  dz.noalias() += p.w_output.transpose() * dao;
  dz.noalias() += p.w_cell.transpose() * dag;
}

}  // namespace detail

// Forward and backward for one sentence pair (x empty for a language model).
// Returns the sentence NLL and adds scale * d(NLL)/d(params) into grads.
inline double pair_loss_and_grad(const Seq2SeqModel& model, const TokenSequence& x,
                                 const TokenSequence& y, Seq2SeqModel& grads, double scale) {
  using detail::StepCache;
  const int K = model.hidden;
  const int L = model.layers();
  check_target_sequence(model, y);
  const int ny = static_cast<int>(y.size());

  if (model.is_language_model()) {
    if (!x.empty()) throw DataError("language model training pairs must have no source");
    std::vector<int> inputs(ny);
    inputs[0] = Vocabulary::kEosId;
    for (int t = 1; t < ny; ++t) inputs[t] = y[t - 1];

    std::vector<std::vector<StepCache>> dec(L, std::vector<StepCache>(ny));
    std::vector<LstmState> st(L, zero_state(K));
    std::vector<Eigen::VectorXd> dz_logits(ny);
    double nll = 0.0;
    for (int t = 0; t < ny; ++t) {
      Eigen::VectorXd below = model.target_embedding.row(inputs[t]).transpose();
      for (int l = 0; l < L; ++l) {
        detail::lstm_step_cached(model.decoder[l], st[l], below, dec[l][t]);
        st[l] = {dec[l][t].h, dec[l][t].c};
        below = st[l].h;
      }
      Eigen::VectorXd logp = log_softmax(model.output_projection * st[L - 1].h);
      nll -= logp(y[t]);
      dz_logits[t] = (logp.array().exp() * scale).matrix();
      dz_logits[t](y[t]) -= scale;
    }

    std::vector<std::vector<Eigen::VectorXd>> dh(ny + 1), dc(ny + 1);
    for (int s = 0; s <= ny; ++s) {
      dh[s].assign(L, Eigen::VectorXd::Zero(K));
      dc[s].assign(L, Eigen::VectorXd::Zero(K));
    }
    Eigen::VectorXd dz, dcp;
    for (int t = ny - 1; t >= 0; --t) {
      grads.output_projection.noalias() += dz_logits[t] * dec[L - 1][t].h.transpose();
      dh[t + 1][L - 1].noalias() += model.output_projection.transpose() * dz_logits[t];
      for (int l = L - 1; l >= 0; --l) {
        detail::lstm_backward(model.decoder[l], dec[l][t], dh[t + 1][l], dc[t + 1][l],
                              grads.decoder[l], dz, dcp);
        dh[t][l] += dz.head(K);
        dc[t][l] += dcp;
        if (l > 0)
          dh[t + 1][l - 1] += dz.tail(K);
        else
          grads.target_embedding.row(inputs[t]) += dz.tail(K).transpose();
      }
    }
    return nll;
  }

  // --- sequence-to-sequence path ---
  if (x.empty()) throw DataError("cannot encode an empty source");
  for (int t : x) {
    if (t < 0 || t >= model.source_vocab())
      throw DataError("source token id out of range: " + std::to_string(t));
    if (t == Vocabulary::kEosId) throw DataError("source must not contain the end marker");
  }
  const int nx = static_cast<int>(x.size());
  std::vector<int> fed(nx);
  for (int j = 0; j < nx; ++j) fed[j] = x[nx - 1 - j];

  std::vector<std::vector<StepCache>> ec(L, std::vector<StepCache>(nx));
  {
    std::vector<LstmState> st(L, zero_state(K));
    for (int j = 0; j < nx; ++j) {
      Eigen::VectorXd below = model.source_embedding.row(fed[j]).transpose();
      for (int l = 0; l < L; ++l) {
        detail::lstm_step_cached(model.encoder[l], st[l], below, ec[l][j]);
        st[l] = {ec[l][j].h, ec[l][j].c};
        below = st[l].h;
      }
    }
  }
  Eigen::MatrixXd enc_top(K, nx);
  for (int j = 0; j < nx; ++j) enc_top.col(j) = ec[L - 1][j].h;

  struct PredCache {
    Eigen::VectorXd attn, ctx, q, vh, dz_logits;
  };
  std::vector<PredCache> pred(ny);
  std::vector<std::vector<StepCache>> dec(L, std::vector<StepCache>(std::max(0, ny - 1)));

  std::vector<LstmState> st(L);
  std::vector<LstmState> initial(L);
  for (int l = 0; l < L; ++l) initial[l] = {ec[l][nx - 1].h, ec[l][nx - 1].c};
  st = initial;
  auto h_top = [&](int t) -> const Eigen::VectorXd& {
    return t == 0 ? initial[L - 1].h : dec[L - 1][t - 1].h;
  };

  double nll = 0.0;
  for (int t = 0; t < ny; ++t) {
    PredCache& pc = pred[t];
    Eigen::VectorXd logp;
    if (model.use_attention) {
      pc.attn = attention_weights(st[L - 1].h, enc_top, model.attention.w_score);
      pc.ctx = attention_context(pc.attn, enc_top);
      pc.q.resize(2 * K);
      pc.q << st[L - 1].h, pc.ctx;
      pc.vh = (model.attention.w_combine * pc.q).array().tanh().matrix();
      logp = log_softmax(model.attention.w_output * pc.vh);
    } else {
      logp = log_softmax(model.output_projection * st[L - 1].h);
    }
    nll -= logp(y[t]);
    pc.dz_logits = (logp.array().exp() * scale).matrix();
    pc.dz_logits(y[t]) -= scale;

    if (t + 1 < ny) {
      Eigen::VectorXd below;
      if (model.use_attention) {
        below.resize(2 * K);
        below << model.target_embedding.row(y[t]).transpose(), pc.vh;
      } else {
        below = model.target_embedding.row(y[t]).transpose();
      }
      for (int l = 0; l < L; ++l) {
        detail::lstm_step_cached(model.decoder[l], st[l], below, dec[l][t]);
        st[l] = {dec[l][t].h, dec[l][t].c};
        below = st[l].h;
      }
    }
  }

  // --- decoder backward ---
  std::vector<std::vector<Eigen::VectorXd>> dh(ny), dc(ny);
  for (int s = 0; s < ny; ++s) {
    dh[s].assign(L, Eigen::VectorXd::Zero(K));
    dc[s].assign(L, Eigen::VectorXd::Zero(K));
  }
  Eigen::MatrixXd denc_top = Eigen::MatrixXd::Zero(K, nx);
  std::vector<Eigen::VectorXd> dvh_pending(ny, Eigen::VectorXd::Zero(K));
  Eigen::VectorXd dz, dcp;
  for (int t = ny - 1; t >= 0; --t) {
    if (t + 1 < ny) {
      for (int l = L - 1; l >= 0; --l) {
        detail::lstm_backward(model.decoder[l], dec[l][t], dh[t + 1][l], dc[t + 1][l],
                              grads.decoder[l], dz, dcp);
        dh[t][l] += dz.head(K);
        dc[t][l] += dcp;
        if (l > 0) {
          dh[t + 1][l - 1] += dz.tail(K);
        } else {
          grads.target_embedding.row(y[t]) += dz.segment(K, K).transpose();
          if (model.use_attention) dvh_pending[t] += dz.tail(K);
        }
      }
    }
    const PredCache& pc = pred[t];
    if (model.use_attention) {
      grads.attention.w_output.noalias() += pc.dz_logits * pc.vh.transpose();
      Eigen::VectorXd dvh = model.attention.w_output.transpose() * pc.dz_logits;
      dvh += dvh_pending[t];
      Eigen::VectorXd dpre = (dvh.array() * (1.0 - pc.vh.array().square())).matrix();
      grads.attention.w_combine.noalias() += dpre * pc.q.transpose();
      Eigen::VectorXd dq = model.attention.w_combine.transpose() * dpre;
      Eigen::VectorXd dhh = dq.head(K);
      Eigen::VectorXd dm = dq.tail(K);
      Eigen::VectorXd da = enc_top.transpose() * dm;
      denc_top.noalias() += dm * pc.attn.transpose();
      double adot = pc.attn.dot(da);
      Eigen::VectorXd dv = (pc.attn.array() * (da.array() - adot)).matrix();
      Eigen::VectorXd hdv = enc_top * dv;
      dhh.noalias() += model.attention.w_score * hdv;
      grads.attention.w_score.noalias() += h_top(t) * hdv.transpose();
      denc_top.noalias() += (model.attention.w_score.transpose() * h_top(t)) * dv.transpose();
      dh[t][L - 1] += dhh;
    } else {
      grads.output_projection.noalias() += pc.dz_logits * h_top(t).transpose();
      dh[t][L - 1].noalias() += model.output_projection.transpose() * pc.dz_logits;
    }
  }

  // --- encoder backward ---
  std::vector<std::vector<Eigen::VectorXd>> eh(nx + 1), ecg(nx + 1);
  for (int s = 0; s <= nx; ++s) {
    eh[s].assign(L, Eigen::VectorXd::Zero(K));
    ecg[s].assign(L, Eigen::VectorXd::Zero(K));
  }
  for (int l = 0; l < L; ++l) {
    eh[nx][l] = dh[0][l];
    ecg[nx][l] = dc[0][l];
  }
  if (model.use_attention)
    for (int j = 0; j < nx; ++j) eh[j + 1][L - 1] += denc_top.col(j);
  for (int j = nx - 1; j >= 0; --j) {
    for (int l = L - 1; l >= 0; --l) {
      detail::lstm_backward(model.encoder[l], ec[l][j], eh[j + 1][l], ecg[j + 1][l],
                            grads.encoder[l], dz, dcp);
      eh[j][l] += dz.head(K);
      ecg[j][l] += dcp;
      if (l > 0)
        eh[j + 1][l - 1] += dz.tail(K);
      else
        grads.source_embedding.row(fed[j]) += dz.tail(K).transpose();
    }
  }
  return nll;
}

inline double global_gradient_norm(const Seq2SeqModel& grads) {
  double sq = 0.0;
  for_each_parameter(grads, [&](const std::string&, const Eigen::MatrixXd& w) {
    sq += w.squaredNorm();
  });
  return std::sqrt(sq);
}

// Rescales so the global norm never exceeds the threshold.
inline void clip_gradients(Seq2SeqModel& grads, double threshold) {
  double norm = global_gradient_norm(grads);
  if (norm > threshold) {
    double s = threshold / norm;
    for_each_parameter(grads, [&](const std::string&, Eigen::MatrixXd& w) { w *= s; });
  }
}

inline void apply_update(Seq2SeqModel& model, const Seq2SeqModel& grads, double lr) {
  std::vector<const Eigen::MatrixXd*> gs;
  for_each_parameter(grads, [&](const std::string&, const Eigen::MatrixXd& w) { gs.push_back(&w); });
  size_t i = 0;
  for_each_parameter(model, [&](const std::string&, Eigen::MatrixXd& w) { w -= lr * *gs[i++]; });
}

// Optimizes the model in place over prepared pairs (targets already carrying
// their end marker; sources empty for a language model). Does not initialize
// parameters; train/train_backward/train_lm do.
inline TrainResult train_prepared(Seq2SeqModel& model,
                                  const std::vector<std::pair<TokenSequence, TokenSequence>>& data,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("empty training corpus");
  const long n = static_cast<long>(data.size());
  std::vector<int> order(n);
  for (long i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Seq2SeqModel grads = zeros_like(model);
  TrainResult res;
  res.kept_sentences = n;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate * std::pow(0.5, std::max(0, epoch - cfg.halve_after));
    shuffle_rng.shuffle(order);
    double epoch_nll = 0.0;
    for (long start = 0; start < n; start += cfg.batch_size) {
      long bsz = std::min<long>(cfg.batch_size, n - start);
      for_each_parameter(grads, [](const std::string&, Eigen::MatrixXd& w) { w.setZero(); });
      double batch_nll = 0.0;
      for (long k = 0; k < bsz; ++k) {
        const auto& [px, py] = data[order[start + k]];
        batch_nll += pair_loss_and_grad(model, px, py, grads, 1.0 / bsz);
      }
      if (!std::isfinite(batch_nll))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(start / cfg.batch_size));
      clip_gradients(grads, cfg.clip_threshold);
      apply_update(model, grads, lr);
      epoch_nll += batch_nll;
    }
    res.epoch_loss.push_back(epoch_nll / n);
  }
  return res;
}

inline std::vector<std::pair<TokenSequence, TokenSequence>> prepare_pairs(
    const ParallelCorpus& corpus) {
  std::vector<std::pair<TokenSequence, TokenSequence>> data;
  data.reserve(corpus.size());
  for (const auto& [src, tgt] : corpus.pairs) {
    TokenSequence y = tgt;
    y.push_back(Vocabulary::kEosId);
    data.emplace_back(src, std::move(y));
  }
  return data;
}

// Initializes parameters uniformly and fits p(target | source).
inline TrainResult train(Seq2SeqModel& model, const ParallelCorpus& corpus,
                         const TrainConfig& cfg) {
  if (model.is_language_model()) throw DataError("train expects a sequence-to-sequence model");
  cfg.validate();
  init_parameters(model, cfg.init_half_range, derive_seed(cfg.seed, "init"));
  return train_prepared(model, prepare_pairs(corpus), cfg);
}

// Fits p(source | target) by training on swapped pairs. The model must be
// shaped with the vocabularies swapped accordingly.
inline TrainResult train_backward(Seq2SeqModel& model, const ParallelCorpus& corpus,
                                  const TrainConfig& cfg) {
  model.direction = Direction::backward;
  return train(model, swapped(corpus), cfg);
}

inline double unk_fraction(const TokenSequence& sent) {
  if (sent.empty()) return 0.0;
  long unk = 0;
  for (int t : sent)
    if (t == Vocabulary::kUnkId) ++unk;
  return static_cast<double>(unk) / static_cast<double>(sent.size());
}

// Fits a language model on target-side sentences, first dropping any sentence
// whose unknown-token fraction exceeds 10%.
inline TrainResult train_lm(Seq2SeqModel& model, const std::vector<TokenSequence>& sentences,
                            const TrainConfig& cfg) {
  if (!model.is_language_model()) throw DataError("train_lm expects a language model");
  cfg.validate();
  std::vector<std::pair<TokenSequence, TokenSequence>> data;
  for (const auto& sent : sentences) {
    if (unk_fraction(sent) > 0.1) continue;
    TokenSequence y = sent;
    y.push_back(Vocabulary::kEosId);
    data.emplace_back(TokenSequence{}, std::move(y));
  }
  if (data.empty()) throw DataError("no sentences survive the unknown-rate filter");
  init_parameters(model, cfg.init_half_range, derive_seed(cfg.seed, "init"));
  TrainResult res = train_prepared(model, data, cfg);
  res.kept_sentences = static_cast<long>(data.size());
  return res;
}

}  // namespace mmimt
