#pragma once

// Plain scalar-loop reference implementations of the recurrent model math.
// Everything here is written with explicit index loops and its own activation
// code so that it shares no computation path with the library.

#include <cmath>
#include <vector>

#include "mmimt/model.hpp"

namespace oracle {

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> matvec(const Eigen::MatrixXd& w, const std::vector<double>& v) {
  std::vector<double> out(w.rows(), 0.0);
  for (int r = 0; r < w.rows(); ++r)
    for (int c = 0; c < w.cols(); ++c) out[r] += w(r, c) * v[c];
  return out;
}

inline std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline std::vector<double> softmax_oracle(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> e(z.size());
  double sum = 0;
  for (size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp(z[i] - m);
    sum += e[i];
  }
  for (auto& v : e) v /= sum;
  return e;
}

struct Vecs {
  std::vector<double> h, c;
};

inline Vecs lstm_oracle(const mmimt::LstmLayerParams& p, const Vecs& prev,
                        const std::vector<double>& input) {
  int k = static_cast<int>(p.w_input.rows());
  std::vector<double> z = concat(prev.h, input);
  auto ai = matvec(p.w_input, z);
  auto af = matvec(p.w_forget, z);
  auto ao = matvec(p.w_output, z);
  auto ag = matvec(p.w_cell, z);
  Vecs next;
  next.h.resize(k);
  next.c.resize(k);
  for (int r = 0; r < k; ++r) {
    double i = sig(ai[r]), f = sig(af[r]), o = sig(ao[r]), g = std::tanh(ag[r]);
    next.c[r] = f * prev.c[r] + i * g;
    next.h[r] = o * std::tanh(next.c[r]);
  }
  return next;
}

inline std::vector<double> embed_row(const Eigen::MatrixXd& emb, int token) {
  std::vector<double> out(emb.cols());
  for (int c = 0; c < emb.cols(); ++c) out[c] = emb(token, c);
  return out;
}

// Runs the full encoder stack over x (reversed feeding) and returns per-layer
// hidden traces plus final states.
struct EncOracle {
  std::vector<std::vector<std::vector<double>>> h;  // layer -> fed step -> vector
  std::vector<Vecs> final_state;                    // per layer
};

inline EncOracle encode_oracle(const mmimt::Seq2SeqModel& m, const mmimt::TokenSequence& x,
                               bool reverse) {
  int layers = m.layers();
  int n = static_cast<int>(x.size());
  EncOracle enc;
  enc.h.resize(layers);
  std::vector<Vecs> state(layers, {std::vector<double>(m.hidden, 0.0),
                                   std::vector<double>(m.hidden, 0.0)});
  for (int j = 0; j < n; ++j) {
    int pos = reverse ? n - 1 - j : j;
    std::vector<double> below = embed_row(m.source_embedding, x[pos]);
    for (int l = 0; l < layers; ++l) {
      state[l] = lstm_oracle(m.encoder[l], state[l], below);
      below = state[l].h;
      enc.h[l].push_back(state[l].h);
    }
  }
  enc.final_state = state;
  return enc;
}

inline std::vector<double> attn_weights_oracle(const std::vector<double>& h,
                                               const std::vector<std::vector<double>>& enc_top,
                                               const Eigen::MatrixXd& w_score) {
  std::vector<double> scores(enc_top.size(), 0.0);
  for (size_t j = 0; j < enc_top.size(); ++j)
    for (int r = 0; r < w_score.rows(); ++r)
      for (int c = 0; c < w_score.cols(); ++c) scores[j] += h[r] * w_score(r, c) * enc_top[j][c];
  return softmax_oracle(scores);
}

inline std::vector<double> context_oracle(const std::vector<double>& a,
                                          const std::vector<std::vector<double>>& enc_top) {
  std::vector<double> m(enc_top[0].size(), 0.0);
  for (size_t j = 0; j < enc_top.size(); ++j)
    for (size_t r = 0; r < m.size(); ++r) m[r] += a[j] * enc_top[j][r];
  return m;
}

// log p(y | x): scalar-loop replica of the whole scoring pipeline.
inline double seq_logprob_oracle(const mmimt::Seq2SeqModel& m, const mmimt::TokenSequence& x,
                                 const mmimt::TokenSequence& y) {
  EncOracle enc = encode_oracle(m, x, true);
  int layers = m.layers();
  std::vector<Vecs> state = enc.final_state;
  std::vector<double> fed(m.hidden, 0.0);
  double lp = 0.0;
  for (size_t t = 0; t < y.size(); ++t) {
    std::vector<double> probs;
    std::vector<double> attended;
    if (m.use_attention) {
      auto a = attn_weights_oracle(state[layers - 1].h, enc.h[layers - 1], m.attention.w_score);
      auto ctx = context_oracle(a, enc.h[layers - 1]);
      auto pre = matvec(m.attention.w_combine, concat(state[layers - 1].h, ctx));
      attended.resize(pre.size());
      for (size_t r = 0; r < pre.size(); ++r) attended[r] = std::tanh(pre[r]);
      probs = softmax_oracle(matvec(m.attention.w_output, attended));
    } else {
      probs = softmax_oracle(matvec(m.output_projection, state[layers - 1].h));
    }
    lp += std::log(probs[y[t]]);
    if (t + 1 < y.size()) {
      std::vector<double> below = embed_row(m.target_embedding, y[t]);
      if (m.use_attention) below = concat(below, attended);
      for (int l = 0; l < layers; ++l) {
        state[l] = lstm_oracle(m.decoder[l], state[l], below);
        below = state[l].h;
      }
    }
  }
  return lp;
}

inline double lm_logprob_oracle(const mmimt::Seq2SeqModel& m, const mmimt::TokenSequence& y) {
  int layers = m.layers();
  std::vector<Vecs> state(layers, {std::vector<double>(m.hidden, 0.0),
                                   std::vector<double>(m.hidden, 0.0)});
  double lp = 0.0;
  mmimt::TokenSequence inputs;
  inputs.push_back(mmimt::Vocabulary::kEosId);
  for (size_t i = 0; i + 1 < y.size(); ++i) inputs.push_back(y[i]);
  for (size_t t = 0; t < y.size(); ++t) {
    std::vector<double> below = embed_row(m.target_embedding, inputs[t]);
    for (int l = 0; l < layers; ++l) {
      state[l] = lstm_oracle(m.decoder[l], state[l], below);
      below = state[l].h;
    }
    auto probs = softmax_oracle(matvec(m.output_projection, state[layers - 1].h));
    lp += std::log(probs[y[t]]);
  }
  return lp;
}

}  // namespace oracle
