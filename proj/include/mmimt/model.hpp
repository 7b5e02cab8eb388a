#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "mmimt/core.hpp"
#include "mmimt/rng.hpp"
#include "mmimt/util.hpp"

// Recurrent sequence-to-sequence model with optional attention.
//
// Conventions used throughout:
//  * No bias terms anywhere; every transform is a single matrix applied to a
//    concatenation of vectors.
//  * The embedding dimension equals the hidden dimension K.
//  * Source sentences are fed to the encoder in reversed order.
//  * The decoder starts from the encoder's final state per layer. With
//    attention enabled the bottom decoder layer also consumes the previous
//    step's attentional vector (input feeding); that vector is zero at the
//    first step.
//  * A language model is a degenerate instance: no encoder, no source
//    embedding, no attention; the first input is the end-of-sentence marker.

namespace mmimt {

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  double m = z.maxCoeff();
  Eigen::ArrayXd shifted = z.array() - m;
  double lse = std::log(shifted.exp().sum());
  return (shifted - lse).matrix();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Eigen::ArrayXd sigmoid_array(const Eigen::ArrayXd& a) {
  return ((-a).exp() + 1.0).inverse();
}

// One LSTM layer. Each gate matrix is hidden x input_width where the input is
// the concatenation [previous hidden state; external input].
struct LstmLayerParams {
  Eigen::MatrixXd w_input, w_forget, w_output, w_cell;

  int hidden() const { return static_cast<int>(w_input.rows()); }
  int input_width() const { return static_cast<int>(w_input.cols()); }
};

inline LstmLayerParams make_lstm_layer(int hidden, int input_width) {
  LstmLayerParams p;
  p.w_input = Eigen::MatrixXd::Zero(hidden, input_width);
  p.w_forget = Eigen::MatrixXd::Zero(hidden, input_width);
  p.w_output = Eigen::MatrixXd::Zero(hidden, input_width);
  p.w_cell = Eigen::MatrixXd::Zero(hidden, input_width);
  return p;
}

struct LstmState {
  Eigen::VectorXd h, c;
};

inline LstmState zero_state(int hidden) {
  return {Eigen::VectorXd::Zero(hidden), Eigen::VectorXd::Zero(hidden)};
}

inline LstmState lstm_step(const LstmLayerParams& p, const LstmState& prev,
                           const Eigen::VectorXd& input) {
  int k = p.hidden();
  if (prev.h.size() != k || prev.c.size() != k)
    throw DataError("lstm_step: state dimension mismatch");
  if (prev.h.size() + input.size() != p.input_width())
    throw DataError("lstm_step: input dimension mismatch");
  Eigen::VectorXd z(p.input_width());
  z << prev.h, input;
  Eigen::ArrayXd i = sigmoid_array((p.w_input * z).array());
  Eigen::ArrayXd f = sigmoid_array((p.w_forget * z).array());
  Eigen::ArrayXd o = sigmoid_array((p.w_output * z).array());
  Eigen::ArrayXd g = (p.w_cell * z).array().tanh();
  LstmState next;
  next.c = (f * prev.c.array() + i * g).matrix();
  next.h = (o * next.c.array().tanh()).matrix();
  return next;
}

// Attention with the bilinear score h_dec^T W_a h_enc. enc_top holds the
// encoder's top-layer outputs as columns, in the order they were fed.
inline Eigen::VectorXd attention_weights(const Eigen::VectorXd& h_dec,
                                         const Eigen::MatrixXd& enc_top,
                                         const Eigen::MatrixXd& w_score) {
  if (enc_top.cols() == 0) throw DataError("attention over an empty source");
  if (w_score.rows() != h_dec.size() || w_score.cols() != enc_top.rows())
    throw DataError("attention score dimension mismatch");
  Eigen::VectorXd scores = enc_top.transpose() * (w_score.transpose() * h_dec);
  return softmax(scores);
}

inline Eigen::VectorXd attention_context(const Eigen::VectorXd& weights,
                                         const Eigen::MatrixXd& enc_top) {
  if (weights.size() != enc_top.cols()) throw DataError("attention context dimension mismatch");
  return enc_top * weights;
}

struct AttentionParams {
  Eigen::MatrixXd w_score;    // K x K
  Eigen::MatrixXd w_combine;  // K x 2K
  Eigen::MatrixXd w_output;   // V x K
};

struct PredictOutput {
  Eigen::VectorXd probs;
  Eigen::VectorXd attended;
};

// Combines decoder state and attention context into the output distribution.
inline PredictOutput predict_distribution(const Eigen::VectorXd& h_dec, const Eigen::VectorXd& ctx,
                                          const Eigen::MatrixXd& w_combine,
                                          const Eigen::MatrixXd& w_output) {
  if (w_combine.cols() != h_dec.size() + ctx.size())
    throw DataError("predict_distribution dimension mismatch");
  Eigen::VectorXd q(h_dec.size() + ctx.size());
  q << h_dec, ctx;
  PredictOutput out;
  out.attended = (w_combine * q).array().tanh().matrix();
  out.probs = softmax(w_output * out.attended);
  return out;
}

enum class Direction { forward, backward };

inline std::string direction_name(Direction d) {
  return d == Direction::forward ? "forward" : "backward";
}

inline Direction parse_direction(const std::string& s) {
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  throw DataError("unknown direction '" + s + "'");
}

struct Seq2SeqModel {
  Direction direction = Direction::forward;
  int hidden = 0;
  bool use_attention = false;
  Eigen::MatrixXd source_embedding;  // Vs x K; 0x0 for a language model
  Eigen::MatrixXd target_embedding;  // Vt x K
  std::vector<LstmLayerParams> encoder;
  std::vector<LstmLayerParams> decoder;
  AttentionParams attention;
  Eigen::MatrixXd output_projection;  // Vt x K when attention is off

  int source_vocab() const { return static_cast<int>(source_embedding.rows()); }
  int target_vocab() const { return static_cast<int>(target_embedding.rows()); }
  int layers() const { return static_cast<int>(decoder.size()); }
  bool is_language_model() const { return encoder.empty(); }
};

inline Seq2SeqModel make_seq2seq(int source_vocab, int target_vocab, int layers, int hidden,
                                 bool use_attention, Direction direction = Direction::forward) {
  if (source_vocab < 2 || target_vocab < 2) throw DataError("model vocabulary too small");
  if (layers < 1 || hidden < 1) throw DataError("bad model dimensions");
  Seq2SeqModel m;
  m.direction = direction;
  m.hidden = hidden;
  m.use_attention = use_attention;
  m.source_embedding = Eigen::MatrixXd::Zero(source_vocab, hidden);
  m.target_embedding = Eigen::MatrixXd::Zero(target_vocab, hidden);
  for (int l = 0; l < layers; ++l) m.encoder.push_back(make_lstm_layer(hidden, 2 * hidden));
  for (int l = 0; l < layers; ++l) {
    int width = (l == 0 && use_attention) ? 3 * hidden : 2 * hidden;
    m.decoder.push_back(make_lstm_layer(hidden, width));
  }
  if (use_attention) {
    m.attention.w_score = Eigen::MatrixXd::Zero(hidden, hidden);
    m.attention.w_combine = Eigen::MatrixXd::Zero(hidden, 2 * hidden);
    m.attention.w_output = Eigen::MatrixXd::Zero(target_vocab, hidden);
  } else {
    m.output_projection = Eigen::MatrixXd::Zero(target_vocab, hidden);
  }
  return m;
}

inline Seq2SeqModel make_language_model(int vocab, int layers, int hidden) {
  if (vocab < 2) throw DataError("model vocabulary too small");
  if (layers < 1 || hidden < 1) throw DataError("bad model dimensions");
  Seq2SeqModel m;
  m.hidden = hidden;
  m.target_embedding = Eigen::MatrixXd::Zero(vocab, hidden);
  for (int l = 0; l < layers; ++l) m.decoder.push_back(make_lstm_layer(hidden, 2 * hidden));
  m.output_projection = Eigen::MatrixXd::Zero(vocab, hidden);
  return m;
}

// Visits every parameter matrix in a fixed canonical order. Initialization,
// updates, serialization and gradient bookkeeping all rely on this order.
template <class ModelT, class F>
void for_each_parameter(ModelT& m, F&& f) {
  if (m.source_embedding.size() > 0) f(std::string("source_embedding"), m.source_embedding);
  f(std::string("target_embedding"), m.target_embedding);
  for (size_t l = 0; l < m.encoder.size(); ++l) {
    std::string base = "encoder" + std::to_string(l) + ".";
    f(base + "w_input", m.encoder[l].w_input);
    f(base + "w_forget", m.encoder[l].w_forget);
    f(base + "w_output", m.encoder[l].w_output);
    f(base + "w_cell", m.encoder[l].w_cell);
  }
  for (size_t l = 0; l < m.decoder.size(); ++l) {
    std::string base = "decoder" + std::to_string(l) + ".";
    f(base + "w_input", m.decoder[l].w_input);
    f(base + "w_forget", m.decoder[l].w_forget);
    f(base + "w_output", m.decoder[l].w_output);
    f(base + "w_cell", m.decoder[l].w_cell);
  }
  if (m.use_attention) {
    f(std::string("attention.w_score"), m.attention.w_score);
    f(std::string("attention.w_combine"), m.attention.w_combine);
    f(std::string("attention.w_output"), m.attention.w_output);
  } else {
    f(std::string("output_projection"), m.output_projection);
  }
}

inline void init_parameters(Seq2SeqModel& m, double half_range, std::uint64_t seed) {
  Rng rng(seed);
  for_each_parameter(m, [&](const std::string&, Eigen::MatrixXd& w) {
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-half_range, half_range);
  });
}

inline Seq2SeqModel zeros_like(const Seq2SeqModel& m) {
  Seq2SeqModel z = m;
  for_each_parameter(z, [](const std::string&, Eigen::MatrixXd& w) { w.setZero(); });
  return z;
}

// Source sentence pushed through the encoder stack.
struct EncodedSource {
  std::vector<Eigen::MatrixXd> layer_outputs;  // per layer: hidden x length, fed order
  std::vector<LstmState> final_states;         // per layer
  std::vector<int> positions;                  // fed column -> original source index

  const Eigen::MatrixXd& top() const { return layer_outputs.back(); }
  int length() const { return static_cast<int>(positions.size()); }
};

inline EncodedSource encode_source(const Seq2SeqModel& model, const TokenSequence& x,
                                   bool reverse) {
  if (model.is_language_model()) throw DataError("language model has no encoder");
  if (x.empty()) throw DataError("cannot encode an empty source");
  for (int t : x) {
    if (t < 0 || t >= model.source_vocab())
      throw DataError("source token id out of range: " + std::to_string(t));
    if (t == Vocabulary::kEosId) throw DataError("source must not contain the end marker");
  }
  int n = static_cast<int>(x.size());
  int layers = model.layers();
  EncodedSource enc;
  enc.positions.resize(n);
  for (int j = 0; j < n; ++j) enc.positions[j] = reverse ? n - 1 - j : j;
  enc.layer_outputs.assign(layers, Eigen::MatrixXd(model.hidden, n));
  enc.final_states.assign(layers, zero_state(model.hidden));
  std::vector<LstmState> state(layers, zero_state(model.hidden));
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd below = model.source_embedding.row(x[enc.positions[j]]).transpose();
    for (int l = 0; l < layers; ++l) {
      state[l] = lstm_step(model.encoder[l], state[l], below);
      below = state[l].h;
      enc.layer_outputs[l].col(j) = state[l].h;
    }
  }
  enc.final_states = state;
  return enc;
}

struct DecoderState {
  std::vector<LstmState> layers;
};

inline DecoderState initial_decoder_state(const EncodedSource& enc) {
  return {enc.final_states};
}

struct StepPrediction {
  Eigen::VectorXd log_probs;
  Eigen::VectorXd attn;      // fed-order attention weights; empty without attention
  Eigen::VectorXd attended;  // vector fed back into the next step; empty without attention
};

// Distribution over the next target token given the current decoder state.
inline StepPrediction predict_next(const Seq2SeqModel& model, const EncodedSource* enc,
                                   const DecoderState& state) {
  StepPrediction out;
  const Eigen::VectorXd& h = state.layers.back().h;
  if (model.use_attention) {
    if (!enc) throw DataError("attention model needs an encoded source");
    out.attn = attention_weights(h, enc->top(), model.attention.w_score);
    Eigen::VectorXd ctx = attention_context(out.attn, enc->top());
    Eigen::VectorXd q(2 * model.hidden);
    q << h, ctx;
    out.attended = (model.attention.w_combine * q).array().tanh().matrix();
    out.log_probs = log_softmax(model.attention.w_output * out.attended);
  } else {
    out.log_probs = log_softmax(model.output_projection * h);
  }
  return out;
}

// Consumes one target token (and, with attention, the attended vector from the
// prediction that emitted it).
inline DecoderState advance_decoder(const Seq2SeqModel& model, const DecoderState& state,
                                    int token, const Eigen::VectorXd& attended = {}) {
  if (token < 0 || token >= model.target_vocab())
    throw DataError("target token id out of range: " + std::to_string(token));
  Eigen::VectorXd ext;
  if (model.use_attention) {
    if (attended.size() != model.hidden)
      throw DataError("advance_decoder: missing attended vector for input feeding");
    ext.resize(2 * model.hidden);
    ext << model.target_embedding.row(token).transpose(), attended;
  } else {
    ext = model.target_embedding.row(token).transpose();
  }
  DecoderState next;
  next.layers.resize(model.layers());
  Eigen::VectorXd below = std::move(ext);
  for (int l = 0; l < model.layers(); ++l) {
    next.layers[l] = lstm_step(model.decoder[l], state.layers[l], below);
    below = next.layers[l].h;
  }
  return next;
}

// State of a language model that has consumed the start marker.
inline DecoderState initial_lm_state(const Seq2SeqModel& model) {
  if (!model.is_language_model()) throw DataError("not a language model");
  DecoderState zeros{std::vector<LstmState>(model.layers(), zero_state(model.hidden))};
  return advance_decoder(model, zeros, Vocabulary::kEosId);
}

inline void check_target_sequence(const Seq2SeqModel& model, const TokenSequence& y) {
  if (y.empty() || y.back() != Vocabulary::kEosId)
    throw DataError("target sequence must end with the end marker");
  for (size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= model.target_vocab())
      throw DataError("target token id out of range: " + std::to_string(y[i]));
    if (y[i] == Vocabulary::kEosId && i + 1 != y.size())
      throw DataError("end marker inside a target sequence");
  }
}

// log p(y | x) under the model, including the end-marker term. y must carry
// its terminal end marker.
inline double sequence_logprob(const Seq2SeqModel& model, const TokenSequence& x,
                               const TokenSequence& y) {
  if (model.is_language_model()) throw DataError("use lm_logprob for language models");
  check_target_sequence(model, y);
  EncodedSource enc = encode_source(model, x, true);
  DecoderState state = initial_decoder_state(enc);
  double lp = 0.0;
  for (size_t t = 0; t < y.size(); ++t) {
    StepPrediction pred = predict_next(model, &enc, state);
    lp += pred.log_probs(y[t]);
    if (t + 1 < y.size()) state = advance_decoder(model, state, y[t], pred.attended);
  }
  return lp;
}

// log p(y) under a language model, including the end-marker term.
inline double lm_logprob(const Seq2SeqModel& model, const TokenSequence& y) {
  if (!model.is_language_model()) throw DataError("lm_logprob needs a language model");
  check_target_sequence(model, y);
  DecoderState state = initial_lm_state(model);
  double lp = 0.0;
  for (size_t t = 0; t < y.size(); ++t) {
    StepPrediction pred = predict_next(model, nullptr, state);
    lp += pred.log_probs(y[t]);
    if (t + 1 < y.size()) state = advance_decoder(model, state, y[t]);
  }
  return lp;
}

struct ForcedDecodeResult {
  double logprob = 0.0;
  // Attention weights per target step (terminal end marker included), indexed
  // by original source position.
  std::vector<Eigen::VectorXd> attention;
  // Most-attended source position per content token; ties take the lowest.
  std::vector<int> alignment;
};

inline ForcedDecodeResult forced_decode(const Seq2SeqModel& model, const TokenSequence& x,
                                        const TokenSequence& y) {
  if (!model.use_attention) throw DataError("alignment requires attention");
  check_target_sequence(model, y);
  EncodedSource enc = encode_source(model, x, true);
  DecoderState state = initial_decoder_state(enc);
  ForcedDecodeResult out;
  for (size_t t = 0; t < y.size(); ++t) {
    StepPrediction pred = predict_next(model, &enc, state);
    out.logprob += pred.log_probs(y[t]);
    Eigen::VectorXd by_source(enc.length());
    for (int j = 0; j < enc.length(); ++j) by_source(enc.positions[j]) = pred.attn(j);
    if (t + 1 < y.size()) {
      int best = 0;
      for (int j = 1; j < enc.length(); ++j)
        if (by_source(j) > by_source(best)) best = j;
      out.alignment.push_back(best);
    }
    out.attention.push_back(std::move(by_source));
    if (t + 1 < y.size()) state = advance_decoder(model, state, y[t], pred.attended);
  }
  return out;
}

// Model files are self-describing text: a version line, direction and shape
// header, then every parameter matrix with an explicit shape line. Values use
// 17 significant digits so reload is bit-exact.
inline void save_model(const Seq2SeqModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "mmimt-model 1\n";
  out << "direction " << direction_name(model.direction) << '\n';
  out << "layers " << model.layers() << '\n';
  out << "hidden " << model.hidden << '\n';
  out << "source_vocab " << model.source_vocab() << '\n';
  out << "target_vocab " << model.target_vocab() << '\n';
  out << "attention " << (model.use_attention ? 1 : 0) << '\n';
  for_each_parameter(model, [&](const std::string& name, const Eigen::MatrixXd& w) {
    out << "matrix " << name << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c) out << ' ';
        out << fmt_g17(w(r, c));
      }
      out << '\n';
    }
  });
  if (!out) throw DataError("write failed for " + path);
}

namespace detail {

inline std::string expect_field(std::istream& in, const std::string& key,
                                const std::string& path) {
  std::string k, v;
  if (!(in >> k >> v) || k != key) throw DataError(path + ": expected '" + key + "' field");
  return v;
}

}  // namespace detail

inline Seq2SeqModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "mmimt-model" || version != 1)
    throw DataError(path + ": not a model file");
  Direction dir = parse_direction(detail::expect_field(in, "direction", path));
  int layers = static_cast<int>(parse_long(detail::expect_field(in, "layers", path), path));
  int hidden = static_cast<int>(parse_long(detail::expect_field(in, "hidden", path), path));
  int src_v = static_cast<int>(parse_long(detail::expect_field(in, "source_vocab", path), path));
  int tgt_v = static_cast<int>(parse_long(detail::expect_field(in, "target_vocab", path), path));
  int attn = static_cast<int>(parse_long(detail::expect_field(in, "attention", path), path));

  Seq2SeqModel model = src_v == 0 ? make_language_model(tgt_v, layers, hidden)
                                  : make_seq2seq(src_v, tgt_v, layers, hidden, attn != 0, dir);
  model.direction = dir;
  for_each_parameter(model, [&](const std::string& name, Eigen::MatrixXd& w) {
    std::string kw, got;
    long rows = 0, cols = 0;
    if (!(in >> kw >> got >> rows >> cols) || kw != "matrix")
      throw DataError(path + ": expected matrix header for " + name);
    if (got != name || rows != w.rows() || cols != w.cols())
      throw DataError(path + ": unexpected matrix " + got);
    std::string tok;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(in >> tok)) throw DataError(path + ": truncated matrix " + name);
        w(r, c) = parse_double(tok, path);
      }
  });
  return model;
}

}  // namespace mmimt
