#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxnlg/adam.hpp"
#include "ctxnlg/autodiff.hpp"
#include "ctxnlg/corpus.hpp"
#include "ctxnlg/lstm.hpp"

namespace ctxnlg {

enum class Mode { kBaseline, kPrepend, kDual };

/// How the dual setup combines the two encoders' state sequences:
/// position-wise concatenation into double-width vectors (default), or
/// appending the sequences end to end at single width.
enum class DualConcat { kPosition, kSequence };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kBaseline: return "baseline";
    case Mode::kPrepend: return "prepend";
    case Mode::kDual: return "dual";
  }
  return "?";
}

inline Mode mode_from_name(const std::string& s) {
  if (s == "baseline") return Mode::kBaseline;
  if (s == "prepend") return Mode::kPrepend;
  if (s == "dual") return Mode::kDual;
  throw std::runtime_error("unknown mode '" + s + "'");
}

struct ModelConfig {
  Mode mode = Mode::kBaseline;
  int emb_width = 50;
  int lstm_width = 128;
  int att_width = 128;
  DualConcat dual_concat = DualConcat::kPosition;
  int max_decode_len = 60;
  std::uint64_t seed = 1;
  double init_range = 0.1;

  nlohmann::json to_json() const {
    return {{"mode", mode_name(mode)},
            {"emb_width", emb_width},
            {"lstm_width", lstm_width},
            {"att_width", att_width},
            {"dual_concat", dual_concat == DualConcat::kPosition ? "position" : "sequence"},
            {"max_decode_len", max_decode_len},
            {"seed", seed},
            {"init_range", init_range}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.emb_width = j.at("emb_width").get<int>();
    c.lstm_width = j.at("lstm_width").get<int>();
    c.att_width = j.at("att_width").get<int>();
    c.dual_concat = j.at("dual_concat").get<std::string>() == "sequence"
                        ? DualConcat::kSequence
                        : DualConcat::kPosition;
    c.max_decode_len = j.at("max_decode_len").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.init_range = j.at("init_range").get<double>();
    return c;
  }
};

/// All trainable arrays of the generator plus its dictionaries.
///
/// Widths: E = emb_width, H = lstm_width. The encoder-state width S and the
/// decoder width D are H, except in the position-concatenated dual setup
/// where both are 2H. W_S projects (y_emb . c_t) down to E; W_Y maps
/// (s_t . c_t) to the output vocabulary.
struct ModelParams {
  ModelConfig config;
  Vocabulary vocab_da, vocab_ctx, vocab_out;

  ParamTensor emb_da, emb_ctx, emb_out;
  LstmCellParams enc, enc_ctx, dec;
  ParamTensor att_wq, att_wk, att_v;
  ParamTensor w_s, w_y;

  bool has_context_vocab() const { return config.mode != Mode::kBaseline; }
  bool has_context_encoder() const { return config.mode == Mode::kDual; }

  int state_width() const {
    return config.mode == Mode::kDual && config.dual_concat == DualConcat::kPosition
               ? 2 * config.lstm_width
               : config.lstm_width;
  }
  int dec_width() const { return state_width(); }

  static ModelParams create(const ModelConfig& cfg, Vocabulary da,
                            Vocabulary ctx, Vocabulary out) {
    ModelParams p;
    p.config = cfg;
    p.vocab_da = std::move(da);
    p.vocab_ctx = std::move(ctx);
    p.vocab_out = std::move(out);
    const int e = cfg.emb_width, h = cfg.lstm_width, a = cfg.att_width;
    const int s = p.state_width(), d = p.dec_width();
    p.emb_da.value = Tensor::zeros({p.vocab_da.size(), e});
    p.emb_out.value = Tensor::zeros({p.vocab_out.size(), e});
    if (p.has_context_vocab())
      p.emb_ctx.value = Tensor::zeros({p.vocab_ctx.size(), e});
    p.enc = LstmCellParams::create(e, h);
    if (p.has_context_encoder()) p.enc_ctx = LstmCellParams::create(e, h);
    p.dec = LstmCellParams::create(e, d);
    p.att_wq.value = Tensor::zeros({a, d});
    p.att_wk.value = Tensor::zeros({a, s});
    p.att_v.value = Tensor::zeros({a});
    p.w_s.value = Tensor::zeros({e, e + s});
    p.w_y.value = Tensor::zeros({p.vocab_out.size(), d + s});
    return p;
  }

  void init(Rng& rng) {
    for (auto& [name, p] : params())
      rng.fill_uniform(p->value, -config.init_range, config.init_range);
  }

  ParamRefs params() {
    ParamRefs r;
    r.emplace_back("emb_da", &emb_da);
    if (has_context_vocab()) r.emplace_back("emb_ctx", &emb_ctx);
    r.emplace_back("emb_out", &emb_out);
    r.emplace_back("enc.w_x", &enc.w_x);
    r.emplace_back("enc.w_h", &enc.w_h);
    r.emplace_back("enc.bias", &enc.bias);
    if (has_context_encoder()) {
      r.emplace_back("enc_ctx.w_x", &enc_ctx.w_x);
      r.emplace_back("enc_ctx.w_h", &enc_ctx.w_h);
      r.emplace_back("enc_ctx.bias", &enc_ctx.bias);
    }
    r.emplace_back("dec.w_x", &dec.w_x);
    r.emplace_back("dec.w_h", &dec.w_h);
    r.emplace_back("dec.bias", &dec.bias);
    r.emplace_back("att.wq", &att_wq);
    r.emplace_back("att.wk", &att_wk);
    r.emplace_back("att.v", &att_v);
    r.emplace_back("w_s", &w_s);
    r.emplace_back("w_y", &w_y);
    return r;
  }

  nlohmann::json to_json() {
    nlohmann::json arrays = nlohmann::json::object();
    for (auto& [name, p] : params())
      arrays[name] = {{"shape", p->value.shape}, {"values", p->value.values}};
    return {{"config", config.to_json()},
            {"vocab_da", vocab_da.to_json()},
            {"vocab_ctx", vocab_ctx.to_json()},
            {"vocab_out", vocab_out.to_json()},
            {"params", arrays}};
  }

  static ModelParams from_json(const nlohmann::json& j) {
    ModelParams p = create(ModelConfig::from_json(j.at("config")),
                           Vocabulary::from_json(j.at("vocab_da")),
                           Vocabulary::from_json(j.at("vocab_ctx")),
                           Vocabulary::from_json(j.at("vocab_out")));
    const auto& arrays = j.at("params");
    for (auto& [name, ref] : p.params()) {
      const auto& a = arrays.at(name);
      Tensor t(a.at("shape").get<std::vector<int>>(),
               a.at("values").get<std::vector<double>>());
      if (t.shape != ref->value.shape)
        throw std::runtime_error("model load: shape mismatch for " + name);
      ref->value = std::move(t);
    }
    return p;
  }

  void save(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("model save: cannot open " + path);
    out << to_json().dump() << "\n";
  }

  static ModelParams load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("model load: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

/// Per-tape bound handles for every parameter.
struct BoundParams {
  Var emb_da, emb_ctx, emb_out;
  LstmVars enc, enc_ctx, dec;
  Var att_wq, att_wk, att_v, w_s, w_y;
  const ModelParams* model = nullptr;
};

inline BoundParams bind_model(Tape& t, ModelParams& p) {
  BoundParams b;
  b.model = &p;
  b.emb_da = t.param(p.emb_da, "emb_da");
  if (p.has_context_vocab()) b.emb_ctx = t.param(p.emb_ctx, "emb_ctx");
  b.emb_out = t.param(p.emb_out, "emb_out");
  b.enc = bind_lstm(t, p.enc, "enc");
  if (p.has_context_encoder()) b.enc_ctx = bind_lstm(t, p.enc_ctx, "enc_ctx");
  b.dec = bind_lstm(t, p.dec, "dec");
  b.att_wq = t.param(p.att_wq, "att.wq");
  b.att_wk = t.param(p.att_wk, "att.wk");
  b.att_v = t.param(p.att_v, "att.v");
  b.w_s = t.param(p.w_s, "w_s");
  b.w_y = t.param(p.w_y, "w_y");
  return b;
}

/// Encoder output on the tape: one state per input position plus the final
/// hidden/cell pair the decoder starts from.
struct EncoderStates {
  std::vector<Var> states;
  Var final_h, final_c;
  int width = 0;
};

namespace detail {

inline EncoderStates run_encoder(Tape& t, const LstmVars& cell,
                                 const std::vector<Var>& inputs, int hidden) {
  EncoderStates out;
  out.width = hidden;
  Var h = t.input(Tensor::zeros({hidden}));
  Var c = t.input(Tensor::zeros({hidden}));
  for (Var x : inputs) {
    LstmState s = lstm_step(t, cell, x, h, c);
    h = s.h;
    c = s.cell;
    out.states.push_back(h);
  }
  out.final_h = h;
  out.final_c = c;
  return out;
}

inline std::vector<Var> embed(Tape& t, Var table, const std::vector<int>& ids) {
  std::vector<Var> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(t.row(table, id));
  return out;
}

}  // namespace detail

inline EncoderStates encode_baseline(Tape& t, const BoundParams& b,
                                     const std::vector<int>& da_ids) {
  if (da_ids.empty())
    throw std::invalid_argument("encode_baseline: empty input");
  return detail::run_encoder(t, b.enc, detail::embed(t, b.emb_da, da_ids),
                             b.model->config.lstm_width);
}

/// Context tokens (their own dictionary) are prepended to the DA triples and
/// run through the single encoder.
inline EncoderStates encode_prepended(Tape& t, const BoundParams& b,
                                      const std::vector<int>& ctx_ids,
                                      const std::vector<int>& da_ids) {
  if (ctx_ids.empty() && da_ids.empty())
    throw std::invalid_argument("encode_prepended: empty input");
  std::vector<Var> inputs = detail::embed(t, b.emb_ctx, ctx_ids);
  std::vector<Var> da_in = detail::embed(t, b.emb_da, da_ids);
  inputs.insert(inputs.end(), da_in.begin(), da_in.end());
  return detail::run_encoder(t, b.enc, inputs, b.model->config.lstm_width);
}

/// Two independent encoders; position-wise concatenation left-pads the
/// shorter state sequence with zero vectors.
inline EncoderStates encode_dual(Tape& t, const BoundParams& b,
                                 std::vector<int> ctx_ids,
                                 const std::vector<int>& da_ids) {
  if (ctx_ids.empty()) ctx_ids.push_back(Vocabulary::kPad);
  EncoderStates ctx = detail::run_encoder(
      t, b.enc_ctx, detail::embed(t, b.emb_ctx, ctx_ids), b.model->config.lstm_width);
  EncoderStates da = detail::run_encoder(
      t, b.enc, detail::embed(t, b.emb_da, da_ids), b.model->config.lstm_width);

  if (b.model->config.dual_concat == DualConcat::kSequence) {
    EncoderStates out;
    out.width = b.model->config.lstm_width;
    out.states = ctx.states;
    out.states.insert(out.states.end(), da.states.begin(), da.states.end());
    out.final_h = da.final_h;
    out.final_c = da.final_c;
    return out;
  }

  const int h = b.model->config.lstm_width;
  const std::size_t n = std::max(ctx.states.size(), da.states.size());
  Var zero = t.input(Tensor::zeros({h}));
  EncoderStates out;
  out.width = 2 * h;
  for (std::size_t i = 0; i < n; ++i) {
    auto pick = [&](const EncoderStates& e) {
      std::size_t pad = n - e.states.size();
      return i < pad ? zero : e.states[i - pad];
    };
    out.states.push_back(t.concat(pick(ctx), pick(da)));
  }
  out.final_h = t.concat(ctx.final_h, da.final_h);
  out.final_c = t.concat(ctx.final_c, da.final_c);
  return out;
}

inline EncoderStates encode_for_mode(Tape& t, const BoundParams& b,
                                     const std::vector<int>& ctx_ids,
                                     const std::vector<int>& da_ids) {
  switch (b.model->config.mode) {
    case Mode::kBaseline: return encode_baseline(t, b, da_ids);
    case Mode::kPrepend: return encode_prepended(t, b, ctx_ids, da_ids);
    case Mode::kDual: return encode_dual(t, b, ctx_ids, da_ids);
  }
  throw std::logic_error("bad mode");
}

/// Projected encoder states W_K h_i, shared across decoder steps.
inline std::vector<Var> attention_keys(Tape& t, const BoundParams& b,
                                       const EncoderStates& enc) {
  std::vector<Var> keys;
  keys.reserve(enc.states.size());
  for (Var h : enc.states) keys.push_back(t.matvec(b.att_wk, h));
  return keys;
}

/// Attention context: softmax over v . tanh(W_Q s_prev + W_K h_i), then the
/// weighted sum of encoder states. Queried with the pre-update decoder state.
inline Var attend(Tape& t, const BoundParams& b, Var s_prev,
                  const EncoderStates& enc, const std::vector<Var>& keys) {
  Var q = t.matvec(b.att_wq, s_prev);
  std::vector<Var> scores;
  scores.reserve(keys.size());
  for (Var k : keys) scores.push_back(t.dot(b.att_v, t.tanh(t.add(q, k))));
  Var alpha = t.softmax(t.stack(scores));
  return t.weighted_sum(alpha, enc.states);
}

struct DecoderState {
  Var h, cell;
  int prev_token = Vocabulary::kGo;
  int step = 0;
};

struct DecodeStep {
  DecoderState state;
  Var logits;
  Var attention_ctx;
};

/// One decoder update: attention from the previous state, input projection
/// of (y_emb . c_t), LSTM update, output logits over the vocabulary.
inline DecodeStep decode_step(Tape& t, const BoundParams& b,
                              const DecoderState& state,
                              const EncoderStates& enc,
                              const std::vector<Var>& keys) {
  Var c_t = attend(t, b, state.h, enc, keys);
  Var y_emb = t.row(b.emb_out, state.prev_token);
  Var x = t.matvec(b.w_s, t.concat(y_emb, c_t));
  LstmState next = lstm_step(t, b.dec, x, state.h, state.cell);
  Var logits = t.matvec(b.w_y, t.concat(next.h, c_t));
  DecodeStep out;
  out.state = {next.h, next.cell, -1, state.step + 1};
  out.logits = logits;
  out.attention_ctx = c_t;
  return out;
}

/// Output distribution for one step (softmax over logits).
inline Var decode_step_probs(Tape& t, Var logits) { return t.softmax(logits); }

/// Mean per-token negative log-likelihood under teacher forcing. The
/// reference is consumed up to and including its first EOS; anything after
/// is ignored.
inline Var sequence_loss(Tape& t, const BoundParams& b,
                         const std::vector<int>& ctx_ids,
                         const std::vector<int>& da_ids,
                         const std::vector<int>& ref_ids) {
  std::vector<int> ref;
  for (int id : ref_ids) {
    ref.push_back(id);
    if (id == Vocabulary::kEos) break;
  }
  if (ref.empty() || ref.back() != Vocabulary::kEos)
    throw std::invalid_argument("sequence_loss: reference must end with EOS");

  EncoderStates enc = encode_for_mode(t, b, ctx_ids, da_ids);
  std::vector<Var> keys = attention_keys(t, b, enc);
  DecoderState state{enc.final_h, enc.final_c, Vocabulary::kGo, 0};
  std::vector<Var> losses;
  for (int target : ref) {
    DecodeStep step = decode_step(t, b, state, enc, keys);
    losses.push_back(t.cross_entropy(step.logits, target));
    state = step.state;
    state.prev_token = target;  // teacher forcing
  }
  return t.scale(t.add_n(losses), 1.0 / static_cast<double>(losses.size()));
}

/// Encodes reference tokens, appending EOS. With allow_unk=false, a token
/// missing from the vocabulary is an error instead of UNK.
inline std::vector<int> encode_reference(const Vocabulary& v,
                                         const std::vector<std::string>& tokens,
                                         bool allow_unk = true) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& tok : tokens) {
    int id = v.encode(tok);
    if (id == Vocabulary::kUnk && !allow_unk && tok != "<unk>")
      throw std::runtime_error("reference token '" + tok +
                               "' missing from the output vocabulary");
    ids.push_back(id);
  }
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace ctxnlg
