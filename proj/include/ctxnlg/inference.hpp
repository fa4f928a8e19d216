#pragma once

#include <vector>

#include "ctxnlg/model.hpp"

namespace ctxnlg {

/// Forward-only evaluation over frozen parameters, sharing the low-level
/// kernels with the tape ops. Used by beam/greedy decoding and validation,
/// where gradients are not needed.
class InferenceModel {
 public:
  explicit InferenceModel(const ModelParams& p) : p_(p) {}

  const ModelParams& params() const { return p_; }

  struct Encoded {
    std::vector<Tensor> states;   // one per position, width S
    std::vector<Tensor> keys;     // W_K h_i
    Tensor final_h, final_c;
  };

  struct State {
    Tensor h, cell;
  };

  Encoded encode(const std::vector<int>& ctx_ids,
                 const std::vector<int>& da_ids) const {
    Encoded enc;
    const int h = p_.config.lstm_width;
    switch (p_.config.mode) {
      case Mode::kBaseline: {
        if (da_ids.empty())
          throw std::invalid_argument("encode: empty input");
        run(p_.enc, p_.emb_da.value, da_ids, enc.states, enc.final_h, enc.final_c);
        break;
      }
      case Mode::kPrepend: {
        if (ctx_ids.empty() && da_ids.empty())
          throw std::invalid_argument("encode: empty input");
        std::vector<Tensor> em;
        for (int id : ctx_ids) em.push_back(embed_row(p_.emb_ctx.value, id));
        for (int id : da_ids) em.push_back(embed_row(p_.emb_da.value, id));
        run_embedded(p_.enc, em, enc.states, enc.final_h, enc.final_c);
        break;
      }
      case Mode::kDual: {
        std::vector<int> ctx = ctx_ids;
        if (ctx.empty()) ctx.push_back(Vocabulary::kPad);
        std::vector<Tensor> cs, ds;
        Tensor cfh, cfc, dfh, dfc;
        run(p_.enc_ctx, p_.emb_ctx.value, ctx, cs, cfh, cfc);
        run(p_.enc, p_.emb_da.value, da_ids, ds, dfh, dfc);
        if (p_.config.dual_concat == DualConcat::kSequence) {
          enc.states = cs;
          enc.states.insert(enc.states.end(), ds.begin(), ds.end());
          enc.final_h = dfh;
          enc.final_c = dfc;
        } else {
          const std::size_t n = std::max(cs.size(), ds.size());
          Tensor zero = Tensor::zeros({h});
          for (std::size_t i = 0; i < n; ++i) {
            auto pick = [&](const std::vector<Tensor>& v) -> const Tensor& {
              std::size_t pad = n - v.size();
              return i < pad ? zero : v[i - pad];
            };
            enc.states.push_back(concat(pick(cs), pick(ds)));
          }
          enc.final_h = concat(cfh, dfh);
          enc.final_c = concat(cfc, dfc);
        }
        break;
      }
    }
    for (const Tensor& s : enc.states) {
      Tensor k = Tensor::zeros({p_.config.att_width});
      kern::matvec(p_.att_wk.value, s.values.data(), k.values.data());
      enc.keys.push_back(std::move(k));
    }
    return enc;
  }

  State initial_state(const Encoded& enc) const {
    return {enc.final_h, enc.final_c};
  }

  /// Advances the decoder one step and returns log-probabilities over the
  /// output vocabulary.
  Tensor step(State& state, int prev_token, const Encoded& enc) const {
    const int a = p_.config.att_width;
    const int s_w = p_.state_width();
    const int e = p_.config.emb_width;
    const std::size_t n = enc.states.size();

    // Attention from the pre-update state.
    Tensor q = Tensor::zeros({a});
    kern::matvec(p_.att_wq.value, state.h.values.data(), q.values.data());
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& k = enc.keys[i];
      double acc = 0.0;
      for (int d = 0; d < a; ++d)
        acc += p_.att_v.value.values[d] * std::tanh(q.values[d] + k.values[d]);
      scores[i] = acc;
    }
    std::vector<double> alpha(n);
    kern::softmax(scores.data(), static_cast<int>(n), alpha.data());
    Tensor c_t = Tensor::zeros({s_w});
    for (std::size_t i = 0; i < n; ++i) {
      const double w = alpha[i];
      const Tensor& h = enc.states[i];
      for (int d = 0; d < s_w; ++d) c_t.values[d] += w * h.values[d];
    }

    // Input projection of (y_emb . c_t).
    Tensor ycat = Tensor::zeros({e + s_w});
    const Tensor& emb = p_.emb_out.value;
    const double* yrow = emb.values.data() + static_cast<std::size_t>(prev_token) * e;
    std::copy(yrow, yrow + e, ycat.values.begin());
    std::copy(c_t.values.begin(), c_t.values.end(), ycat.values.begin() + e);
    Tensor x = Tensor::zeros({e});
    kern::matvec(p_.w_s.value, ycat.values.data(), x.values.data());

    // LSTM update.
    const int d_w = p_.dec_width();
    Tensor h_new = Tensor::zeros({d_w}), c_new = Tensor::zeros({d_w});
    kern::LstmWork work;
    kern::lstm_step_fwd(p_.dec, x.values.data(), state.h.values.data(),
                        state.cell.values.data(), h_new.values.data(),
                        c_new.values.data(), work);
    state.h = std::move(h_new);
    state.cell = std::move(c_new);

    // Output logits over (s_t . c_t), returned as log-probabilities.
    Tensor scat = Tensor::zeros({d_w + s_w});
    std::copy(state.h.values.begin(), state.h.values.end(), scat.values.begin());
    std::copy(c_t.values.begin(), c_t.values.end(), scat.values.begin() + d_w);
    Tensor logits = Tensor::zeros({p_.vocab_out.size()});
    kern::matvec(p_.w_y.value, scat.values.data(), logits.values.data());
    double lse = kern::logsumexp(logits.values.data(),
                                 static_cast<int>(logits.numel()));
    for (double& v : logits.values) v -= lse;
    return logits;
  }

  /// Teacher-forced log-probability of a token sequence (which must end
  /// with EOS or be a cap-length prefix).
  double score_sequence(const Encoded& enc, const std::vector<int>& tokens) const {
    State st = initial_state(enc);
    int prev = Vocabulary::kGo;
    double logp = 0.0;
    for (int tok : tokens) {
      Tensor lp = step(st, prev, enc);
      logp += lp.values[tok];
      prev = tok;
    }
    return logp;
  }

 private:
  static Tensor embed_row(const Tensor& table, int id) {
    const int e = table.cols();
    Tensor out = Tensor::zeros({e});
    const double* src = table.values.data() + static_cast<std::size_t>(id) * e;
    std::copy(src, src + e, out.values.begin());
    return out;
  }

  static Tensor concat(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({static_cast<int>(a.numel() + b.numel())});
    std::copy(a.values.begin(), a.values.end(), out.values.begin());
    std::copy(b.values.begin(), b.values.end(), out.values.begin() + a.numel());
    return out;
  }

  void run(const LstmCellParams& cell, const Tensor& table,
           const std::vector<int>& ids, std::vector<Tensor>& states,
           Tensor& final_h, Tensor& final_c) const {
    if (ids.empty()) throw std::invalid_argument("encode: empty input");
    std::vector<Tensor> em;
    em.reserve(ids.size());
    for (int id : ids) em.push_back(embed_row(table, id));
    run_embedded(cell, em, states, final_h, final_c);
  }

  void run_embedded(const LstmCellParams& cell, const std::vector<Tensor>& inputs,
                    std::vector<Tensor>& states, Tensor& final_h,
                    Tensor& final_c) const {
    const int h = cell.hidden_width();
    Tensor hh = Tensor::zeros({h}), cc = Tensor::zeros({h});
    kern::LstmWork work;
    for (const Tensor& x : inputs) {
      Tensor nh = Tensor::zeros({h}), nc = Tensor::zeros({h});
      kern::lstm_step_fwd(cell, x.values.data(), hh.values.data(),
                          cc.values.data(), nh.values.data(), nc.values.data(),
                          work);
      hh = std::move(nh);
      cc = std::move(nc);
      states.push_back(hh);
    }
    final_h = std::move(hh);
    final_c = std::move(cc);
  }

  const ModelParams& p_;
};

}  // namespace ctxnlg
