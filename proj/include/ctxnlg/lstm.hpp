#pragma once

#include <string>

#include "ctxnlg/autodiff.hpp"

namespace ctxnlg {

/// LSTM cell parameters, gates fused row-wise in the order
/// input, forget, output, candidate: w_x is [4H, In], w_h is [4H, H],
/// bias is [4H].
struct LstmCellParams {
  ParamTensor w_x;
  ParamTensor w_h;
  ParamTensor bias;

  int input_width() const { return w_x.value.cols(); }
  int hidden_width() const { return w_h.value.cols(); }

  static LstmCellParams create(int input_width, int hidden_width) {
    LstmCellParams p;
    p.w_x.value = Tensor::zeros({4 * hidden_width, input_width});
    p.w_h.value = Tensor::zeros({4 * hidden_width, hidden_width});
    p.bias.value = Tensor::zeros({4 * hidden_width});
    return p;
  }
};

/// Per-tape bound handles for one cell.
struct LstmVars {
  Var w_x, w_h, bias;
  int hidden = 0;
};

inline LstmVars bind_lstm(Tape& t, LstmCellParams& p, const std::string& name) {
  LstmVars v;
  v.w_x = t.param(p.w_x, name + ".w_x");
  v.w_h = t.param(p.w_h, name + ".w_h");
  v.bias = t.param(p.bias, name + ".bias");
  v.hidden = p.hidden_width();
  return v;
}

struct LstmState {
  Var h, cell;
};

/// One LSTM update. Widths are checked by the fused op and reported with
/// the offending parameter name.
inline LstmState lstm_step(Tape& t, const LstmVars& p, Var x, Var h_prev,
                           Var cell_prev) {
  const int hw = p.hidden;
  Var hc = t.lstm(p.w_x, p.w_h, p.bias, x, h_prev, cell_prev);
  return {t.slice(hc, 0, hw), t.slice(hc, hw, hw)};
}

// Inference-only mirror of lstm_step over plain tensors.
namespace kern {

struct LstmWork {
  std::vector<double> z;  // 4H preactivations
};

inline void lstm_step_fwd(const LstmCellParams& p, const double* x,
                          const double* h_prev, const double* cell_prev,
                          double* h_out, double* cell_out, LstmWork& work) {
  const int hw = p.hidden_width();
  work.z.resize(4 * hw);
  double* z = work.z.data();
  matvec(p.w_x.value, x, z);
  matvec_add_acc(p.w_h.value, h_prev, p.bias.value.values.data(), z);
  for (int i = 0; i < hw; ++i) {
    double gi = sigmoid(z[i]);
    double gf = sigmoid(z[hw + i]);
    double go = sigmoid(z[2 * hw + i]);
    double gc = std::tanh(z[3 * hw + i]);
    double cell = gf * cell_prev[i] + gi * gc;
    cell_out[i] = cell;
    h_out[i] = go * std::tanh(cell);
  }
}

}  // namespace kern
}  // namespace ctxnlg
