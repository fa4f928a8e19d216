#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ctxnlg/tensor.hpp"

namespace ctxnlg {

/// A trainable array together with its gradient accumulator. Gradients are
/// accumulated across backward passes until the caller zeroes them (one
/// optimizer step per batch).
struct ParamTensor {
  Tensor value;
  Tensor grad;

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor::zeros(value.shape);
  }
  void zero_grad() { grad.fill(0.0); }
};

struct Var {
  std::int32_t id = -1;
};

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kMatVec,
  kRow,
  kAdd,
  kAddN,
  kMul,
  kSigmoid,
  kTanh,
  kConcat,
  kSlice,
  kSoftmax,
  kPick,
  kStack,
  kScale,
  kSum,
  kDot,
  kCrossEntropy,
  kBceLogits,
  kWeightedSum,
  kLstm,
};

/// Reverse-mode tape: ops evaluate eagerly on creation and record enough to
/// replay the chain rule back to every participating parameter.
class Tape {
  struct Node {
    Op op;
    std::vector<std::int32_t> in;
    Tensor val;
    Tensor grad;
    int aux = 0;
    int aux2 = 0;
    std::vector<double> aux_data;
    const Tensor* bound_val = nullptr;
    Tensor* bound_grad = nullptr;
    std::string name;
  };

 public:
  Var input(Tensor v) { return make(Op::kInput, {}, std::move(v)); }

  Var param(ParamTensor& p, std::string name) {
    p.ensure_grad();
    Var v = make(Op::kParam, {}, Tensor{});
    Node& n = nodes_[v.id];
    n.bound_val = &p.value;
    n.bound_grad = &p.grad;
    n.name = std::move(name);
    return v;
  }

  const Tensor& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.bound_val ? *n.bound_val : n.val;
  }

  /// Gradient of the last backward() loss w.r.t. v. Zero tensor if v did not
  /// participate.
  Tensor grad_of(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.bound_grad) return *n.bound_grad;
    if (n.grad.numel() > 0) return n.grad;
    return Tensor::zeros(value(v).shape);
  }

  std::size_t size() const { return nodes_.size(); }

  Var matvec(Var w, Var x) {
    const Tensor& wt = value(w);
    const Tensor& xt = value(x);
    if (wt.rank() != 2)
      fail("matvec", w, "needs a matrix left operand, got " + wt.shape_str());
    if (xt.numel() != wt.cols())
      fail("matvec", w,
           wt.shape_str() + " incompatible with vector " + xt.shape_str());
    Tensor out = Tensor::zeros({wt.rows()});
    kern::matvec(wt, xt.values.data(), out.values.data());
    return make(Op::kMatVec, {w.id, x.id}, std::move(out));
  }

  /// Row r of a matrix (embedding lookup).
  Var row(Var m, int r) {
    const Tensor& mt = value(m);
    if (mt.rank() != 2 || r < 0 || r >= mt.rows())
      fail("row", m, "row " + std::to_string(r) + " out of " + mt.shape_str());
    Tensor out = Tensor::zeros({mt.cols()});
    const double* src = mt.values.data() + static_cast<std::size_t>(r) * mt.cols();
    std::copy(src, src + mt.cols(), out.values.begin());
    Var v = make(Op::kRow, {m.id}, std::move(out));
    nodes_[v.id].aux = r;
    return v;
  }

  Var add(Var a, Var b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    if (!at.same_shape(bt))
      fail("add", a, at.shape_str() + " vs " + bt.shape_str());
    Tensor out = at;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += bt.values[i];
    return make(Op::kAdd, {a.id, b.id}, std::move(out));
  }

  Var add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("add_n: empty input");
    Tensor out = value(xs[0]);
    std::vector<std::int32_t> in{xs[0].id};
    for (std::size_t k = 1; k < xs.size(); ++k) {
      const Tensor& t = value(xs[k]);
      if (!t.same_shape(out))
        fail("add_n", xs[k], t.shape_str() + " vs " + out.shape_str());
      for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += t.values[i];
      in.push_back(xs[k].id);
    }
    return make(Op::kAddN, std::move(in), std::move(out));
  }

  Var mul(Var a, Var b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    if (!at.same_shape(bt))
      fail("mul", a, at.shape_str() + " vs " + bt.shape_str());
    Tensor out = at;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= bt.values[i];
    return make(Op::kMul, {a.id, b.id}, std::move(out));
  }

  Var sigmoid(Var a) {
    Tensor out = value(a);
    for (double& v : out.values) v = kern::sigmoid(v);
    return make(Op::kSigmoid, {a.id}, std::move(out));
  }

  Var tanh(Var a) {
    Tensor out = value(a);
    for (double& v : out.values) v = std::tanh(v);
    return make(Op::kTanh, {a.id}, std::move(out));
  }

  Var concat(Var a, Var b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    Tensor out = Tensor::zeros({static_cast<int>(at.numel() + bt.numel())});
    std::copy(at.values.begin(), at.values.end(), out.values.begin());
    std::copy(bt.values.begin(), bt.values.end(), out.values.begin() + at.numel());
    Var v = make(Op::kConcat, {a.id, b.id}, std::move(out));
    nodes_[v.id].aux = static_cast<int>(value(a).numel());
    return v;
  }

  Var slice(Var a, int begin, int len) {
    const Tensor& at = value(a);
    if (begin < 0 || len <= 0 || begin + len > at.numel())
      fail("slice", a, "range [" + std::to_string(begin) + ", +" +
                           std::to_string(len) + ") out of " + at.shape_str());
    Tensor out = Tensor::zeros({len});
    std::copy(at.values.begin() + begin, at.values.begin() + begin + len,
              out.values.begin());
    Var v = make(Op::kSlice, {a.id}, std::move(out));
    nodes_[v.id].aux = begin;
    nodes_[v.id].aux2 = len;
    return v;
  }

  Var softmax(Var a) {
    const Tensor& at = value(a);
    if (at.numel() == 0) fail("softmax", a, "empty input");
    Tensor out = Tensor::zeros(at.shape);
    kern::softmax(at.values.data(), static_cast<int>(at.numel()), out.values.data());
    return make(Op::kSoftmax, {a.id}, std::move(out));
  }

  Var pick(Var a, int i) {
    const Tensor& at = value(a);
    if (i < 0 || i >= at.numel())
      fail("pick", a, "index " + std::to_string(i) + " out of " + at.shape_str());
    Tensor out = Tensor::scalar(at.values[i]);
    Var v = make(Op::kPick, {a.id}, std::move(out));
    nodes_[v.id].aux = i;
    return v;
  }

  Var stack(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("stack: empty input");
    Tensor out = Tensor::zeros({static_cast<int>(xs.size())});
    std::vector<std::int32_t> in;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Tensor& t = value(xs[i]);
      if (t.numel() != 1) fail("stack", xs[i], "wants scalars, got " + t.shape_str());
      out.values[i] = t.values[0];
      in.push_back(xs[i].id);
    }
    return make(Op::kStack, std::move(in), std::move(out));
  }

  Var scale(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.values) v *= c;
    Var v = make(Op::kScale, {a.id}, std::move(out));
    nodes_[v.id].aux_data = {c};
    return v;
  }

  Var sum(Var a) {
    const Tensor& at = value(a);
    double s = 0.0;
    for (double v : at.values) s += v;
    return make(Op::kSum, {a.id}, Tensor::scalar(s));
  }

  Var dot(Var a, Var b) {
    const Tensor& at = value(a);
    const Tensor& bt = value(b);
    if (at.numel() != bt.numel())
      fail("dot", a, at.shape_str() + " vs " + bt.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < at.values.size(); ++i) s += at.values[i] * bt.values[i];
    return make(Op::kDot, {a.id, b.id}, Tensor::scalar(s));
  }

  /// -log softmax(logits)[target], fused for stability.
  Var cross_entropy(Var logits, int target) {
    const Tensor& zt = value(logits);
    const int n = static_cast<int>(zt.numel());
    if (target < 0 || target >= n)
      fail("cross_entropy", logits, "target " + std::to_string(target) +
                                        " out of " + zt.shape_str());
    std::vector<double> probs(n);
    kern::softmax(zt.values.data(), n, probs.data());
    double lse = kern::logsumexp(zt.values.data(), n);
    Var v = make(Op::kCrossEntropy, {logits.id},
                 Tensor::scalar(lse - zt.values[target]));
    nodes_[v.id].aux = target;
    nodes_[v.id].aux_data = std::move(probs);
    return v;
  }

  /// Mean binary cross-entropy of logits against 0/1 targets.
  Var bce_with_logits(Var logits, const std::vector<double>& targets) {
    const Tensor& zt = value(logits);
    const int n = static_cast<int>(zt.numel());
    if (static_cast<int>(targets.size()) != n)
      fail("bce_with_logits", logits, "target size mismatch");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double z = zt.values[i], t = targets[i];
      loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
    }
    Var v = make(Op::kBceLogits, {logits.id}, Tensor::scalar(loss / n));
    nodes_[v.id].aux_data = targets;
    return v;
  }

  /// Fused LSTM update (gates in input/forget/output/candidate row order).
  /// Returns the concatenated (h, cell) pair as one [2H] node.
  Var lstm(Var wx, Var wh, Var bias, Var x, Var h_prev, Var c_prev) {
    const Tensor& wxt = value(wx);
    const Tensor& wht = value(wh);
    const Tensor& bt = value(bias);
    const Tensor& xt = value(x);
    const Tensor& ht = value(h_prev);
    const Tensor& ct = value(c_prev);
    if (wxt.rank() != 2 || wxt.cols() != xt.numel())
      fail("lstm", wx, wxt.shape_str() + " incompatible with input " + xt.shape_str());
    const int hw = wxt.rows() / 4;
    if (wxt.rows() != 4 * hw || wht.rank() != 2 || wht.rows() != 4 * hw ||
        wht.cols() != hw)
      fail("lstm", wh, "recurrent projection " + wht.shape_str() +
                           " inconsistent with hidden width " + std::to_string(hw));
    if (ht.numel() != hw)
      fail("lstm", wh, "h_prev " + ht.shape_str() + " does not match hidden width " +
                           std::to_string(hw));
    if (ct.numel() != hw)
      fail("lstm", wh, "cell_prev " + ct.shape_str() +
                           " does not match hidden width " + std::to_string(hw));
    if (bt.numel() != 4 * hw)
      fail("lstm", bias, "bias " + bt.shape_str() + " must have 4x hidden width");

    std::vector<double> z(4 * hw);
    kern::matvec(wxt, xt.values.data(), z.data());
    kern::matvec_add_acc(wht, ht.values.data(), bt.values.data(), z.data());
    Tensor out = Tensor::zeros({2 * hw});
    std::vector<double> cache(5 * hw);
    for (int j = 0; j < hw; ++j) {
      double gi = kern::sigmoid(z[j]);
      double gf = kern::sigmoid(z[hw + j]);
      double go = kern::sigmoid(z[2 * hw + j]);
      double gg = std::tanh(z[3 * hw + j]);
      double cell = gf * ct.values[j] + gi * gg;
      double tc = std::tanh(cell);
      cache[j] = gi;
      cache[hw + j] = gf;
      cache[2 * hw + j] = go;
      cache[3 * hw + j] = gg;
      cache[4 * hw + j] = tc;
      out.values[j] = go * tc;
      out.values[hw + j] = cell;
    }
    Var v = make(Op::kLstm,
                 {wx.id, wh.id, bias.id, x.id, h_prev.id, c_prev.id},
                 std::move(out));
    nodes_[v.id].aux = hw;
    nodes_[v.id].aux_data = std::move(cache);
    return v;
  }

  /// sum_i alpha[i] * h_i  (attention mixing).
  Var weighted_sum(Var alpha, const std::vector<Var>& hs) {
    const Tensor& at = value(alpha);
    if (static_cast<std::size_t>(at.numel()) != hs.size())
      fail("weighted_sum", alpha, "weights " + at.shape_str() + " vs " +
                                      std::to_string(hs.size()) + " states");
    const Tensor& h0 = value(hs[0]);
    Tensor out = Tensor::zeros(h0.shape);
    std::vector<std::int32_t> in{alpha.id};
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const Tensor& h = value(hs[i]);
      if (!h.same_shape(out))
        fail("weighted_sum", hs[i], h.shape_str() + " vs " + out.shape_str());
      const double a = at.values[i];
      for (std::size_t d = 0; d < out.values.size(); ++d)
        out.values[d] += a * h.values[d];
      in.push_back(hs[i].id);
    }
    return make(Op::kWeightedSum, std::move(in), std::move(out));
  }

  /// Reverse pass from a scalar loss. Parameter gradients are accumulated
  /// into their bound ParamTensor::grad buffers.
  void backward(Var loss) {
    if (value(loss).numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got " +
                                  value(loss).shape_str());
    if (ran_backward_)
      throw std::logic_error("backward: tape already consumed");
    ran_backward_ = true;

    grad_buf(loss.id).values[0] = 1.0;
    for (std::int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.op == Op::kInput || n.op == Op::kParam) continue;
      if (n.grad.numel() == 0) continue;  // not on any path to the loss
      dispatch_backward(n);
    }
  }

 private:
  Var make(Op op, std::vector<std::int32_t> in, Tensor val) {
    Node n;
    n.op = op;
    n.in = std::move(in);
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  [[noreturn]] void fail(const char* op, Var operand, const std::string& msg) const {
    std::string who = operand.id >= 0 && !nodes_[operand.id].name.empty()
                          ? " (operand '" + nodes_[operand.id].name + "')"
                          : "";
    throw std::invalid_argument(std::string(op) + ": " + msg + who);
  }

  Tensor& grad_buf(std::int32_t id) {
    Node& n = nodes_[id];
    if (n.bound_grad) return *n.bound_grad;
    if (n.grad.numel() == 0) n.grad = Tensor::zeros(value(Var{id}).shape);
    return n.grad;
  }

  void dispatch_backward(Node& n) {
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kMatVec: {
        const Tensor& w = value(Var{n.in[0]});
        const Tensor& x = value(Var{n.in[1]});
        Tensor& dw = grad_buf(n.in[0]);
        Tensor& dx = grad_buf(n.in[1]);
        kern::outer_acc(g.values.data(), w.rows(), x.values.data(), w.cols(),
                        dw.values.data());
        kern::matvec_t_acc(w, g.values.data(), dx.values.data());
        break;
      }
      case Op::kRow: {
        Tensor& dm = grad_buf(n.in[0]);
        double* dst = dm.values.data() +
                      static_cast<std::size_t>(n.aux) * dm.cols();
        for (std::size_t i = 0; i < g.values.size(); ++i) dst[i] += g.values[i];
        break;
      }
      case Op::kAdd:
        acc(n.in[0], g);
        acc(n.in[1], g);
        break;
      case Op::kAddN:
        for (std::int32_t in_id : n.in) acc(in_id, g);
        break;
      case Op::kMul: {
        const Tensor& a = value(Var{n.in[0]});
        const Tensor& b = value(Var{n.in[1]});
        Tensor& da = grad_buf(n.in[0]);
        Tensor& db = grad_buf(n.in[1]);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
          da.values[i] += g.values[i] * b.values[i];
          db.values[i] += g.values[i] * a.values[i];
        }
        break;
      }
      case Op::kSigmoid: {
        Tensor& dx = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
          double y = n.val.values[i];
          dx.values[i] += g.values[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kTanh: {
        Tensor& dx = grad_buf(n.in[0]);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
          double y = n.val.values[i];
          dx.values[i] += g.values[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::kConcat: {
        Tensor& da = grad_buf(n.in[0]);
        Tensor& db = grad_buf(n.in[1]);
        const int na = n.aux;
        for (int i = 0; i < na; ++i) da.values[i] += g.values[i];
        for (std::size_t i = na; i < g.values.size(); ++i)
          db.values[i - na] += g.values[i];
        break;
      }
      case Op::kSlice: {
        Tensor& da = grad_buf(n.in[0]);
        for (int i = 0; i < n.aux2; ++i) da.values[n.aux + i] += g.values[i];
        break;
      }
      case Op::kSoftmax: {
        Tensor& dx = grad_buf(n.in[0]);
        double gy = 0.0;
        for (std::size_t i = 0; i < g.values.size(); ++i)
          gy += g.values[i] * n.val.values[i];
        for (std::size_t i = 0; i < g.values.size(); ++i)
          dx.values[i] += n.val.values[i] * (g.values[i] - gy);
        break;
      }
      case Op::kPick:
        grad_buf(n.in[0]).values[n.aux] += g.values[0];
        break;
      case Op::kStack:
        for (std::size_t i = 0; i < n.in.size(); ++i)
          grad_buf(n.in[i]).values[0] += g.values[i];
        break;
      case Op::kScale: {
        Tensor& dx = grad_buf(n.in[0]);
        const double c = n.aux_data[0];
        for (std::size_t i = 0; i < g.values.size(); ++i)
          dx.values[i] += c * g.values[i];
        break;
      }
      case Op::kSum: {
        Tensor& dx = grad_buf(n.in[0]);
        for (double& v : dx.values) v += g.values[0];
        break;
      }
      case Op::kDot: {
        const Tensor& a = value(Var{n.in[0]});
        const Tensor& b = value(Var{n.in[1]});
        Tensor& da = grad_buf(n.in[0]);
        Tensor& db = grad_buf(n.in[1]);
        const double gs = g.values[0];
        for (std::size_t i = 0; i < a.values.size(); ++i) {
          da.values[i] += gs * b.values[i];
          db.values[i] += gs * a.values[i];
        }
        break;
      }
      case Op::kCrossEntropy: {
        Tensor& dz = grad_buf(n.in[0]);
        const double gs = g.values[0];
        for (std::size_t i = 0; i < n.aux_data.size(); ++i)
          dz.values[i] += gs * (n.aux_data[i] -
                                (static_cast<int>(i) == n.aux ? 1.0 : 0.0));
        break;
      }
      case Op::kBceLogits: {
        Tensor& dz = grad_buf(n.in[0]);
        const Tensor& z = value(Var{n.in[0]});
        const double gs = g.values[0] / static_cast<double>(n.aux_data.size());
        for (std::size_t i = 0; i < n.aux_data.size(); ++i)
          dz.values[i] += gs * (kern::sigmoid(z.values[i]) - n.aux_data[i]);
        break;
      }
      case Op::kLstm: {
        const int hw = n.aux;
        const Tensor& wxt = value(Var{n.in[0]});
        const Tensor& wht = value(Var{n.in[1]});
        const Tensor& xt = value(Var{n.in[3]});
        const Tensor& ht = value(Var{n.in[4]});
        const Tensor& ct = value(Var{n.in[5]});
        const double* cache = n.aux_data.data();
        std::vector<double> dz(4 * hw);
        Tensor& dc_prev = grad_buf(n.in[5]);
        for (int j = 0; j < hw; ++j) {
          double gi = cache[j], gf = cache[hw + j], go = cache[2 * hw + j],
                 gg = cache[3 * hw + j], tc = cache[4 * hw + j];
          double dh = g.values[j];
          double dc = g.values[hw + j] + dh * go * (1.0 - tc * tc);
          dz[2 * hw + j] = dh * tc * go * (1.0 - go);
          dz[hw + j] = dc * ct.values[j] * gf * (1.0 - gf);
          dz[j] = dc * gg * gi * (1.0 - gi);
          dz[3 * hw + j] = dc * gi * (1.0 - gg * gg);
          dc_prev.values[j] += dc * gf;
        }
        kern::outer_acc(dz.data(), 4 * hw, xt.values.data(), wxt.cols(),
                        grad_buf(n.in[0]).values.data());
        kern::matvec_t_acc(wxt, dz.data(), grad_buf(n.in[3]).values.data());
        kern::outer_acc(dz.data(), 4 * hw, ht.values.data(), hw,
                        grad_buf(n.in[1]).values.data());
        kern::matvec_t_acc(wht, dz.data(), grad_buf(n.in[4]).values.data());
        Tensor& db = grad_buf(n.in[2]);
        for (int i = 0; i < 4 * hw; ++i) db.values[i] += dz[i];
        break;
      }
      case Op::kWeightedSum: {
        const Tensor& alpha = value(Var{n.in[0]});
        Tensor& dalpha = grad_buf(n.in[0]);
        for (std::size_t i = 1; i < n.in.size(); ++i) {
          const Tensor& h = value(Var{n.in[i]});
          Tensor& dh = grad_buf(n.in[i]);
          const double a = alpha.values[i - 1];
          double gh = 0.0;
          for (std::size_t d = 0; d < g.values.size(); ++d) {
            gh += g.values[d] * h.values[d];
            dh.values[d] += a * g.values[d];
          }
          dalpha.values[i - 1] += gh;
        }
        break;
      }
      case Op::kInput:
      case Op::kParam:
        break;
    }
  }

  void acc(std::int32_t id, const Tensor& g) {
    Tensor& d = grad_buf(id);
    for (std::size_t i = 0; i < g.values.size(); ++i) d.values[i] += g.values[i];
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace ctxnlg
