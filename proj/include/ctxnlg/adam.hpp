#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxnlg/autodiff.hpp"

namespace ctxnlg {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // 0 disables clipping
};

/// Named view over a set of trainable arrays; the canonical iteration order
/// is the registration order (serialization, optimizer and gradient checks
/// all walk it the same way).
using ParamRefs = std::vector<std::pair<std::string, ParamTensor*>>;

/// Adam with bias correction. Keeps first/second moment state per parameter
/// name; one step() per batch after gradients were accumulated.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const ParamRefs& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    double scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& [name, p] : params)
        for (double g : p->grad.values) sq += g * g;
      double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    }

    for (const auto& [name, p] : params) {
      auto& st = state_[name];
      if (st.m.shape != p->value.shape) {
        st.m = Tensor::zeros(p->value.shape);
        st.v = Tensor::zeros(p->value.shape);
      }
      for (std::size_t i = 0; i < p->value.values.size(); ++i) {
        double g = p->grad.values[i] * scale;
        if (!std::isfinite(g))
          throw std::runtime_error("adam: non-finite gradient in parameter '" +
                                   name + "'");
        st.m.values[i] = cfg_.beta1 * st.m.values[i] + (1.0 - cfg_.beta1) * g;
        st.v.values[i] = cfg_.beta2 * st.v.values[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = st.m.values[i] / bc1;
        double vhat = st.v.values[i] / bc2;
        p->value.values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

inline void zero_grads(const ParamRefs& params) {
  for (const auto& [name, p] : params) {
    p->ensure_grad();
    p->zero_grad();
  }
}

inline void scale_grads(const ParamRefs& params, double s) {
  for (const auto& [name, p] : params)
    for (double& g : p->grad.values) g *= s;
}

}  // namespace ctxnlg
