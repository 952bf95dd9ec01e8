#pragma once

#include <map>
#include <stdexcept>

#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

struct AdamConfig {
  real lr = 1e-4;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

// First/second moment buffers keyed by parameter name, plus the shared step
// counter. Stored in checkpoints so training resumes exactly.
struct AdamState {
  int64_t step = 0;
  std::map<std::string, std::vector<real>> m, v;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  AdamConfig& config() { return cfg_; }
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

  // One update over all parameters. lr_scale implements schedules (e.g. a
  // tenfold drop after a milestone) without touching the stored base rate.
  // Aborts with the parameter name if a gradient or updated value is not
  // finite, so a diverging run fails loudly instead of training on garbage.
  void step(std::vector<Parameter>& params, real lr_scale = 1.0) {
    ++state_.step;
    real b1t = 1.0 - std::pow(cfg_.beta1, (real)state_.step);
    real b2t = 1.0 - std::pow(cfg_.beta2, (real)state_.step);
    real lr = cfg_.lr * lr_scale;
    for (Parameter& p : params) {
      Tensor& t = p.tensor;
      if (!t.tracked())
        throw std::runtime_error("adam: parameter '" + p.name +
                                 "' is not tracked");
      auto& m = state_.m[p.name];
      auto& v = state_.v[p.name];
      if (m.empty()) m.assign(t.numel(), 0.0);
      if (v.empty()) v.assign(t.numel(), 0.0);
      if ((int64_t)m.size() != t.numel())
        throw std::runtime_error("adam: state size mismatch for '" + p.name +
                                 "'");
      const bool has_grad = t.has_grad();
      auto& val = t.values_mut();
      for (int64_t i = 0; i < t.numel(); ++i) {
        real g = has_grad ? t.grad()[i] : 0.0;
        if (!std::isfinite(g))
          throw std::runtime_error("adam: non-finite gradient in '" + p.name +
                                   "' at step " +
                                   std::to_string(state_.step));
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        real mhat = m[i] / b1t;
        real vhat = v[i] / b2t;
        val[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (!std::isfinite(val[i]))
          throw std::runtime_error("adam: non-finite value in '" + p.name +
                                   "' at step " +
                                   std::to_string(state_.step));
      }
    }
  }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace vinpaint
