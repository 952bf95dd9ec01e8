#pragma once

#include "vinpaint/core/rng.hpp"
#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

inline std::vector<real> randn_vec(int64_t n, Rng& rng, real stddev) {
  std::vector<real> v(n);
  for (int64_t i = 0; i < n; ++i) v[i] = rng.normal() * stddev;
  return v;
}

// Owns the named trainable tensors of a model. Modules register their
// weights here so optimizers and checkpoints see one flat list.
class ParamBank {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<real> data) {
    for (const Parameter& p : params_)
      if (p.name == name) tensor_fail("duplicate parameter '" + name + "'");
    Tensor t = Tensor::from_data(std::move(shape), std::move(data));
    t.set_tracked(true);
    params_.push_back({name, t});
    return t;
  }

  Tensor add_zeros(const std::string& name, Shape shape) {
    int64_t n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<real>(n, 0.0));
  }

  Tensor add_full(const std::string& name, Shape shape, real v) {
    int64_t n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<real>(n, v));
  }

  // Fan-in scaled normal init; fan_in = elements per output unit.
  Tensor add_fanin(const std::string& name, Shape shape, int64_t fan_in,
                   Rng& rng) {
    real stddev = std::sqrt(2.0 / (real)fan_in);
    return add(name, shape, randn_vec(shape_numel(shape), rng, stddev));
  }

  // Convolution weight [OC, Cg, ...spatial...]; fan_in from trailing dims.
  Tensor add_conv(const std::string& name, Shape shape, Rng& rng) {
    int64_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    return add_fanin(name, shape, fan_in, rng);
  }

  // Linear weight [in, out].
  Tensor add_linear(const std::string& name, int in, int out, Rng& rng) {
    return add_fanin(name, {in, out}, in, rng);
  }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  Tensor find(const std::string& name) const {
    for (const Parameter& p : params_)
      if (p.name == name) return p.tensor;
    tensor_fail("no parameter '" + name + "'");
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const Parameter& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (Parameter& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Parameter> params_;
};

// Scoped no-grad guard: untracks every parameter so forwards inside the
// scope build no tape, then restores tracking on exit.
class ParamFreeze {
 public:
  explicit ParamFreeze(ParamBank& bank) : bank_(bank) {
    for (Parameter& p : bank_.params()) p.tensor.set_tracked(false);
  }
  ~ParamFreeze() {
    for (Parameter& p : bank_.params()) p.tensor.set_tracked(true);
  }
  ParamFreeze(const ParamFreeze&) = delete;
  ParamFreeze& operator=(const ParamFreeze&) = delete;

 private:
  ParamBank& bank_;
};

}  // namespace vinpaint
