#pragma once

#include <functional>

#include "vinpaint/core/rng.hpp"
#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

struct GradCheckResult {
  real max_rel_err = 0.0;
  std::string worst;  // "param[idx]" of the largest mismatch
  int64_t checked = 0;
  bool ok(real tol) const { return checked > 0 && max_rel_err < tol; }
};

// Central-difference verification of reverse-mode gradients. `fn` must
// rebuild the scalar loss from the current parameter values on every call.
// When max_coords is positive, at most that many coordinates per parameter
// are probed (chosen with a seeded generator); otherwise every coordinate is
// checked. Per-coordinate error: |a - n| / max(1, |a|, |n|).
inline GradCheckResult gradcheck(const std::function<Tensor()>& fn,
                                 std::vector<Parameter>& params,
                                 real h = 1e-4, int max_coords = -1,
                                 uint64_t seed = 7) {
  for (Parameter& p : params) p.tensor.zero_grad();
  Tensor loss = fn();
  loss.backward();
  std::vector<std::vector<real>> analytic(params.size());
  for (size_t pi = 0; pi < params.size(); ++pi)
    analytic[pi] = params[pi].tensor.has_grad()
                       ? params[pi].tensor.grad()
                       : std::vector<real>(params[pi].tensor.numel(), 0.0);

  GradCheckResult res;
  Rng rng(seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = params[pi].tensor;
    int64_t n = t.numel();
    std::vector<int64_t> coords;
    if (max_coords > 0 && n > max_coords) {
      for (int i = 0; i < max_coords; ++i)
        coords.push_back(rng.uniform_int(0, (int)n - 1));
    } else {
      coords.resize(n);
      for (int64_t i = 0; i < n; ++i) coords[i] = i;
    }
    for (int64_t ci : coords) {
      real saved = t.values()[ci];
      t.values_mut()[ci] = saved + h;
      real fp = fn().item();
      t.values_mut()[ci] = saved - h;
      real fm = fn().item();
      t.values_mut()[ci] = saved;
      real numeric = (fp - fm) / (2 * h);
      real a = analytic[pi][ci];
      real err = std::abs(a - numeric) /
                 std::max({(real)1.0, std::abs(a), std::abs(numeric)});
      ++res.checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = params[pi].name + "[" + std::to_string(ci) + "]";
      }
    }
  }
  return res;
}

}  // namespace vinpaint
