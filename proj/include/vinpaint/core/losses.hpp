#pragma once

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// Mean absolute difference over all elements.
inline Tensor l1_loss(const Tensor& a, const Tensor& b) {
  return mean_all(abs_op(sub(a, b)));
}

// Sum of |pred - target| weighted by a [N,1,H,W] mask broadcast over the
// channel axis, normalized by the mask mass: sum(M .* |P - T|) / sum(M).
// The mask is treated as a constant.
inline Tensor masked_l1(const Tensor& pred, const Tensor& target,
                        const Tensor& mask, real denom_floor = 1e-8) {
  detail::check_same_shape("masked_l1", pred, target);
  if (pred.ndim() != 4 || mask.ndim() != 4 || mask.dim(1) != 1 ||
      mask.dim(0) != pred.dim(0) || mask.dim(2) != pred.dim(2) ||
      mask.dim(3) != pred.dim(3))
    tensor_fail("masked_l1: mask must be [N,1,H,W] matching " +
                shape_str(pred.shape()));
  if (mask.tracked()) tensor_fail("masked_l1: mask must be untracked");
  int N = pred.dim(0), C = pred.dim(1), H = pred.dim(2), W = pred.dim(3);
  int64_t plane = (int64_t)H * W;
  real msum = 0;
  for (real v : mask.values()) msum += v;
  real denom = std::max(msum, denom_floor);
  real acc = 0;
  for (int n = 0; n < N; ++n) {
    const real* m = mask.values().data() + n * plane;
    for (int c = 0; c < C; ++c) {
      const real* p = pred.values().data() + ((int64_t)n * C + c) * plane;
      const real* t = target.values().data() + ((int64_t)n * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += m[i] * std::abs(p[i] - t[i]);
    }
  }
  return Tensor::make_op(
      "masked_l1", {1}, {acc / denom}, {pred, target, mask},
      [N, C, plane, denom](Node& nd) {
        const auto& p = pval(nd, 0);
        const auto& t = pval(nd, 1);
        const auto& m = pval(nd, 2);
        real g = nd.grad[0] / denom;
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            int64_t off = ((int64_t)n * C + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
              real d = p[off + i] - t[off + i];
              real s = g * m[n * plane + i] *
                       (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
              if (wants(nd, 0)) pgrad(nd, 0)[off + i] += s;
              if (wants(nd, 1)) pgrad(nd, 1)[off + i] -= s;
            }
          }
      });
}

// Mean binary cross entropy with probabilities clamped away from 0 and 1.
inline Tensor bce_loss(const Tensor& prob, const Tensor& target,
                       real eps = 1e-6) {
  detail::check_same_shape("bce_loss", prob, target);
  int64_t count = prob.numel();
  real acc = 0;
  for (int64_t i = 0; i < count; ++i) {
    real p = std::clamp(prob.values()[i], eps, 1.0 - eps);
    real t = target.values()[i];
    acc += -t * std::log(p) - (1.0 - t) * std::log(1.0 - p);
  }
  return Tensor::make_op(
      "bce_loss", {1}, {acc / (real)count}, {prob, target},
      [count, eps](Node& nd) {
        const auto& pv = pval(nd, 0);
        const auto& tv = pval(nd, 1);
        real g = nd.grad[0] / (real)count;
        for (int64_t i = 0; i < count; ++i) {
          real p = std::clamp(pv[i], eps, 1.0 - eps);
          if (wants(nd, 0) && pv[i] > eps && pv[i] < 1.0 - eps)
            pgrad(nd, 0)[i] += g * (p - tv[i]) / (p * (1.0 - p));
          if (wants(nd, 1))
            pgrad(nd, 1)[i] += g * (std::log(1.0 - p) - std::log(p));
        }
      });
}

}  // namespace vinpaint
