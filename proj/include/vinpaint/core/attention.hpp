#pragma once

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// Optional capture of attention internals for inspection in tests.
struct AttentionProbe {
  Shape shape;             // [B, Lq, Lk]
  std::vector<real> probs; // post-softmax weights
};

// Batched scaled dot-product attention.
//   q [B,Lq,D], k [B,Lk,D], v [B,Lk,D] -> [B,Lq,D]
//   out_b = softmax(q_b k_b^T / sqrt(D) + bias_b) v_b
// bias, if defined, is an untracked additive [B,Lq,Lk] term (used to switch
// off invalid keys with large negative values).
inline Tensor softmax_attention(const Tensor& q, const Tensor& k,
                                const Tensor& v, const Tensor& bias = Tensor(),
                                AttentionProbe* probe = nullptr) {
  if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3)
    tensor_fail("softmax_attention: expects rank-3 q, k, v");
  int B = q.dim(0), Lq = q.dim(1), D = q.dim(2);
  int Lk = k.dim(1);
  if (k.dim(0) != B || v.dim(0) != B || k.dim(2) != D || v.dim(1) != Lk ||
      v.dim(2) != D)
    tensor_fail("softmax_attention: shape mismatch q " + shape_str(q.shape()) +
                " k " + shape_str(k.shape()) + " v " + shape_str(v.shape()));
  bool has_bias = bias.defined();
  if (has_bias) {
    if (bias.ndim() != 3 || bias.dim(0) != B || bias.dim(1) != Lq ||
        bias.dim(2) != Lk)
      tensor_fail("softmax_attention: bias must be [B,Lq,Lk]");
    if (bias.tracked())
      tensor_fail("softmax_attention: bias must be untracked");
  }
  real scale = 1.0 / std::sqrt((real)D);

  std::vector<real> probs((size_t)B * Lq * Lk);
  std::vector<real> out((size_t)B * Lq * D);
  for (int b = 0; b < B; ++b) {
    real* s = probs.data() + (int64_t)b * Lq * Lk;
    gemm(false, true, Lq, Lk, D, scale, q.values().data() + (int64_t)b * Lq * D,
         D, k.values().data() + (int64_t)b * Lk * D, D, 0.0, s, Lk);
    if (has_bias) {
      const real* bb = bias.values().data() + (int64_t)b * Lq * Lk;
      for (int64_t i = 0; i < (int64_t)Lq * Lk; ++i) s[i] += bb[i];
    }
    for (int r = 0; r < Lq; ++r) {
      real* row = s + (int64_t)r * Lk;
      real mx = row[0];
      for (int c = 1; c < Lk; ++c) mx = std::max(mx, row[c]);
      real sum = 0;
      for (int c = 0; c < Lk; ++c) {
        row[c] = std::exp(row[c] - mx);
        sum += row[c];
      }
      for (int c = 0; c < Lk; ++c) row[c] /= sum;
    }
    gemm(false, false, Lq, D, Lk, 1.0, s, Lk,
         v.values().data() + (int64_t)b * Lk * D, D, 0.0,
         out.data() + (int64_t)b * Lq * D, D);
  }
  if (probe) {
    probe->shape = {B, Lq, Lk};
    probe->probs = probs;
  }

  std::vector<Tensor> parents = {q, k, v};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_op(
      "softmax_attention", {B, Lq, D}, std::move(out), std::move(parents),
      [B, Lq, Lk, D, scale, probs = std::move(probs)](Node& nd) {
        std::vector<real> dp((size_t)Lq * Lk), ds((size_t)Lq * Lk);
        for (int b = 0; b < B; ++b) {
          const real* p = probs.data() + (int64_t)b * Lq * Lk;
          const real* go = nd.grad.data() + (int64_t)b * Lq * D;
          if (wants(nd, 2))
            gemm(true, false, Lk, D, Lq, 1.0, p, Lk, go, D, 1.0,
                 pgrad(nd, 2).data() + (int64_t)b * Lk * D, D);
          if (!wants(nd, 0) && !wants(nd, 1)) continue;
          gemm(false, true, Lq, Lk, D, 1.0, go, D,
               pval(nd, 2).data() + (int64_t)b * Lk * D, D, 0.0, dp.data(),
               Lk);
          for (int r = 0; r < Lq; ++r) {
            const real* pr = p + (int64_t)r * Lk;
            const real* dpr = dp.data() + (int64_t)r * Lk;
            real dot = 0;
            for (int c = 0; c < Lk; ++c) dot += dpr[c] * pr[c];
            real* dsr = ds.data() + (int64_t)r * Lk;
            for (int c = 0; c < Lk; ++c) dsr[c] = pr[c] * (dpr[c] - dot);
          }
          if (wants(nd, 0))
            gemm(false, false, Lq, D, Lk, scale, ds.data(), Lk,
                 pval(nd, 1).data() + (int64_t)b * Lk * D, D, 1.0,
                 pgrad(nd, 0).data() + (int64_t)b * Lq * D, D);
          if (wants(nd, 1))
            gemm(true, false, Lk, D, Lq, scale, ds.data(), Lk,
                 pval(nd, 0).data() + (int64_t)b * Lq * D, D, 1.0,
                 pgrad(nd, 1).data() + (int64_t)b * Lk * D, D);
        }
      });
}

}  // namespace vinpaint
