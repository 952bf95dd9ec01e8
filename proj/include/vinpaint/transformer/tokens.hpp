#pragma once

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// Geometry of a token<->feature transition. Both directions need the same
// record so a token map always knows how to return to feature space.
struct TokenGeometry {
  int kernel = 7;
  int stride = 3;
  int pad = 3;
  int feat_h = 0;
  int feat_w = 0;
  int grid_h = 0;
  int grid_w = 0;

  static TokenGeometry make(int feat_h, int feat_w, int kernel, int stride,
                            int pad) {
    if (kernel < 1 || stride < 1 || pad < 0)
      tensor_fail("TokenGeometry: bad kernel/stride/pad");
    if (feat_h + 2 * pad < kernel || feat_w + 2 * pad < kernel)
      tensor_fail("TokenGeometry: extent " + std::to_string(feat_h) + "x" +
                  std::to_string(feat_w) + " smaller than kernel " +
                  std::to_string(kernel));
    TokenGeometry g;
    g.kernel = kernel;
    g.stride = stride;
    g.pad = pad;
    g.feat_h = feat_h;
    g.feat_w = feat_w;
    g.grid_h = (feat_h + 2 * pad - kernel) / stride + 1;
    g.grid_w = (feat_w + 2 * pad - kernel) / stride + 1;
    return g;
  }
};

// Tokens laid out [frames, grid_h, grid_w, channels] plus the geometry that
// produced them.
struct TokenMap {
  Tensor tokens;
  TokenGeometry geom;

  int frames() const { return tokens.dim(0); }
  int channels() const { return tokens.dim(3); }
};

namespace detail {

// Per-pixel count of patches covering it; the overlap normalizer.
inline std::vector<real> overlap_counts(const TokenGeometry& g) {
  std::vector<real> cnt((size_t)g.feat_h * g.feat_w, 0.0);
  for (int gy = 0; gy < g.grid_h; ++gy)
    for (int gx = 0; gx < g.grid_w; ++gx)
      for (int ky = 0; ky < g.kernel; ++ky) {
        int y = gy * g.stride - g.pad + ky;
        if (y < 0 || y >= g.feat_h) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          int x = gx * g.stride - g.pad + kx;
          if (x >= 0 && x < g.feat_w) cnt[(size_t)y * g.feat_w + x] += 1.0;
        }
      }
  return cnt;
}

}  // namespace detail

// Extract overlapping kernel x kernel patches from [N,C,H,W] features into a
// token map [N, grid_h, grid_w, C*kernel*kernel]. Out-of-image taps read 0.
inline TokenMap soft_split(const Tensor& feats, int kernel, int stride,
                           int pad) {
  if (feats.ndim() != 4) tensor_fail("soft_split: expects [N,C,H,W]");
  int N = feats.dim(0), C = feats.dim(1), H = feats.dim(2), W = feats.dim(3);
  TokenGeometry g = TokenGeometry::make(H, W, kernel, stride, pad);
  int K = kernel, D = C * K * K;
  std::vector<real> out((size_t)N * g.grid_h * g.grid_w * D);
  const auto& src = feats.values();
  for (int n = 0; n < N; ++n)
    for (int gy = 0; gy < g.grid_h; ++gy)
      for (int gx = 0; gx < g.grid_w; ++gx) {
        real* tok = out.data() +
                    (((int64_t)n * g.grid_h + gy) * g.grid_w + gx) * D;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < K; ++ky) {
            int y = gy * stride - pad + ky;
            for (int kx = 0; kx < K; ++kx) {
              int x = gx * stride - pad + kx;
              real v = 0.0;
              if (y >= 0 && y < H && x >= 0 && x < W)
                v = src[(((int64_t)n * C + c) * H + y) * W + x];
              tok[(c * K + ky) * K + kx] = v;
            }
          }
      }
  TokenMap tm;
  tm.geom = g;
  tm.tokens = Tensor::make_op(
      "soft_split", {N, g.grid_h, g.grid_w, D}, std::move(out), {feats},
      [N, C, H, W, g, K, D](Node& nd) {
        if (!wants(nd, 0)) return;
        auto& gx_ = pgrad(nd, 0);
        for (int n = 0; n < N; ++n)
          for (int gy = 0; gy < g.grid_h; ++gy)
            for (int gxc = 0; gxc < g.grid_w; ++gxc) {
              const real* tok =
                  nd.grad.data() +
                  (((int64_t)n * g.grid_h + gy) * g.grid_w + gxc) * D;
              for (int c = 0; c < C; ++c)
                for (int ky = 0; ky < K; ++ky) {
                  int y = gy * g.stride - g.pad + ky;
                  if (y < 0 || y >= H) continue;
                  for (int kx = 0; kx < K; ++kx) {
                    int x = gxc * g.stride - g.pad + kx;
                    if (x < 0 || x >= W) continue;
                    gx_[(((int64_t)n * C + c) * H + y) * W + x] +=
                        tok[(c * K + ky) * K + kx];
                  }
                }
            }
      });
  return tm;
}

// Inverse of soft_split: scatter every token's patch back to feature space
// and divide each pixel by the number of patches covering it, so a split
// followed by a composition is the identity.
inline Tensor soft_composition(const TokenMap& tm) {
  const TokenGeometry& g = tm.geom;
  if (tm.tokens.ndim() != 4 || tm.tokens.dim(1) != g.grid_h ||
      tm.tokens.dim(2) != g.grid_w)
    tensor_fail("soft_composition: token map does not match its geometry");
  int K = g.kernel, D = tm.tokens.dim(3);
  if (D % (K * K) != 0)
    tensor_fail("soft_composition: channel count " + std::to_string(D) +
                " is not a multiple of kernel^2");
  int C = D / (K * K);
  int N = tm.tokens.dim(0), H = g.feat_h, W = g.feat_w;
  std::vector<real> cnt = detail::overlap_counts(g);
  for (real& v : cnt)
    if (v == 0.0)
      tensor_fail("soft_composition: a pixel is covered by no patch");
  std::vector<real> out((size_t)N * C * H * W, 0.0);
  const auto& src = tm.tokens.values();
  for (int n = 0; n < N; ++n) {
    for (int gy = 0; gy < g.grid_h; ++gy)
      for (int gx = 0; gx < g.grid_w; ++gx) {
        const real* tok =
            src.data() + (((int64_t)n * g.grid_h + gy) * g.grid_w + gx) * D;
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < K; ++ky) {
            int y = gy * g.stride - g.pad + ky;
            if (y < 0 || y >= H) continue;
            for (int kx = 0; kx < K; ++kx) {
              int x = gx * g.stride - g.pad + kx;
              if (x < 0 || x >= W) continue;
              out[(((int64_t)n * C + c) * H + y) * W + x] +=
                  tok[(c * K + ky) * K + kx];
            }
          }
      }
    for (int c = 0; c < C; ++c) {
      real* p = out.data() + ((int64_t)n * C + c) * H * W;
      for (int64_t i = 0; i < (int64_t)H * W; ++i) p[i] /= cnt[i];
    }
  }
  return Tensor::make_op(
      "soft_composition", {N, C, H, W}, std::move(out), {tm.tokens},
      [N, C, H, W, g, K, D, cnt = std::move(cnt)](Node& nd) {
        if (!wants(nd, 0)) return;
        auto& gt = pgrad(nd, 0);
        for (int n = 0; n < N; ++n)
          for (int gy = 0; gy < g.grid_h; ++gy)
            for (int gx = 0; gx < g.grid_w; ++gx) {
              real* tok = gt.data() +
                          (((int64_t)n * g.grid_h + gy) * g.grid_w + gx) * D;
              for (int c = 0; c < C; ++c)
                for (int ky = 0; ky < K; ++ky) {
                  int y = gy * g.stride - g.pad + ky;
                  if (y < 0 || y >= H) continue;
                  for (int kx = 0; kx < K; ++kx) {
                    int x = gx * g.stride - g.pad + kx;
                    if (x < 0 || x >= W) continue;
                    tok[(c * K + ky) * K + kx] +=
                        nd.grad[(((int64_t)n * C + c) * H + y) * W + x] /
                        cnt[(size_t)y * W + x];
                  }
                }
            }
      });
}

// Convenience: replace the tensor of a token map, keeping its geometry.
inline TokenMap with_tokens(const TokenMap& tm, Tensor t) {
  if (t.ndim() != 4 || t.dim(0) != tm.tokens.dim(0) ||
      t.dim(1) != tm.geom.grid_h || t.dim(2) != tm.geom.grid_w)
    tensor_fail("with_tokens: grid mismatch");
  TokenMap out;
  out.geom = tm.geom;
  out.tokens = std::move(t);
  return out;
}

}  // namespace vinpaint
