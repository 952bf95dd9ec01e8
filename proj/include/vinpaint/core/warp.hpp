#pragma once

#include <limits>

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// Backward warping: out[n,c,y,x] = src[n,c] sampled at (x + u, y + v) with
// bilinear interpolation, where flow holds (u, v) as channels 0 and 1.
// Sample coordinates are clamped to the image rectangle. A zero displacement
// field reproduces the input bit for bit (the sample lands on the pixel
// centre, so the interpolation weights collapse to 1 and 0).
// Differentiable with respect to both src and flow.
inline Tensor warp(const Tensor& src, const Tensor& flow) {
  if (src.ndim() != 4 || flow.ndim() != 4 || flow.dim(1) != 2 ||
      src.dim(0) != flow.dim(0) || src.dim(2) != flow.dim(2) ||
      src.dim(3) != flow.dim(3))
    tensor_fail("warp: expects src [N,C,H,W] and flow [N,2,H,W], got " +
                shape_str(src.shape()) + " / " + shape_str(flow.shape()));
  int N = src.dim(0), C = src.dim(1), H = src.dim(2), W = src.dim(3);
  int64_t plane = (int64_t)H * W;

  std::vector<real> out((size_t)N * C * plane);
  const auto& sv = src.values();
  const auto& fv = flow.values();
  for (int n = 0; n < N; ++n) {
    const real* u = fv.data() + (int64_t)n * 2 * plane;
    const real* v = u + plane;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        real sx = x + u[y * W + x];
        real sy = y + v[y * W + x];
        if (!std::isfinite(sx) || !std::isfinite(sy)) {
          // poisoned displacement: emit NaN so the loss check trips, but
          // never index with it
          for (int c = 0; c < C; ++c)
            out[((int64_t)n * C + c) * plane + y * W + x] =
                std::numeric_limits<real>::quiet_NaN();
          continue;
        }
        sx = std::clamp(sx, (real)0, (real)(W - 1));
        sy = std::clamp(sy, (real)0, (real)(H - 1));
        int x0 = (int)std::floor(sx), y0 = (int)std::floor(sy);
        int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        real fx = sx - x0, fy = sy - y0;
        for (int c = 0; c < C; ++c) {
          const real* sp = sv.data() + ((int64_t)n * C + c) * plane;
          real top = (1 - fx) * sp[y0 * W + x0] + fx * sp[y0 * W + x1];
          real bot = (1 - fx) * sp[y1 * W + x0] + fx * sp[y1 * W + x1];
          out[((int64_t)n * C + c) * plane + y * W + x] =
              (1 - fy) * top + fy * bot;
        }
      }
  }

  return Tensor::make_op(
      "warp", src.shape(), std::move(out), {src, flow}, [=](Node& nd) {
        const auto& sv = pval(nd, 0);
        const auto& fv = pval(nd, 1);
        bool want_src = wants(nd, 0), want_flow = wants(nd, 1);
        for (int n = 0; n < N; ++n) {
          const real* u = fv.data() + (int64_t)n * 2 * plane;
          const real* v = u + plane;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
              real rx = x + u[y * W + x];
              real ry = y + v[y * W + x];
              if (!std::isfinite(rx) || !std::isfinite(ry)) continue;
              bool cx = rx <= 0 || rx >= W - 1;
              bool cy = ry <= 0 || ry >= H - 1;
              real sx = std::clamp(rx, (real)0, (real)(W - 1));
              real sy = std::clamp(ry, (real)0, (real)(H - 1));
              int x0 = (int)std::floor(sx), y0 = (int)std::floor(sy);
              int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
              real fx = sx - x0, fy = sy - y0;
              real du = 0, dv = 0;
              for (int c = 0; c < C; ++c) {
                const real* sp = sv.data() + ((int64_t)n * C + c) * plane;
                real g = nd.grad[((int64_t)n * C + c) * plane + y * W + x];
                if (want_src) {
                  real* gp = pgrad(nd, 0).data() + ((int64_t)n * C + c) * plane;
                  gp[y0 * W + x0] += g * (1 - fx) * (1 - fy);
                  gp[y0 * W + x1] += g * fx * (1 - fy);
                  gp[y1 * W + x0] += g * (1 - fx) * fy;
                  gp[y1 * W + x1] += g * fx * fy;
                }
                if (want_flow) {
                  du += g * ((1 - fy) * (sp[y0 * W + x1] - sp[y0 * W + x0]) +
                             fy * (sp[y1 * W + x1] - sp[y1 * W + x0]));
                  dv += g * ((1 - fx) * (sp[y1 * W + x0] - sp[y0 * W + x0]) +
                             fx * (sp[y1 * W + x1] - sp[y0 * W + x1]));
                }
              }
              if (want_flow) {
                real* gu = pgrad(nd, 1).data() + (int64_t)n * 2 * plane;
                real* gv = gu + plane;
                if (!cx) gu[y * W + x] += du;
                if (!cy) gv[y * W + x] += dv;
              }
            }
        }
      });
}

// Bilinear resize of [N,C,H,W] to [N,C,OH,OW] using half-pixel centre
// alignment. Differentiable with respect to the input.
inline Tensor resize_bilinear(const Tensor& x, int OH, int OW) {
  if (x.ndim() != 4) tensor_fail("resize_bilinear: expects [N,C,H,W]");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (OH <= 0 || OW <= 0) tensor_fail("resize_bilinear: empty target");
  real scale_y = (real)H / OH, scale_x = (real)W / OW;
  struct Tap {
    int x0, x1, y0, y1;
    real fx, fy;
  };
  std::vector<Tap> taps((size_t)OH * OW);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox) {
      real sy = std::clamp((oy + (real)0.5) * scale_y - (real)0.5, (real)0,
                           (real)(H - 1));
      real sx = std::clamp((ox + (real)0.5) * scale_x - (real)0.5, (real)0,
                           (real)(W - 1));
      Tap& t = taps[(size_t)oy * OW + ox];
      t.y0 = (int)std::floor(sy);
      t.x0 = (int)std::floor(sx);
      t.y1 = std::min(t.y0 + 1, H - 1);
      t.x1 = std::min(t.x0 + 1, W - 1);
      t.fy = sy - t.y0;
      t.fx = sx - t.x0;
    }
  std::vector<real> out((size_t)N * C * OH * OW);
  for (int64_t nc = 0; nc < (int64_t)N * C; ++nc) {
    const real* sp = x.values().data() + nc * H * W;
    real* dp = out.data() + nc * OH * OW;
    for (size_t i = 0; i < taps.size(); ++i) {
      const Tap& t = taps[i];
      real top = (1 - t.fx) * sp[t.y0 * W + t.x0] + t.fx * sp[t.y0 * W + t.x1];
      real bot = (1 - t.fx) * sp[t.y1 * W + t.x0] + t.fx * sp[t.y1 * W + t.x1];
      dp[i] = (1 - t.fy) * top + t.fy * bot;
    }
  }
  return Tensor::make_op(
      "resize_bilinear", {N, C, OH, OW}, std::move(out), {x},
      [taps, N, C, H, W, OH, OW](Node& nd) {
        if (!wants(nd, 0)) return;
        for (int64_t nc = 0; nc < (int64_t)N * C; ++nc) {
          real* gp = pgrad(nd, 0).data() + nc * H * W;
          const real* op = nd.grad.data() + nc * OH * OW;
          for (size_t i = 0; i < taps.size(); ++i) {
            const Tap& t = taps[i];
            real g = op[i];
            gp[t.y0 * W + t.x0] += g * (1 - t.fx) * (1 - t.fy);
            gp[t.y0 * W + t.x1] += g * t.fx * (1 - t.fy);
            gp[t.y1 * W + t.x0] += g * (1 - t.fx) * t.fy;
            gp[t.y1 * W + t.x1] += g * t.fx * t.fy;
          }
        }
      });
}

// Rescale a displacement field [N,2,H,W] to a new resolution, scaling the
// vector components so displacements keep their meaning in the new grid.
inline Tensor resize_flow(const Tensor& flow, int OH, int OW) {
  if (flow.ndim() != 4 || flow.dim(1) != 2)
    tensor_fail("resize_flow: expects [N,2,H,W]");
  int H = flow.dim(2), W = flow.dim(3);
  Tensor r = resize_bilinear(flow, OH, OW);
  Tensor u = slice(r, {0, 0, 0, 0}, {r.dim(0), 1, OH, OW});
  Tensor v = slice(r, {0, 1, 0, 0}, {r.dim(0), 1, OH, OW});
  return concat({mul_scalar(u, (real)OW / W), mul_scalar(v, (real)OH / H)}, 1);
}

}  // namespace vinpaint
