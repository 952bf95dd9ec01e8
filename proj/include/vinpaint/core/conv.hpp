#pragma once

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

namespace detail {

inline int conv_out_extent(const char* op, int in, int k, int stride, int pad,
                           int dil) {
  int eff = dil * (k - 1) + 1;
  int out = (in + 2 * pad - eff) / stride + 1;
  if (out <= 0)
    tensor_fail(std::string(op) + ": empty output (extent " +
                std::to_string(in) + ", kernel " + std::to_string(k) + ")");
  return out;
}

// Patch matrix for one (sample, group): rows = Cg*KH*KW, cols = OH*OW.
inline void im2col2d(const real* x, int C, int H, int W, int KH, int KW,
                     int OH, int OW, int stride, int pad, int dil,
                     real* cols) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        real* row = cols + (((int64_t)c * KH + kh) * KW + kw) * OH * OW;
        const real* xp = x + (int64_t)c * H * W;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh * dil;
          if (ih < 0 || ih >= H) {
            std::fill(row + oh * OW, row + (oh + 1) * OW, 0.0);
            continue;
          }
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw * dil;
            row[oh * OW + ow] = (iw >= 0 && iw < W) ? xp[ih * W + iw] : 0.0;
          }
        }
      }
}

inline void col2im2d(const real* cols, int C, int H, int W, int KH, int KW,
                     int OH, int OW, int stride, int pad, int dil, real* gx) {
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < KH; ++kh)
      for (int kw = 0; kw < KW; ++kw) {
        const real* row = cols + (((int64_t)c * KH + kh) * KW + kw) * OH * OW;
        real* gp = gx + (int64_t)c * H * W;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + kh * dil;
          if (ih < 0 || ih >= H) continue;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kw * dil;
            if (iw >= 0 && iw < W) gp[ih * W + iw] += row[oh * OW + ow];
          }
        }
      }
}

}  // namespace detail

// x:[N,C,H,W], w:[OC,C/groups,KH,KW], bias:[OC] or undefined.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                     int stride = 1, int pad = 0, int dil = 1,
                     int groups = 1) {
  if (x.ndim() != 4 || w.ndim() != 4)
    tensor_fail("conv2d: expects x [N,C,H,W], w [OC,Cg,KH,KW]");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int OC = w.dim(0), Cg = w.dim(1), KH = w.dim(2), KW = w.dim(3);
  if (C != Cg * groups || OC % groups != 0)
    tensor_fail("conv2d: channel/group mismatch " + shape_str(x.shape()) +
                " vs " + shape_str(w.shape()) + " groups=" +
                std::to_string(groups));
  bool has_bias = bias.defined();
  if (has_bias && bias.numel() != OC) tensor_fail("conv2d: bias size");
  int OH = detail::conv_out_extent("conv2d", H, KH, stride, pad, dil);
  int OW = detail::conv_out_extent("conv2d", W, KW, stride, pad, dil);
  int OCg = OC / groups;
  int R = Cg * KH * KW;

  std::vector<real> out((size_t)N * OC * OH * OW);
  std::vector<real> cols((size_t)R * OH * OW);
  for (int n = 0; n < N; ++n)
    for (int g = 0; g < groups; ++g) {
      detail::im2col2d(x.values().data() + ((int64_t)n * C + g * Cg) * H * W,
                       Cg, H, W, KH, KW, OH, OW, stride, pad, dil,
                       cols.data());
      gemm(false, false, OCg, OH * OW, R, 1.0,
           w.values().data() + (int64_t)g * OCg * R, R, cols.data(), OH * OW,
           0.0, out.data() + ((int64_t)n * OC + g * OCg) * OH * OW, OH * OW);
    }
  if (has_bias)
    for (int n = 0; n < N; ++n)
      for (int oc = 0; oc < OC; ++oc) {
        real b = bias.values()[oc];
        real* p = out.data() + ((int64_t)n * OC + oc) * OH * OW;
        for (int i = 0; i < OH * OW; ++i) p[i] += b;
      }

  std::vector<Tensor> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_op(
      "conv2d", {N, OC, OH, OW}, std::move(out), std::move(parents),
      [=](Node& nd) {
        std::vector<real> cols((size_t)R * OH * OW);
        for (int n = 0; n < N; ++n)
          for (int g = 0; g < groups; ++g) {
            const real* gout =
                nd.grad.data() + ((int64_t)n * OC + g * OCg) * OH * OW;
            if (wants(nd, 1)) {
              detail::im2col2d(
                  pval(nd, 0).data() + ((int64_t)n * C + g * Cg) * H * W, Cg,
                  H, W, KH, KW, OH, OW, stride, pad, dil, cols.data());
              gemm(false, true, OCg, R, OH * OW, 1.0, gout, OH * OW,
                   cols.data(), OH * OW, 1.0,
                   pgrad(nd, 1).data() + (int64_t)g * OCg * R, R);
            }
            if (wants(nd, 0)) {
              gemm(true, false, R, OH * OW, OCg, 1.0,
                   pval(nd, 1).data() + (int64_t)g * OCg * R, R, gout, OH * OW,
                   0.0, cols.data(), OH * OW);
              detail::col2im2d(
                  cols.data(), Cg, H, W, KH, KW, OH, OW, stride, pad, dil,
                  pgrad(nd, 0).data() + ((int64_t)n * C + g * Cg) * H * W);
            }
          }
        if (has_bias && wants(nd, 2)) {
          auto& gb = pgrad(nd, 2);
          for (int n = 0; n < N; ++n)
            for (int oc = 0; oc < OC; ++oc) {
              const real* p = nd.grad.data() + ((int64_t)n * OC + oc) * OH * OW;
              real acc = 0;
              for (int i = 0; i < OH * OW; ++i) acc += p[i];
              gb[oc] += acc;
            }
        }
      });
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, int stride = 1,
                     int pad = 0, int dil = 1, int groups = 1) {
  return conv2d(x, w, Tensor(), stride, pad, dil, groups);
}

// x:[N,C,T,H,W], w:[OC,C,KT,KH,KW]; per-axis stride and padding.
inline Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
                     int st, int sh, int sw, int pt, int ph, int pw) {
  if (x.ndim() != 5 || w.ndim() != 5)
    tensor_fail("conv3d: expects x [N,C,T,H,W], w [OC,C,KT,KH,KW]");
  int N = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  int OC = w.dim(0), KT = w.dim(2), KH = w.dim(3), KW = w.dim(4);
  if (w.dim(1) != C)
    tensor_fail("conv3d: channel mismatch " + shape_str(x.shape()) + " vs " +
                shape_str(w.shape()));
  bool has_bias = bias.defined();
  if (has_bias && bias.numel() != OC) tensor_fail("conv3d: bias size");
  int OT = detail::conv_out_extent("conv3d", T, KT, st, pt, 1);
  int OH = detail::conv_out_extent("conv3d", H, KH, sh, ph, 1);
  int OW = detail::conv_out_extent("conv3d", W, KW, sw, pw, 1);
  int R = C * KT * KH * KW;
  int64_t ocols = (int64_t)OT * OH * OW;

  auto fill_cols = [=](const real* xp, real* cols) {
    for (int c = 0; c < C; ++c)
      for (int kt = 0; kt < KT; ++kt)
        for (int kh = 0; kh < KH; ++kh)
          for (int kw = 0; kw < KW; ++kw) {
            real* row = cols + ((((int64_t)c * KT + kt) * KH + kh) * KW + kw) *
                                   ocols;
            for (int ot = 0; ot < OT; ++ot) {
              int it = ot * st - pt + kt;
              for (int oh = 0; oh < OH; ++oh) {
                int ih = oh * sh - ph + kh;
                real* dst = row + ((int64_t)ot * OH + oh) * OW;
                if (it < 0 || it >= T || ih < 0 || ih >= H) {
                  std::fill(dst, dst + OW, 0.0);
                  continue;
                }
                const real* src = xp + (((int64_t)c * T + it) * H + ih) * W;
                for (int ow = 0; ow < OW; ++ow) {
                  int iw = ow * sw - pw + kw;
                  dst[ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
                }
              }
            }
          }
  };
  auto scatter_cols = [=](const real* cols, real* gx) {
    for (int c = 0; c < C; ++c)
      for (int kt = 0; kt < KT; ++kt)
        for (int kh = 0; kh < KH; ++kh)
          for (int kw = 0; kw < KW; ++kw) {
            const real* row =
                cols + ((((int64_t)c * KT + kt) * KH + kh) * KW + kw) * ocols;
            for (int ot = 0; ot < OT; ++ot) {
              int it = ot * st - pt + kt;
              if (it < 0 || it >= T) continue;
              for (int oh = 0; oh < OH; ++oh) {
                int ih = oh * sh - ph + kh;
                if (ih < 0 || ih >= H) continue;
                const real* src = row + ((int64_t)ot * OH + oh) * OW;
                real* dst = gx + (((int64_t)c * T + it) * H + ih) * W;
                for (int ow = 0; ow < OW; ++ow) {
                  int iw = ow * sw - pw + kw;
                  if (iw >= 0 && iw < W) dst[iw] += src[ow];
                }
              }
            }
          }
  };

  std::vector<real> out((size_t)N * OC * ocols);
  {
    std::vector<real> cols((size_t)R * ocols);
    for (int n = 0; n < N; ++n) {
      fill_cols(x.values().data() + (int64_t)n * C * T * H * W, cols.data());
      gemm(false, false, OC, (int)ocols, R, 1.0, w.values().data(), R,
           cols.data(), (int)ocols, 0.0, out.data() + (int64_t)n * OC * ocols,
           (int)ocols);
    }
  }
  if (has_bias)
    for (int n = 0; n < N; ++n)
      for (int oc = 0; oc < OC; ++oc) {
        real b = bias.values()[oc];
        real* p = out.data() + ((int64_t)n * OC + oc) * ocols;
        for (int64_t i = 0; i < ocols; ++i) p[i] += b;
      }

  std::vector<Tensor> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return Tensor::make_op(
      "conv3d", {N, OC, OT, OH, OW}, std::move(out), std::move(parents),
      [=](Node& nd) {
        std::vector<real> cols((size_t)R * ocols);
        for (int n = 0; n < N; ++n) {
          const real* gout = nd.grad.data() + (int64_t)n * OC * ocols;
          if (wants(nd, 1)) {
            fill_cols(pval(nd, 0).data() + (int64_t)n * C * T * H * W,
                      cols.data());
            gemm(false, true, OC, R, (int)ocols, 1.0, gout, (int)ocols,
                 cols.data(), (int)ocols, 1.0, pgrad(nd, 1).data(), R);
          }
          if (wants(nd, 0)) {
            gemm(true, false, R, (int)ocols, OC, 1.0, pval(nd, 1).data(), R,
                 gout, (int)ocols, 0.0, cols.data(), (int)ocols);
            scatter_cols(cols.data(),
                         pgrad(nd, 0).data() + (int64_t)n * C * T * H * W);
          }
        }
        if (has_bias && wants(nd, 2)) {
          auto& gb = pgrad(nd, 2);
          for (int n = 0; n < N; ++n)
            for (int oc = 0; oc < OC; ++oc) {
              const real* p = nd.grad.data() + ((int64_t)n * OC + oc) * ocols;
              real acc = 0;
              for (int64_t i = 0; i < ocols; ++i) acc += p[i];
              gb[oc] += acc;
            }
        }
      });
}

// Convolution along the time axis only: x [N,C,T,H,W], w [OC,C,KT].
inline Tensor conv_temporal(const Tensor& x, const Tensor& w,
                            const Tensor& bias, int stride = 1, int pad = 0) {
  if (w.ndim() != 3) tensor_fail("conv_temporal: expects w [OC,C,KT]");
  Tensor w5 = reshape(w, {w.dim(0), w.dim(1), w.dim(2), 1, 1});
  return conv3d(x, w5, bias, stride, 1, 1, pad, 0, 0);
}

// 2D convolution applied frame by frame: x [N,C,T,H,W].
inline Tensor conv_spatial(const Tensor& x, const Tensor& w,
                           const Tensor& bias, int stride = 1, int pad = 0) {
  if (x.ndim() != 5) tensor_fail("conv_spatial: expects x [N,C,T,H,W]");
  int N = x.dim(0), C = x.dim(1), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  Tensor frames = reshape(permute(x, {0, 2, 1, 3, 4}), {N * T, C, H, W});
  Tensor y = conv2d(frames, w, bias, stride, pad);
  Tensor back =
      permute(reshape(y, {N, T, y.dim(1), y.dim(2), y.dim(3)}),
              {0, 2, 1, 3, 4});
  return back;
}

}  // namespace vinpaint
