#pragma once

#include <map>

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

namespace detail {

struct TrigBasis {
  std::vector<real> cosm, sinm;  // [n, n] row major: [k, y] -> 2*pi*k*y/n
};

inline const TrigBasis& trig_basis(int n) {
  static std::map<int, TrigBasis> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  TrigBasis b;
  b.cosm.resize((size_t)n * n);
  b.sinm.resize((size_t)n * n);
  for (int k = 0; k < n; ++k)
    for (int y = 0; y < n; ++y) {
      double th = 2.0 * M_PI * (double)((int64_t)k * y % n) / n;
      b.cosm[(size_t)k * n + y] = std::cos(th);
      b.sinm[(size_t)k * n + y] = std::sin(th);
    }
  return cache.emplace(n, std::move(b)).first->second;
}

// R = (CH X CW^T - SH X SW^T) / sqrt(HW)
// I = -(SH X CW^T + CH X SW^T) / sqrt(HW)
// sign=+1 computes the forward pair; sign=-1 applies the adjoint (which is
// the same linear form with transposed factors, realized by swapping the
// multiplication order since the trig matrices are symmetric).
inline void dft2_plane(const real* x, int H, int W, real* re, real* im) {
  const TrigBasis& bh = trig_basis(H);
  const TrigBasis& bw = trig_basis(W);
  real norm = 1.0 / std::sqrt((real)H * W);
  std::vector<real> xc((size_t)H * W), xs((size_t)H * W);
  // xc = X CW^T, xs = X SW^T (CW, SW symmetric so CW^T == CW)
  gemm(false, false, H, W, W, 1.0, x, W, bw.cosm.data(), W, 0.0, xc.data(), W);
  gemm(false, false, H, W, W, 1.0, x, W, bw.sinm.data(), W, 0.0, xs.data(), W);
  gemm(false, false, H, W, H, norm, bh.cosm.data(), H, xc.data(), W, 0.0, re,
       W);
  gemm(false, false, H, W, H, -norm, bh.sinm.data(), H, xs.data(), W, 1.0, re,
       W);
  gemm(false, false, H, W, H, -norm, bh.sinm.data(), H, xc.data(), W, 0.0, im,
       W);
  gemm(false, false, H, W, H, -norm, bh.cosm.data(), H, xs.data(), W, 1.0, im,
       W);
}

inline void dft2_plane_adjoint(const real* gre, const real* gim, int H, int W,
                               real* gx) {
  const TrigBasis& bh = trig_basis(H);
  const TrigBasis& bw = trig_basis(W);
  real norm = 1.0 / std::sqrt((real)H * W);
  std::vector<real> t((size_t)H * W), acc((size_t)H * W);
  // gx += CH^T gre CW / sqrt - SH^T gre SW / sqrt - SH^T gim CW / sqrt
  //       - CH^T gim SW / sqrt   (trig matrices symmetric)
  gemm(false, false, H, W, H, norm, bh.cosm.data(), H, gre, W, 0.0, t.data(),
       W);
  gemm(false, false, H, W, H, -norm, bh.sinm.data(), H, gim, W, 1.0, t.data(),
       W);
  gemm(false, false, H, W, W, 1.0, t.data(), W, bw.cosm.data(), W, 0.0,
       acc.data(), W);
  gemm(false, false, H, W, H, -norm, bh.sinm.data(), H, gre, W, 0.0, t.data(),
       W);
  gemm(false, false, H, W, H, -norm, bh.cosm.data(), H, gim, W, 1.0, t.data(),
       W);
  gemm(false, false, H, W, W, 1.0, t.data(), W, bw.sinm.data(), W, 1.0,
       acc.data(), W);
  for (size_t i = 0; i < acc.size(); ++i) gx[i] += acc[i];
}

}  // namespace detail

// Unitary 2D discrete Fourier transform of each [H,W] plane. Input
// [N,C,H,W], output [N,C,2,H,W] with the real part at index 0 and the
// imaginary part at index 1 of the inserted axis. With the 1/sqrt(HW)
// normalization the transform preserves the sum of squares.
inline Tensor dft2(const Tensor& x) {
  if (x.ndim() != 4) tensor_fail("dft2: expects [N,C,H,W]");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t plane = (int64_t)H * W;
  std::vector<real> out((size_t)N * C * 2 * plane);
  for (int64_t nc = 0; nc < (int64_t)N * C; ++nc)
    detail::dft2_plane(x.values().data() + nc * plane, H, W,
                       out.data() + nc * 2 * plane,
                       out.data() + nc * 2 * plane + plane);
  return Tensor::make_op(
      "dft2", {N, C, 2, H, W}, std::move(out), {x}, [N, C, H, W](Node& nd) {
        if (!wants(nd, 0)) return;
        int64_t plane = (int64_t)H * W;
        for (int64_t nc = 0; nc < (int64_t)N * C; ++nc)
          detail::dft2_plane_adjoint(nd.grad.data() + nc * 2 * plane,
                                     nd.grad.data() + nc * 2 * plane + plane,
                                     H, W,
                                     pgrad(nd, 0).data() + nc * plane);
      });
}

// Per-frequency amplitude sqrt(re^2 + im^2) of a [N,C,2,H,W] transform,
// giving [N,C,H,W].
inline Tensor complex_amplitude(const Tensor& f) {
  if (f.ndim() != 5 || f.dim(2) != 2)
    tensor_fail("complex_amplitude: expects [N,C,2,H,W]");
  int N = f.dim(0), C = f.dim(1), H = f.dim(3), W = f.dim(4);
  Tensor re = reshape(slice(f, {0, 0, 0, 0, 0}, {N, C, 1, H, W}),
                      {N, C, H, W});
  Tensor im = reshape(slice(f, {0, 0, 1, 0, 0}, {N, C, 1, H, W}),
                      {N, C, H, W});
  return sqrt_op(add(mul(re, re), mul(im, im)));
}

// Amplitude spectrum of each plane of [N,C,H,W].
inline Tensor dft2_amplitude(const Tensor& x) {
  return complex_amplitude(dft2(x));
}

}  // namespace vinpaint
