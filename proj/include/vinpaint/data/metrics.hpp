#pragma once

#include "vinpaint/data/flow_field.hpp"
#include "vinpaint/data/image.hpp"

namespace vinpaint {

// Mean Euclidean end-point error between two fields, optionally restricted
// to pixels where region > 0.5. An empty region is an error, not a zero.
inline real metric_epe(const FlowField& pred, const FlowField& gt,
                       const std::vector<real>* region = nullptr) {
  if (!pred.same_extent(gt)) tensor_fail("metric_epe: extent mismatch");
  if (region && (int)region->size() != pred.height * pred.width)
    tensor_fail("metric_epe: region extent mismatch");
  real acc = 0;
  int64_t count = 0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      if (region && (*region)[y * pred.width + x] <= 0.5) continue;
      acc += std::hypot(pred.u(y, x) - gt.u(y, x), pred.v(y, x) - gt.v(y, x));
      ++count;
    }
  if (count == 0) tensor_fail("metric_epe: empty evaluation region");
  return acc / (real)count;
}

constexpr real kPsnrCap = 99.0;

// Peak signal-to-noise ratio for [0,1] images, capped at 99 dB so identical
// frames stay finite.
inline real metric_psnr(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width ||
      a.channels != b.channels)
    tensor_fail("metric_psnr: extent mismatch");
  real mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    real d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= (real)a.data.size();
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline const std::vector<real>& ssim_window() {
  static const std::vector<real> w = [] {
    const int R = 5;
    const real sigma = 1.5;
    std::vector<real> k(11);
    real sum = 0;
    for (int i = -R; i <= R; ++i) {
      k[i + R] = std::exp(-0.5 * i * i / (sigma * sigma));
      sum += k[i + R];
    }
    for (real& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Separable 11-tap Gaussian filtering, evaluated only where the full window
// fits ("valid" region); the result has extent (H-10) x (W-10).
inline std::vector<real> ssim_filter(const std::vector<real>& img, int H,
                                     int W) {
  const auto& k = ssim_window();
  const int R = 5;
  int OW = W - 2 * R, OH = H - 2 * R;
  std::vector<real> tmp((size_t)H * OW), out((size_t)OH * OW);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < OW; ++x) {
      real acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[i] * img[y * W + x + i];
      tmp[y * OW + x] = acc;
    }
  for (int y = 0; y < OH; ++y)
    for (int x = 0; x < OW; ++x) {
      real acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[i] * tmp[(y + i) * OW + x];
      out[y * OW + x] = acc;
    }
  return out;
}

}  // namespace detail

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, dynamic range 1. Computed per channel over the valid
// window region and averaged.
inline real metric_ssim(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width ||
      a.channels != b.channels)
    tensor_fail("metric_ssim: extent mismatch");
  int H = a.height, W = a.width;
  if (H < 11 || W < 11) tensor_fail("metric_ssim: frame smaller than window");
  const real C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  real total = 0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<real> xa((size_t)H * W), xb((size_t)H * W);
    std::vector<real> aa((size_t)H * W), bb((size_t)H * W), ab((size_t)H * W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        real va = a.at(y, x, c), vb = b.at(y, x, c);
        xa[y * W + x] = va;
        xb[y * W + x] = vb;
        aa[y * W + x] = va * va;
        bb[y * W + x] = vb * vb;
        ab[y * W + x] = va * vb;
      }
    auto mu_a = detail::ssim_filter(xa, H, W);
    auto mu_b = detail::ssim_filter(xb, H, W);
    auto m_aa = detail::ssim_filter(aa, H, W);
    auto m_bb = detail::ssim_filter(bb, H, W);
    auto m_ab = detail::ssim_filter(ab, H, W);
    real acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      real va = m_aa[i] - mu_a[i] * mu_a[i];
      real vb = m_bb[i] - mu_b[i] * mu_b[i];
      real cov = m_ab[i] - mu_a[i] * mu_b[i];
      acc += (2 * mu_a[i] * mu_b[i] + C1) * (2 * cov + C2) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2));
    }
    total += acc / (real)mu_a.size();
  }
  return total / a.channels;
}

}  // namespace vinpaint
