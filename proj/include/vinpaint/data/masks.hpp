#pragma once

#include "vinpaint/core/rng.hpp"
#include "vinpaint/data/flow_field.hpp"

namespace vinpaint {

// Per-frame binary corruption maps; 1 marks the missing region.
struct MaskClip {
  int frames = 0, height = 0, width = 0;
  std::vector<real> data;  // frames*H*W

  static MaskClip zeros(int t, int h, int w) {
    MaskClip m;
    m.frames = t;
    m.height = h;
    m.width = w;
    m.data.assign((size_t)t * h * w, 0.0);
    return m;
  }

  real* frame(int t) { return data.data() + (size_t)t * height * width; }
  const real* frame(int t) const {
    return data.data() + (size_t)t * height * width;
  }
  std::vector<real> frame_vec(int t) const {
    return std::vector<real>(frame(t), frame(t) + (size_t)height * width);
  }
  Tensor frame_tensor(int t) const {
    return Tensor::from_data({1, 1, height, width}, frame_vec(t));
  }
};

enum class MaskMotion { Static, Drift };

// Largest per-axis centroid step the drifting generators may take.
constexpr real kMaskDriftMax = 2.0;

namespace detail {

struct DriftState {
  real y, x, vy, vx;
};

inline void drift_step(DriftState& s, Rng& rng, real ylo, real yhi, real xlo,
                       real xhi) {
  s.vy = std::clamp(s.vy + rng.uniform(-0.5, 0.5), -kMaskDriftMax,
                    kMaskDriftMax);
  s.vx = std::clamp(s.vx + rng.uniform(-0.5, 0.5), -kMaskDriftMax,
                    kMaskDriftMax);
  s.y += s.vy;
  s.x += s.vx;
  if (s.y < ylo) s.y = ylo, s.vy = std::abs(s.vy);
  if (s.y > yhi) s.y = yhi, s.vy = -std::abs(s.vy);
  if (s.x < xlo) s.x = xlo, s.vx = std::abs(s.vx);
  if (s.x > xhi) s.x = xhi, s.vx = -std::abs(s.vx);
}

}  // namespace detail

// Axis-aligned square holes whose expected area is one sixteenth of the
// frame: side = sqrt(H*W)/4 scaled by a uniform [0.8, 1.2] factor. Static
// mode repeats one square; drift mode moves it with a bounded, smoothly
// varying velocity that bounces off the frame border.
inline MaskClip gen_square_masks(int T, int H, int W, uint64_t seed,
                                 MaskMotion motion = MaskMotion::Static) {
  Rng rng(seed);
  MaskClip clip = MaskClip::zeros(T, H, W);
  real scale = rng.uniform(0.8, 1.2);
  int side = (int)std::lround(std::sqrt((real)H * W) / 4.0 * scale);
  side = std::clamp(side, 1, std::min(H, W));
  detail::DriftState st;
  st.y = rng.uniform(0.0, (real)(H - side));
  st.x = rng.uniform(0.0, (real)(W - side));
  st.vy = rng.uniform(-kMaskDriftMax, kMaskDriftMax);
  st.vx = rng.uniform(-kMaskDriftMax, kMaskDriftMax);
  for (int t = 0; t < T; ++t) {
    int y0 = (int)std::lround(st.y), x0 = (int)std::lround(st.x);
    real* m = clip.frame(t);
    for (int y = y0; y < y0 + side; ++y)
      for (int x = x0; x < x0 + side; ++x) m[y * W + x] = 1.0;
    if (motion == MaskMotion::Drift)
      detail::drift_step(st, rng, 0, (real)(H - side), 0, (real)(W - side));
  }
  return clip;
}

// Free-form hole: a star-shaped blob whose boundary radius is a low-order
// trigonometric polynomial of the angle. Star-shapedness keeps every mask a
// single connected component. Area is calibrated into [2%, 15%] of the
// frame; the blob drifts like the square masks, clamped so it stays inside.
inline MaskClip gen_object_masks(int T, int H, int W, uint64_t seed) {
  Rng rng(seed);
  MaskClip clip = MaskClip::zeros(T, H, W);
  real target = rng.uniform(0.04, 0.10) * H * W;
  real r0 = std::sqrt(target / M_PI);
  const int kModes = 4;
  real amp[kModes], phase[kModes];
  for (int k = 0; k < kModes; ++k) {
    amp[k] = rng.uniform(-0.4, 0.4) / (k + 2);
    phase[k] = rng.uniform(0.0, 2.0 * M_PI);
  }
  auto radius_at = [&](real theta, real r) {
    real s = 1.0;
    for (int k = 0; k < kModes; ++k)
      s += amp[k] * std::cos((k + 2) * theta + phase[k]);
    return r * s;
  };
  auto rasterize = [&](real cy, real cx, real r, real* m) {
    int area = 0;
    real rmax = r * 1.5;
    int ylo = std::max(0, (int)std::floor(cy - rmax));
    int yhi = std::min(H - 1, (int)std::ceil(cy + rmax));
    int xlo = std::max(0, (int)std::floor(cx - rmax));
    int xhi = std::min(W - 1, (int)std::ceil(cx + rmax));
    for (int y = ylo; y <= yhi; ++y)
      for (int x = xlo; x <= xhi; ++x) {
        real dy = y - cy, dx = x - cx;
        real d = std::hypot(dx, dy);
        if (d <= radius_at(std::atan2(dy, dx), r)) {
          if (m) m[y * W + x] = 1.0;
          ++area;
        }
      }
    return area;
  };
  // two calibration passes bring the discrete area close to the target
  auto margin_for = [&](real r) {
    real m = r * 1.6;
    return std::min({m, (real)(H - 1) / 2, (real)(W - 1) / 2});
  };
  real margin = margin_for(r0);
  real cy = rng.uniform(margin, (real)H - 1 - margin);
  real cx = rng.uniform(margin, (real)W - 1 - margin);
  for (int pass = 0; pass < 2; ++pass) {
    int area = rasterize(cy, cx, r0, nullptr);
    if (area > 0) r0 *= std::sqrt(target / area);
  }
  detail::DriftState st{cy, cx, rng.uniform(-kMaskDriftMax, kMaskDriftMax),
                        rng.uniform(-kMaskDriftMax, kMaskDriftMax)};
  margin = margin_for(r0);
  st.y = std::clamp(st.y, margin, (real)H - 1 - margin);
  st.x = std::clamp(st.x, margin, (real)W - 1 - margin);
  for (int t = 0; t < T; ++t) {
    rasterize(st.y, st.x, r0, clip.frame(t));
    detail::drift_step(st, rng, margin, (real)H - 1 - margin, margin,
                       (real)W - 1 - margin);
  }
  return clip;
}

}  // namespace vinpaint
