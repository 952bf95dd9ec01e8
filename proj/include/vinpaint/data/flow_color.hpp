#pragma once

#include <array>

#include "vinpaint/data/flow_field.hpp"
#include "vinpaint/data/image.hpp"

namespace vinpaint {

// Standard flow color wheel: 55 hues spanning six unevenly sized arcs
// (RY 15, YG 6, GC 4, CB 11, BM 13, MR 6). Direction selects the hue,
// magnitude scales saturation away from white at the center.
inline const std::vector<std::array<real, 3>>& flow_color_wheel() {
  static const std::vector<std::array<real, 3>> wheel = [] {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<real, 3>> w;
    w.reserve(RY + YG + GC + CB + BM + MR);
    for (int i = 0; i < RY; ++i)
      w.push_back({1.0, (real)i / RY, 0.0});
    for (int i = 0; i < YG; ++i)
      w.push_back({1.0 - (real)i / YG, 1.0, 0.0});
    for (int i = 0; i < GC; ++i)
      w.push_back({0.0, 1.0, (real)i / GC});
    for (int i = 0; i < CB; ++i)
      w.push_back({0.0, 1.0 - (real)i / CB, 1.0});
    for (int i = 0; i < BM; ++i)
      w.push_back({(real)i / BM, 0.0, 1.0});
    for (int i = 0; i < MR; ++i)
      w.push_back({1.0, 0.0, 1.0 - (real)i / MR});
    return w;
  }();
  return wheel;
}

// max_radius <= 0 normalizes by the field's own maximum magnitude.
inline Image flow_to_color(const FlowField& f, real max_radius = 0.0) {
  const auto& wheel = flow_color_wheel();
  int ncols = (int)wheel.size();
  real maxrad = max_radius;
  if (maxrad <= 0) {
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        maxrad = std::max(maxrad, std::hypot(f.u(y, x), f.v(y, x)));
    if (maxrad == 0) maxrad = 1.0;
  }
  Image im = Image::zeros(f.height, f.width, 3);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      real u = f.u(y, x) / maxrad, v = f.v(y, x) / maxrad;
      real rad = std::hypot(u, v);
      real a = std::atan2(-v, -u) / M_PI;  // [-1, 1]
      real fk = (a + 1.0) / 2.0 * (ncols - 1);
      int k0 = (int)std::floor(fk);
      int k1 = (k0 + 1) % ncols;
      real frac = fk - k0;
      for (int c = 0; c < 3; ++c) {
        real col = (1 - frac) * wheel[k0][c] + frac * wheel[k1][c];
        if (rad <= 1.0)
          col = 1.0 - rad * (1.0 - col);  // desaturate toward white
        else
          col *= 0.75;  // out of range
        im.at(y, x, c) = col;
      }
    }
  return im;
}

}  // namespace vinpaint
