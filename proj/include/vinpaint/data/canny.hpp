#pragma once

#include <deque>

#include "vinpaint/data/flow_field.hpp"

namespace vinpaint {

namespace detail {

inline void gaussian_blur(std::vector<real>& img, int H, int W, real sigma) {
  if (sigma <= 0) return;
  int radius = (int)std::ceil(3.0 * sigma);
  std::vector<real> k(2 * radius + 1);
  real sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (real& v : k) v /= sum;
  auto reflect = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  std::vector<real> tmp(img.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * img[y * W + reflect(x + i, W)];
      tmp[y * W + x] = acc;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp[reflect(y + i, H) * W + x];
      img[y * W + x] = acc;
    }
}

}  // namespace detail

// Edge detection on one scalar plane: Gaussian smoothing, Sobel gradients,
// non-maximum suppression along the quantized gradient direction, then
// hysteresis growth of strong edges (above `high`) through weak ones (above
// `low`). On a plateau of equal magnitudes the comparison keeps exactly one
// pixel (strict on one side, lenient on the other), so an axis-aligned step
// yields a one-pixel line. Returns {0,1} per pixel.
inline std::vector<real> canny(std::vector<real> img, int H, int W,
                               real sigma, real low, real high) {
  if (low >= high) tensor_fail("canny: requires low < high");
  detail::gaussian_blur(img, H, W, sigma);
  auto reflect = [](int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  auto px = [&](int y, int x) { return img[reflect(y, H) * W + reflect(x, W)]; };
  std::vector<real> mag((size_t)H * W), dir((size_t)H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real gx = px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1) -
                px(y - 1, x - 1) - 2 * px(y, x - 1) - px(y + 1, x - 1);
      real gy = px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1) -
                px(y - 1, x - 1) - 2 * px(y - 1, x) - px(y - 1, x + 1);
      mag[y * W + x] = std::hypot(gx, gy);
      dir[y * W + x] = std::atan2(gy, gx);
    }
  std::vector<unsigned char> state((size_t)H * W, 0);  // 0 none 1 weak 2 strong
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real m = mag[y * W + x];
      if (m <= low) continue;
      // quantize direction into one of four neighbour axes
      real a = dir[y * W + x];
      if (a < 0) a += M_PI;
      int dx, dy;
      if (a < M_PI / 8 || a >= 7 * M_PI / 8) {
        dx = 1;
        dy = 0;
      } else if (a < 3 * M_PI / 8) {
        dx = 1;
        dy = 1;
      } else if (a < 5 * M_PI / 8) {
        dx = 0;
        dy = 1;
      } else {
        dx = -1;
        dy = 1;
      }
      auto m_at = [&](int yy, int xx) {
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return (real)0;
        return mag[yy * W + xx];
      };
      // strict against the forward neighbour, lenient against the backward
      // one: ties on a two-pixel plateau keep only the forward-most pixel.
      if (m <= m_at(y + dy, x + dx) || m < m_at(y - dy, x - dx)) continue;
      state[y * W + x] = m > high ? 2 : 1;
    }
  // hysteresis: flood from strong pixels through weak ones, 8-connected
  std::vector<real> out((size_t)H * W, 0.0);
  std::deque<int> q;
  for (int i = 0; i < H * W; ++i)
    if (state[i] == 2) {
      out[i] = 1.0;
      q.push_back(i);
    }
  while (!q.empty()) {
    int i = q.front();
    q.pop_front();
    int y = i / W, x = i % W;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        int j = yy * W + xx;
        if (state[j] == 1 && out[j] == 0.0) {
          out[j] = 1.0;
          q.push_back(j);
        }
      }
  }
  return out;
}

// Motion-boundary extraction: edges of the flow magnitude plane.
inline std::vector<real> canny_flow(const FlowField& f, real sigma, real low,
                                    real high) {
  std::vector<real> magp((size_t)f.height * f.width);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      magp[y * f.width + x] = std::hypot(f.u(y, x), f.v(y, x));
  return canny(std::move(magp), f.height, f.width, sigma, low, high);
}

}  // namespace vinpaint
