#pragma once

#include "vinpaint/data/flow_field.hpp"

namespace vinpaint {

// Forward-backward consistency check. A pixel is flagged occluded when the
// round trip through both fields fails to return near its origin:
//   ||F_fwd(p) + F_bwd(p + F_fwd(p))||^2
//       > alpha * (||F_fwd(p)||^2 + ||F_bwd(p + F_fwd(p))||^2) + beta
// The backward field is sampled bilinearly with border clamping. Returns
// one value per pixel, 1 = occluded.
inline std::vector<real> fb_consistency(const FlowField& fwd,
                                        const FlowField& bwd,
                                        real alpha = 0.01, real beta = 0.5) {
  if (!fwd.same_extent(bwd)) tensor_fail("fb_consistency: extent mismatch");
  int H = fwd.height, W = fwd.width;
  std::vector<real> occ((size_t)H * W, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real fu = fwd.u(y, x), fv = fwd.v(y, x);
      real sx = std::clamp(x + fu, (real)0, (real)(W - 1));
      real sy = std::clamp(y + fv, (real)0, (real)(H - 1));
      int x0 = (int)std::floor(sx), y0 = (int)std::floor(sy);
      int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      real fx = sx - x0, fyw = sy - y0;
      auto bsample = [&](auto&& comp) {
        real top = (1 - fx) * comp(y0, x0) + fx * comp(y0, x1);
        real bot = (1 - fx) * comp(y1, x0) + fx * comp(y1, x1);
        return (1 - fyw) * top + fyw * bot;
      };
      real bu = bsample([&](int yy, int xx) { return bwd.u(yy, xx); });
      real bv = bsample([&](int yy, int xx) { return bwd.v(yy, xx); });
      real mismatch = (fu + bu) * (fu + bu) + (fv + bv) * (fv + bv);
      real mass = fu * fu + fv * fv + bu * bu + bv * bv;
      if (mismatch > alpha * mass + beta) occ[y * W + x] = 1.0;
    }
  return occ;
}

}  // namespace vinpaint
