#pragma once

#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

// Dense displacement field in pixel units. Storage is H*W*2 interleaved
// (u, v) row major — the same layout as the interchange file format, so
// file round-trips are pure memory copies. u is horizontal (columns), v is
// vertical (rows).
struct FlowField {
  int height = 0, width = 0;
  std::vector<real> uv;

  static FlowField zeros(int h, int w) {
    FlowField f;
    f.height = h;
    f.width = w;
    f.uv.assign((size_t)h * w * 2, 0.0);
    return f;
  }

  real& u(int y, int x) { return uv[((size_t)y * width + x) * 2]; }
  real& v(int y, int x) { return uv[((size_t)y * width + x) * 2 + 1]; }
  real u(int y, int x) const { return uv[((size_t)y * width + x) * 2]; }
  real v(int y, int x) const { return uv[((size_t)y * width + x) * 2 + 1]; }

  bool same_extent(const FlowField& o) const {
    return height == o.height && width == o.width;
  }
};

// Planar [1,2,H,W] tensor view of a field (channel 0 = u, channel 1 = v).
inline Tensor flow_to_tensor(const FlowField& f) {
  std::vector<real> d((size_t)2 * f.height * f.width);
  int64_t plane = (int64_t)f.height * f.width;
  for (int64_t i = 0; i < plane; ++i) {
    d[i] = f.uv[i * 2];
    d[plane + i] = f.uv[i * 2 + 1];
  }
  return Tensor::from_data({1, 2, f.height, f.width}, std::move(d));
}

inline FlowField tensor_to_flow(const Tensor& t) {
  if (t.ndim() != 4 || t.dim(0) != 1 || t.dim(1) != 2)
    tensor_fail("tensor_to_flow: expects [1,2,H,W], got " +
                shape_str(t.shape()));
  FlowField f = FlowField::zeros(t.dim(2), t.dim(3));
  int64_t plane = (int64_t)f.height * f.width;
  for (int64_t i = 0; i < plane; ++i) {
    f.uv[i * 2] = t.values()[i];
    f.uv[i * 2 + 1] = t.values()[plane + i];
  }
  return f;
}

// Chain two displacement fields: result(p) = a(p) + b(p + a(p)), i.e. the
// displacement that first follows a and then b from where a landed. b is
// sampled bilinearly with border clamping.
inline FlowField compose_flow(const FlowField& a, const FlowField& b) {
  if (!a.same_extent(b)) tensor_fail("compose_flow: extent mismatch");
  int H = a.height, W = a.width;
  FlowField out = FlowField::zeros(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      real sx = std::clamp(x + a.u(y, x), (real)0, (real)(W - 1));
      real sy = std::clamp(y + a.v(y, x), (real)0, (real)(H - 1));
      int x0 = (int)std::floor(sx), y0 = (int)std::floor(sy);
      int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      real fx = sx - x0, fy = sy - y0;
      auto sample = [&](auto&& comp) {
        real top = (1 - fx) * comp(y0, x0) + fx * comp(y0, x1);
        real bot = (1 - fx) * comp(y1, x0) + fx * comp(y1, x1);
        return (1 - fy) * top + fy * bot;
      };
      out.u(y, x) =
          a.u(y, x) + sample([&](int yy, int xx) { return b.u(yy, xx); });
      out.v(y, x) =
          a.v(y, x) + sample([&](int yy, int xx) { return b.v(yy, xx); });
    }
  return out;
}

}  // namespace vinpaint
