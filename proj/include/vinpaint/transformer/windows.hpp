#pragma once

#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// Partition plan for non-overlapping windows over a token grid, padding the
// bottom/right edge with zero tokens when extents do not divide evenly.
struct WindowPlan {
  int grid_h = 0, grid_w = 0;  // original grid
  int win_h = 0, win_w = 0;
  int nh = 0, nw = 0;  // window counts after padding

  int pad_h() const { return nh * win_h - grid_h; }
  int pad_w() const { return nw * win_w - grid_w; }
  int windows() const { return nh * nw; }
  int window_len() const { return win_h * win_w; }

  // Is slot (iy, ix) of window (wy, wx) backed by a real token?
  bool valid(int wy, int wx, int iy, int ix) const {
    return wy * win_h + iy < grid_h && wx * win_w + ix < grid_w;
  }
};

inline WindowPlan plan_windows(int grid_h, int grid_w, int win_h, int win_w) {
  if (grid_h < 1 || grid_w < 1 || win_h < 1 || win_w < 1)
    tensor_fail("plan_windows: bad extents");
  WindowPlan p;
  p.grid_h = grid_h;
  p.grid_w = grid_w;
  p.win_h = win_h;
  p.win_w = win_w;
  p.nh = (grid_h + win_h - 1) / win_h;
  p.nw = (grid_w + win_w - 1) / win_w;
  return p;
}

// [T, H, W, D] -> [T * nh * nw, win_h * win_w, D]; padded slots hold zeros.
// Window order is row-major over (frame, wy, wx), slot order row-major over
// (iy, ix).
inline Tensor window_partition(const Tensor& x, const WindowPlan& p) {
  if (x.ndim() != 4 || x.dim(1) != p.grid_h || x.dim(2) != p.grid_w)
    tensor_fail("window_partition: input does not match plan");
  int T = x.dim(0), D = x.dim(3);
  Tensor padded = x;
  if (p.pad_h() > 0 || p.pad_w() > 0)
    padded = pad_zero(x, {{0, 0}, {0, p.pad_h()}, {0, p.pad_w()}, {0, 0}});
  Tensor r = reshape(padded, {T, p.nh, p.win_h, p.nw, p.win_w, D});
  Tensor q = permute(r, {0, 1, 3, 2, 4, 5});
  return reshape(q, {T * p.windows(), p.window_len(), D});
}

// Inverse of window_partition; crops the padded rows/columns away.
inline Tensor window_merge(const Tensor& wins, const WindowPlan& p, int T) {
  if (wins.ndim() != 3 || wins.dim(0) != T * p.windows() ||
      wins.dim(1) != p.window_len())
    tensor_fail("window_merge: input does not match plan");
  int D = wins.dim(2);
  Tensor r = reshape(wins, {T, p.nh, p.nw, p.win_h, p.win_w, D});
  Tensor q = permute(r, {0, 1, 3, 2, 4, 5});
  Tensor full = reshape(q, {T, p.nh * p.win_h, p.nw * p.win_w, D});
  if (p.pad_h() == 0 && p.pad_w() == 0) return full;
  return slice(full, {0, 0, 0, 0}, {T, p.grid_h, p.grid_w, D});
}

// Validity of each window slot in partition order, one flag per (window,
// slot) of a single frame; frames share the same pattern.
inline std::vector<unsigned char> window_validity(const WindowPlan& p) {
  std::vector<unsigned char> v((size_t)p.windows() * p.window_len());
  size_t i = 0;
  for (int wy = 0; wy < p.nh; ++wy)
    for (int wx = 0; wx < p.nw; ++wx)
      for (int iy = 0; iy < p.win_h; ++iy)
        for (int ix = 0; ix < p.win_w; ++ix)
          v[i++] = p.valid(wy, wx, iy, ix) ? 1 : 0;
  return v;
}

// Additive attention bias [B, Lq, Lk] that switches off the keys flagged
// invalid; key_valid is indexed [b * Lk + k]. The tensor is untracked, as
// softmax_attention requires.
inline Tensor attention_bias(int B, int Lq,
                             const std::vector<unsigned char>& key_valid) {
  if (key_valid.size() % B != 0)
    tensor_fail("attention_bias: validity size not divisible by batch");
  int Lk = (int)(key_valid.size() / B);
  std::vector<real> bias((size_t)B * Lq * Lk, 0.0);
  constexpr real kOff = -1e9;
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < Lk; ++k)
      if (!key_valid[(size_t)b * Lk + k])
        for (int q = 0; q < Lq; ++q)
          bias[((int64_t)b * Lq + q) * Lk + k] = kOff;
  return Tensor::from_data({B, Lq, Lk}, std::move(bias));
}

}  // namespace vinpaint
