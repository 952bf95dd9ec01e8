#pragma once

#include "vinpaint/data/flow_field.hpp"

namespace vinpaint {

// Replace the masked region of one scalar plane with the solution of the
// discrete Laplace equation, using unmasked pixels as Dirichlet boundary.
// At the frame border the missing neighbours are simply dropped (each hole
// pixel relaxes to the mean of its in-frame neighbours). Gauss-Seidel with
// over-relaxation, iterated until the largest update is below tol.
inline void laplace_fill_plane(std::vector<real>& plane,
                               const std::vector<real>& hole, int H, int W,
                               real tol = 1e-9, int max_sweeps = 200000,
                               real omega = 1.9) {
  std::vector<int> px;
  for (int i = 0; i < H * W; ++i)
    if (hole[i] > 0.5) px.push_back(i);
  if (px.empty()) return;
  // Seed hole pixels with the mean of the valid ones for a neutral start.
  real seed = 0;
  int valid = H * W - (int)px.size();
  if (valid > 0) {
    for (int i = 0; i < H * W; ++i)
      if (hole[i] <= 0.5) seed += plane[i];
    seed /= valid;
  }
  for (int i : px) plane[i] = seed;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    real worst = 0;
    for (int i : px) {
      int y = i / W, x = i % W;
      real acc = 0;
      int cnt = 0;
      if (y > 0) acc += plane[i - W], ++cnt;
      if (y + 1 < H) acc += plane[i + W], ++cnt;
      if (x > 0) acc += plane[i - 1], ++cnt;
      if (x + 1 < W) acc += plane[i + 1], ++cnt;
      real target = acc / cnt;
      real delta = target - plane[i];
      plane[i] += omega * delta;
      worst = std::max(worst, std::abs(delta));
    }
    if (worst < tol) break;
  }
}

// Fill both flow channels. If the mask covers the whole field there is no
// boundary data; the hole is set to zero and *degenerate is raised.
inline FlowField laplacian_fill(const FlowField& f,
                                const std::vector<real>& mask,
                                bool* degenerate = nullptr,
                                real tol = 1e-9) {
  if ((int)mask.size() != f.height * f.width)
    tensor_fail("laplacian_fill: mask extent mismatch");
  if (degenerate) *degenerate = false;
  bool any_valid = false;
  for (real m : mask) any_valid = any_valid || m <= 0.5;
  FlowField out = f;
  if (!any_valid) {
    if (degenerate) *degenerate = true;
    std::fill(out.uv.begin(), out.uv.end(), 0.0);
    return out;
  }
  int H = f.height, W = f.width;
  for (int ch = 0; ch < 2; ++ch) {
    std::vector<real> plane((size_t)H * W);
    for (int i = 0; i < H * W; ++i) plane[i] = f.uv[(size_t)i * 2 + ch];
    laplace_fill_plane(plane, mask, H, W, tol);
    for (int i = 0; i < H * W; ++i) out.uv[(size_t)i * 2 + ch] = plane[i];
  }
  return out;
}

}  // namespace vinpaint
