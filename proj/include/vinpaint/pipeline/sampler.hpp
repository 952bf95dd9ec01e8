#pragma once

#include <vector>

#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

// Frame selection for one inpainting work unit: a run of consecutive frames
// around the target plus sparse distant frames for long-range context.
struct WindowSample {
  std::vector<int> locals;   // consecutive; always 2*radius+1 long when T
                             // allows, shifted (not shrunk) at the ends
  std::vector<int> globals;  // multiples of the interval, minus any index
                             // already in the local run
};

inline WindowSample sliding_window_sampler(int T, int t, int local_radius,
                                           int global_interval) {
  if (T < 1 || t < 0 || t >= T)
    tensor_fail("sliding_window_sampler: target outside the sequence");
  if (local_radius < 0 || global_interval < 1)
    tensor_fail("sliding_window_sampler: bad window parameters");
  WindowSample out;
  int len = 2 * local_radius + 1;
  if (T <= len) {
    for (int i = 0; i < T; ++i) out.locals.push_back(i);
    return out;  // whole sequence is one window; nothing distant remains
  }
  int lo = std::clamp(t - local_radius, 0, T - len);
  for (int i = 0; i < len; ++i) out.locals.push_back(lo + i);
  for (int g = 0; g < T; g += global_interval)
    if (g < lo || g >= lo + len) out.globals.push_back(g);
  return out;
}

}  // namespace vinpaint
