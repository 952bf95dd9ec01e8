#pragma once

#include <limits>
#include <string>
#include <vector>

#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

// Layout and capacity knobs for the inpainting transformer. The defaults
// describe the reference layout: eight blocks alternating temporal/spatial
// (temporal first), cross-frame zone attention plus flow-deformed attention
// in every temporal block, window attention with condensed global tokens in
// every spatial block, flow-token gating in the first spatial block only,
// and flow-guided propagation at the encoder and inside the first six
// blocks' feed-forward layers.
struct FgtConfig {
  int blocks = 8;  // alternating temporal, spatial, temporal, ...

  int token_channels = 128;  // width of the token stream
  int heads = 4;
  int feature_channels = 16;  // channels of the patch feature space

  // Patch geometry shared by every token<->feature transition.
  int token_kernel = 7;
  int token_stride = 3;
  int token_pad = 3;

  int lw_zones = 2;        // zone split per side for cross-frame attention
  int spatial_window = 8;  // window side for per-frame attention

  // Condensed global tokens for per-frame attention.
  int global_kernel = 5;
  int global_stride = 4;

  // Module placement, counted from the encoder side.
  int fgfi_blocks = 1;       // leading spatial blocks with flow-token gating
  int fgfp_blocks = 6;       // leading blocks with propagation feed-forwards
  bool fgfp_encoder = true;  // propagation right after the frame encoder
  int td_blocks = 4;         // leading temporal blocks with deformed windows

  int deform_kernel = 3;     // tap grid of the propagation refinement

  // Frame sampling: 2*local_radius+1 consecutive local frames, plus distant
  // frames taken every global_interval positions.
  int local_radius = 2;
  int global_interval = 5;

  int temporal_blocks() const { return (blocks + 1) / 2; }
  int spatial_blocks() const { return blocks / 2; }
  int local_frames() const { return 2 * local_radius + 1; }
  int patch_dim() const {
    return feature_channels * token_kernel * token_kernel;
  }

  void validate() const {
    if (blocks < 1) tensor_fail("FgtConfig: blocks must be positive");
    if (token_channels < heads || token_channels % heads != 0)
      tensor_fail("FgtConfig: token_channels must be a multiple of heads");
    if (heads < 1) tensor_fail("FgtConfig: heads must be positive");
    if (feature_channels < 1)
      tensor_fail("FgtConfig: feature_channels must be positive");
    if (token_kernel < 1 || token_stride < 1 || token_pad < 0)
      tensor_fail("FgtConfig: bad patch geometry");
    if (lw_zones < 1 || spatial_window < 1)
      tensor_fail("FgtConfig: bad window layout");
    if (global_kernel < 1 || global_kernel % 2 == 0)
      tensor_fail("FgtConfig: global_kernel must be odd");
    if (global_stride < 1) tensor_fail("FgtConfig: bad global_stride");
    if (fgfi_blocks < 0 || fgfi_blocks > spatial_blocks())
      tensor_fail("FgtConfig: fgfi_blocks out of range");
    if (fgfp_blocks < 0 || fgfp_blocks > blocks)
      tensor_fail("FgtConfig: fgfp_blocks out of range");
    if (td_blocks < 0 || td_blocks > temporal_blocks())
      tensor_fail("FgtConfig: td_blocks out of range");
    if (deform_kernel < 1 || deform_kernel % 2 == 0)
      tensor_fail("FgtConfig: deform_kernel must be odd");
    if (local_radius < 0 || global_interval < 1)
      tensor_fail("FgtConfig: bad frame sampling");
  }
};

// Structure report assembled from an actually-built model, so tests can
// verify placement against the constructed graph instead of the config echo.
struct FgtDescription {
  int blocks = 0;
  int temporal_blocks = 0;
  int spatial_blocks = 0;
  std::string block_kinds;            // e.g. "TSTSTSTS"
  std::vector<int> fgfi_block_ids;    // absolute block indices with gating
  std::vector<int> fgfp_block_ids;    // absolute block indices with propagation
  bool fgfp_at_encoder = false;
  std::vector<int> td_block_ids;      // absolute block indices with deformed MHSA
  int spatial_window = 0;
  int global_kernel = 0;
  int global_stride = 0;
  int lw_zones = 0;
  int token_kernel = 0;
  int token_stride = 0;
  int token_pad = 0;
  int heads = 0;
  int token_channels = 0;
};

// Number of condensed global tokens a depth-wise condensation with the given
// stride produces on a grid (ceil division per side; realized exactly by an
// odd kernel with half-kernel padding).
inline int dp_global_token_count(int grid_h, int grid_w, int stride) {
  return ((grid_h + stride - 1) / stride) * ((grid_w + stride - 1) / stride);
}

// Keys visible to one query in dual-perspective attention: its own window
// plus the shared global tokens.
inline int dp_key_count(int grid_h, int grid_w, int win_h, int win_w,
                        int stride) {
  return dp_global_token_count(grid_h, grid_w, stride) + win_h * win_w;
}

// Smallest integer t with t >= sqrt(HW / (HW - hw)). Any stride strictly
// above it makes the per-query key count drop below the all-pair count.
inline int dp_reduction_threshold(int grid_h, int grid_w, int win_h,
                                  int win_w) {
  int64_t all = (int64_t)grid_h * grid_w;
  int64_t win = (int64_t)win_h * win_w;
  if (win >= all) return std::numeric_limits<int>::max();
  int64_t den = all - win;
  int t = 1;
  while ((int64_t)t * t * den < all) ++t;
  return t;
}

inline bool dp_reduces_keys(int grid_h, int grid_w, int win_h, int win_w,
                            int stride) {
  return stride > dp_reduction_threshold(grid_h, grid_w, win_h, win_w);
}

// Window extents for the temporal attentions: zone side is a ceil split of
// the grid, the deformed window takes half of a zone per side.
inline int lw_zone_extent(int grid, int zones) {
  return (grid + zones - 1) / zones;
}

inline int td_window_extent(int lw_extent) { return (lw_extent + 1) / 2; }

}  // namespace vinpaint
