#pragma once

#include "vinpaint/core/init.hpp"
#include "vinpaint/transformer/tokens.hpp"

namespace vinpaint {

// Flow-token gating: flow tokens are reweighted by a sigmoid gate computed
// from frame and flow tokens together, then concatenated back onto the frame
// tokens and projected to the original width. Frames without flows (the
// distant ones) bypass the module.
class Fgfi {
 public:
  Fgfi(ParamBank& bank, const std::string& prefix, int channels, Rng& rng)
      : g1_w_(bank.add_linear(prefix + ".g1.w", 2 * channels, channels, rng)),
        g1_b_(bank.add_zeros(prefix + ".g1.b", {channels})),
        g2_w_(bank.add_linear(prefix + ".g2.w", channels, channels, rng)),
        g2_b_(bank.add_zeros(prefix + ".g2.b", {channels})),
        proj_w_(bank.add_linear(prefix + ".proj.w", 2 * channels, channels,
                                rng)),
        proj_b_(bank.add_zeros(prefix + ".proj.b", {channels})) {}

  // frame_tokens, flow_tokens: [Tl, H, W, D] on the same grid.
  Tensor forward(const Tensor& frame_tokens,
                 const Tensor& flow_tokens) const {
    if (frame_tokens.shape() != flow_tokens.shape())
      tensor_fail("Fgfi: frame/flow token grids differ (" +
                  shape_str(frame_tokens.shape()) + " vs " +
                  shape_str(flow_tokens.shape()) + ")");
    Tensor both = concat({frame_tokens, flow_tokens}, 3);
    Tensor gate = sigmoid(
        linear(gelu(linear(both, g1_w_, g1_b_)), g2_w_, g2_b_));
    Tensor reweighted = flow_tokens * gate;
    return linear(concat({frame_tokens, reweighted}, 3), proj_w_, proj_b_);
  }

 private:
  Tensor g1_w_, g1_b_, g2_w_, g2_b_, proj_w_, proj_b_;
};

}  // namespace vinpaint
