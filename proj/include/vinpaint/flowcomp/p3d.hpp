#pragma once

#include <string>

#include "vinpaint/core/conv.hpp"
#include "vinpaint/core/init.hpp"
#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// Pseudo-3D residual block: a 2D spatial convolution followed by a 1D
// temporal convolution, added back onto the input. With all weights and
// biases zero the block is an exact identity (shrink blocks reduce to the
// middle temporal slice instead, since the temporal extents differ).
//
// Non-shrink blocks keep the temporal extent (temporal kernel 3, padding 1).
// Shrink blocks collapse the whole sequence to one step with an unpadded
// temporal kernel equal to the input length.
class P3DBlock {
 public:
  P3DBlock() = default;

  P3DBlock(ParamBank& bank, const std::string& prefix, int in_ch, int out_ch,
           int shrink_kernel /* 0 = keep temporal extent */, Rng& rng,
           int spatial_stride = 1, int spatial_kernel = 3)
      : in_ch_(in_ch),
        out_ch_(out_ch),
        stride_(spatial_stride),
        ksp_(spatial_kernel),
        shrink_(shrink_kernel > 0),
        kt_(shrink_kernel > 0 ? shrink_kernel : 3) {
    sc_w_ = bank.add_conv(prefix + ".sc.w", {out_ch, in_ch, ksp_, ksp_}, rng);
    sc_b_ = bank.add_zeros(prefix + ".sc.b", {out_ch});
    tc_w_ = bank.add_conv(prefix + ".tc.w", {out_ch, out_ch, kt_}, rng);
    tc_b_ = bank.add_zeros(prefix + ".tc.b", {out_ch});
    if (in_ch != out_ch || spatial_stride != 1) {
      has_proj_ = true;
      proj_w_ = bank.add_conv(prefix + ".proj.w", {out_ch, in_ch, 1, 1}, rng);
      proj_b_ = bank.add_zeros(prefix + ".proj.b", {out_ch});
    }
  }

  // x: [N, C, T, H, W]
  Tensor forward(const Tensor& x) const {
    if (x.ndim() != 5) tensor_fail("p3d: expects [N,C,T,H,W]");
    int T = x.dim(2);
    if (shrink_ && T != kt_)
      tensor_fail("p3d: shrink block built for T=" + std::to_string(kt_) +
                  " got T=" + std::to_string(T));
    Tensor h = conv_spatial(x, sc_w_, sc_b_, stride_, ksp_ / 2);
    h = leaky_relu(h);
    h = conv_temporal(h, tc_w_, tc_b_, 1, shrink_ ? 0 : (kt_ - 1) / 2);
    Tensor res = x;
    if (shrink_)  // keep the middle step: it corresponds to the target flow
      res = slice(res, {0, 0, T / 2, 0, 0},
                  {res.dim(0), res.dim(1), 1, res.dim(3), res.dim(4)});
    if (has_proj_) res = conv_spatial(res, proj_w_, proj_b_, stride_, 0);
    if (in_ch_ != out_ch_ && !has_proj_)
      tensor_fail("p3d: channel change without projection");
    return h + res;
  }

  bool shrinks() const { return shrink_; }
  int temporal_kernel() const { return kt_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, stride_ = 1, ksp_ = 3;
  bool shrink_ = false;
  int kt_ = 3;
  bool has_proj_ = false;
  Tensor sc_w_, sc_b_, tc_w_, tc_b_, proj_w_, proj_b_;
};

}  // namespace vinpaint
