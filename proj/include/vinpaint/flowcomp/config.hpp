#pragma once

#include "vinpaint/core/tensor.hpp"

namespace vinpaint {

// Configuration of the local-aggregation flow completion network. The input
// is a sequence of 2n+1 hole-initialized flows sampled `interval` frames
// apart; the middle flow is the completion target.
struct LafcConfig {
  int n = 1;             // local radius; sequence length is 2n+1
  int interval = 3;      // frames between consecutive flows in the sequence
  int base_channels = 32;  // encoder widths: base, 2*base, 4*base
  int encoder_stages = 3;
  int decoder_stages = 2;  // upsampling steps back to input resolution

  // Loss weights: hole reconstruction, valid reconstruction, smoothness,
  // warp, edge.
  real lambda_hole = 1.0;
  real lambda_valid = 1.0;
  real lambda_smooth = 0.5;
  real lambda_warp = 0.01;
  real lambda_edge = 1.0;

  int sequence_length() const { return 2 * n + 1; }

  void validate() const {
    if (n < 0) tensor_fail("LafcConfig: n must be >= 0");
    if (interval < 1) tensor_fail("LafcConfig: interval must be >= 1");
    if (base_channels < 1) tensor_fail("LafcConfig: base_channels must be >= 1");
    if (encoder_stages != 3 || decoder_stages != 2)
      tensor_fail("LafcConfig: only the 3-stage encoder / 2-stage decoder "
                  "topology is implemented");
  }
};

}  // namespace vinpaint
