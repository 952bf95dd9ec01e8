#pragma once

#include <string>

#include "vinpaint/flowcomp/config.hpp"
#include "vinpaint/flowcomp/p3d.hpp"

namespace vinpaint {

struct LafcOutput {
  Tensor flow;  // [N, 2, H, W] completed flow at input resolution
  Tensor edge;  // [N, 1, H, W] motion-boundary probabilities in [0,1]
};

// Flow completion network: a pseudo-3D U-Net encoder over the local flow
// sequence, temporal shrink on the trunk and on each skip connection, then a
// 2D decoder that emits the completed middle flow. A small residual
// convolution head projects boundary probabilities from the shared decoder
// feature; it never feeds back into the flow branch.
class LafcNet {
 public:
  explicit LafcNet(const LafcConfig& cfg, uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    int b = cfg_.base_channels;
    int t = cfg_.sequence_length();
    stem_w_ = bank_.add_conv("stem.w", {b, 3, 3, 3}, rng);
    stem_b_ = bank_.add_zeros("stem.b", {b});
    enc1_ = P3DBlock(bank_, "enc1", b, b, 0, rng);
    down1_w_ = bank_.add_conv("down1.w", {2 * b, b, 3, 3}, rng);
    down1_b_ = bank_.add_zeros("down1.b", {2 * b});
    enc2_ = P3DBlock(bank_, "enc2", 2 * b, 2 * b, 0, rng);
    down2_w_ = bank_.add_conv("down2.w", {4 * b, 2 * b, 3, 3}, rng);
    down2_b_ = bank_.add_zeros("down2.b", {4 * b});
    enc3_ = P3DBlock(bank_, "enc3", 4 * b, 4 * b, t, rng);
    skip1_ = P3DBlock(bank_, "skip1", b, b, t, rng);
    skip2_ = P3DBlock(bank_, "skip2", 2 * b, 2 * b, t, rng);
    up1_w_ = bank_.add_conv("up1.w", {2 * b, 4 * b, 3, 3}, rng);
    up1_b_ = bank_.add_zeros("up1.b", {2 * b});
    merge1_w_ = bank_.add_conv("merge1.w", {2 * b, 4 * b, 3, 3}, rng);
    merge1_b_ = bank_.add_zeros("merge1.b", {2 * b});
    up2_w_ = bank_.add_conv("up2.w", {b, 2 * b, 3, 3}, rng);
    up2_b_ = bank_.add_zeros("up2.b", {b});
    merge2_w_ = bank_.add_conv("merge2.w", {b, 2 * b, 3, 3}, rng);
    merge2_b_ = bank_.add_zeros("merge2.b", {b});
    head_w_ = bank_.add_conv("head.w", {b, b, 3, 3}, rng);
    head_b_ = bank_.add_zeros("head.b", {b});
    // zero-initialized output layer: a fresh network predicts zero flow
    flow_w_ = bank_.add_zeros("flow.w", {2, b, 3, 3});
    flow_b_ = bank_.add_zeros("flow.b", {2});
    edge1_w_ = bank_.add_conv("edge1.w", {b, b, 3, 3}, rng);
    edge1_b_ = bank_.add_zeros("edge1.b", {b});
    edge2_w_ = bank_.add_conv("edge2.w", {b, b, 3, 3}, rng);
    edge2_b_ = bank_.add_zeros("edge2.b", {b});
    edge3_w_ = bank_.add_conv("edge3.w", {b, b, 3, 3}, rng);
    edge3_b_ = bank_.add_zeros("edge3.b", {b});
    edge4_w_ = bank_.add_conv("edge4.w", {1, b, 3, 3}, rng);
    edge4_b_ = bank_.add_zeros("edge4.b", {1});
  }

  // x: [N, 3, 2n+1, H, W] with per-frame channels (u, v, hole mask); the
  // flows are expected hole-initialized. H and W must be divisible by 4.
  LafcOutput forward(const Tensor& x) const {
    if (x.ndim() != 5 || x.dim(1) != 3)
      tensor_fail("lafc: expects [N,3,T,H,W] input");
    if (x.dim(2) != cfg_.sequence_length())
      tensor_fail("lafc: sequence length " + std::to_string(x.dim(2)) +
                  " != configured " + std::to_string(cfg_.sequence_length()));
    int H = x.dim(3), W = x.dim(4);
    if (H % 4 || W % 4) tensor_fail("lafc: H and W must be divisible by 4");

    Tensor s0 = leaky_relu(conv_spatial(x, stem_w_, stem_b_, 1, 1));
    Tensor e1 = enc1_.forward(s0);
    Tensor d1 = leaky_relu(conv_spatial(e1, down1_w_, down1_b_, 2, 1));
    Tensor e2 = enc2_.forward(d1);
    Tensor d2 = leaky_relu(conv_spatial(e2, down2_w_, down2_b_, 2, 1));
    Tensor e3 = enc3_.forward(d2);  // -> T = 1
    Tensor k1 = skip1_.forward(e1);
    Tensor k2 = skip2_.forward(e2);

    Tensor bottom = reshape(e3, {x.dim(0), -1, H / 4, W / 4});
    Tensor s1 = reshape(k1, {x.dim(0), -1, H, W});
    Tensor s2 = reshape(k2, {x.dim(0), -1, H / 2, W / 2});

    Tensor u1 = leaky_relu(
        conv2d(upsample_nearest2x(bottom), up1_w_, up1_b_, 1, 1));
    Tensor m1 = leaky_relu(conv2d(concat({u1, s2}, 1), merge1_w_, merge1_b_,
                                  1, 1));
    Tensor u2 = leaky_relu(conv2d(upsample_nearest2x(m1), up2_w_, up2_b_, 1, 1));
    Tensor m2 = leaky_relu(conv2d(concat({u2, s1}, 1), merge2_w_, merge2_b_,
                                  1, 1));
    Tensor h = leaky_relu(conv2d(m2, head_w_, head_b_, 1, 1));

    LafcOutput out;
    out.flow = conv2d(h, flow_w_, flow_b_, 1, 1);
    // boundary head: four convolutions with one residual connection
    Tensor eh = leaky_relu(conv2d(h, edge1_w_, edge1_b_, 1, 1));
    eh = conv2d(eh, edge2_w_, edge2_b_, 1, 1);
    eh = leaky_relu(eh + h);
    eh = leaky_relu(conv2d(eh, edge3_w_, edge3_b_, 1, 1));
    out.edge = sigmoid(conv2d(eh, edge4_w_, edge4_b_, 1, 1));
    return out;
  }

  ParamBank& params() { return bank_; }
  const ParamBank& params() const { return bank_; }
  const LafcConfig& config() const { return cfg_; }

 private:
  LafcConfig cfg_;
  ParamBank bank_;
  P3DBlock enc1_, enc2_, enc3_, skip1_, skip2_;
  Tensor stem_w_, stem_b_, down1_w_, down1_b_, down2_w_, down2_b_;
  Tensor up1_w_, up1_b_, merge1_w_, merge1_b_, up2_w_, up2_b_;
  Tensor merge2_w_, merge2_b_, head_w_, head_b_, flow_w_, flow_b_;
  Tensor edge1_w_, edge1_b_, edge2_w_, edge2_b_, edge3_w_, edge3_b_;
  Tensor edge4_w_, edge4_b_;
};

// Keeps observed flow values outside the hole and the prediction inside it.
inline Tensor lafc_composite(const Tensor& predicted, const Tensor& observed,
                             const Tensor& mask) {
  if (mask.tracked()) tensor_fail("lafc_composite: mask must be untracked");
  Tensor keep = add_scalar(neg(mask), 1.0);  // 1 - mask, [N,1,H,W]
  Tensor pieces[2];
  for (int c = 0; c < 2; ++c) {
    Tensor pc = slice(predicted, {0, c, 0, 0},
                      {predicted.dim(0), 1, predicted.dim(2), predicted.dim(3)});
    Tensor oc = slice(observed, {0, c, 0, 0},
                      {observed.dim(0), 1, observed.dim(2), observed.dim(3)});
    pieces[c] = pc * mask + oc * keep;
  }
  return concat({pieces[0], pieces[1]}, 1);
}

}  // namespace vinpaint
