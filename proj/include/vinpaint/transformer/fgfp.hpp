#pragma once

#include "vinpaint/core/conv.hpp"
#include "vinpaint/core/init.hpp"
#include "vinpaint/core/warp.hpp"

namespace vinpaint {

// Feature displacement t -> t+2 obtained by chaining two one-step flows:
// follow f_ab from a, then f_bc read at the position f_ab lands on.
inline Tensor compose_flow(const Tensor& f_ab, const Tensor& f_bc) {
  return f_ab + warp(f_bc, f_ab);
}

// Flow-guided propagation over the local frames. Each frame gathers its
// first- and second-order neighbors in both directions: a neighbor is
// backward-warped by its completed flow, refined by a deformable tap grid
// whose residual offsets and modulation are predicted from the evidence
// (target features, plainly warped neighbor, the flow itself), and the
// per-direction branches are fused by a 1x1 merge. One parameter set serves
// every frame.
class Fgfp {
 public:
  Fgfp(ParamBank& bank, const std::string& prefix, int channels,
       int deform_kernel, Rng& rng)
      : channels_(channels),
        k_(deform_kernel),
        off1_w_(bank.add_conv(prefix + ".off1.w",
                              {channels, 2 * channels + 2, 3, 3}, rng)),
        off1_b_(bank.add_zeros(prefix + ".off1.b", {channels})),
        off2_w_(bank.add_zeros(prefix + ".off2.w",
                               {3 * deform_kernel * deform_kernel, channels, 3,
                                3})),
        off2_b_(bank.add_zeros(prefix + ".off2.b",
                               {3 * deform_kernel * deform_kernel})),
        align_w_(bank.add_conv(prefix + ".align.w",
                               {channels, channels, deform_kernel,
                                deform_kernel},
                               rng)),
        align_b_(bank.add_zeros(prefix + ".align.b", {channels})),
        branchf_w_(bank.add_conv(prefix + ".branchf.w",
                                 {channels, 3 * channels, 1, 1}, rng)),
        branchf_b_(bank.add_zeros(prefix + ".branchf.b", {channels})),
        branchb_w_(bank.add_conv(prefix + ".branchb.w",
                                 {channels, 3 * channels, 1, 1}, rng)),
        branchb_b_(bank.add_zeros(prefix + ".branchb.b", {channels})),
        fuse_w_(bank.add_conv(prefix + ".fuse.w", {channels, 2 * channels, 1,
                                                   1},
                              rng)),
        fuse_b_(bank.add_zeros(prefix + ".fuse.b", {channels})) {}

  // Warp `neighbor` toward the target by `flow`, then refine with deformable
  // taps. With zero flow and the (zero-initialized) offset head untouched,
  // this is exactly the alignment convolution with clamped borders applied
  // to the unmoved neighbor.
  Tensor align(const Tensor& target, const Tensor& neighbor,
               const Tensor& flow) const {
    int N = target.dim(0), C = channels_, h = target.dim(2), w = target.dim(3);
    Tensor plain = warp(neighbor, flow);
    Tensor evidence = concat({target, plain, flow}, 1);
    Tensor hid = gelu(conv2d(evidence, off1_w_, off1_b_, 1, 1));
    Tensor raw = conv2d(hid, off2_w_, off2_b_, 1, 1);  // [N, 3*k*k, h, w]

    int KK = k_ * k_, r = k_ / 2;
    Tensor acc;
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        int j = ky * k_ + kx;
        Tensor off = slice(raw, {0, 2 * j, 0, 0}, {N, 2, h, w});
        std::vector<real> shift_v((size_t)N * 2 * h * w);
        for (int n = 0; n < N; ++n) {
          std::fill_n(shift_v.begin() + (size_t)n * 2 * h * w, (size_t)h * w,
                      (real)(kx - r));
          std::fill_n(shift_v.begin() + ((size_t)n * 2 + 1) * h * w,
                      (size_t)h * w, (real)(ky - r));
        }
        Tensor shift = Tensor::from_data({N, 2, h, w}, std::move(shift_v));
        Tensor sampled = warp(neighbor, flow + off + shift);
        Tensor mod1 = mul_scalar(
            sigmoid(slice(raw, {0, 2 * KK + j, 0, 0}, {N, 1, h, w})), 2.0);
        Tensor mod = concat(std::vector<Tensor>((size_t)C, mod1), 1);
        Tensor tap_w = slice(align_w_, {0, 0, ky, kx}, {C, C, 1, 1});
        // The alignment bias rides along with the first tap.
        Tensor term = j == 0 ? conv2d(sampled * mod, tap_w, align_b_)
                             : conv2d(sampled * mod, tap_w);
        acc = acc.defined() ? acc + term : term;
      }
    return acc;
  }

  // feats: [Tl, C, fh, fw]; flow_fwd/flow_bwd: [Tl-1, 2, fh, fw] one-step
  // completed flows at feature resolution. Returns propagated features of
  // the same shape.
  Tensor forward(const Tensor& feats, const Tensor& flow_fwd,
                 const Tensor& flow_bwd) const {
    int T = feats.dim(0), C = feats.dim(1), h = feats.dim(2), w = feats.dim(3);
    if (C != channels_) tensor_fail("Fgfp: channel mismatch");
    if (T < 1) tensor_fail("Fgfp: empty sequence");
    if (T > 1 && (flow_fwd.dim(0) != T - 1 || flow_bwd.dim(0) != T - 1))
      tensor_fail("Fgfp: flows must have T-1 steps");

    auto frame = [&](const Tensor& t, int i) {
      return slice(t, {i, 0, 0, 0}, {1, t.dim(1), h, w});
    };
    Tensor zero_flow = Tensor::from_data(
        {1, 2, h, w}, std::vector<real>((size_t)2 * h * w, 0.0));

    std::vector<Tensor> out_frames;
    out_frames.reserve(T);
    for (int t = 0; t < T; ++t) {
      Tensor self = frame(feats, t);
      // Forward propagation: evidence flows in from the past (t-1, t-2).
      Tensor a1b, a2b;
      if (t >= 1) {
        Tensor f1 = frame(flow_bwd, t - 1);  // t -> t-1
        a1b = align(self, frame(feats, t - 1), f1);
        if (t >= 2)
          a2b = align(self, frame(feats, t - 2),
                      compose_flow(f1, frame(flow_bwd, t - 2)));
        else
          a2b = a1b;  // no second-order neighbor: reuse first order
      } else {
        a1b = align(self, self, zero_flow);  // no neighbor: self, no motion
        a2b = a1b;
      }
      Tensor fwd_branch =
          conv2d(concat({self, a1b, a2b}, 1), branchf_w_, branchf_b_);

      // Backward propagation: evidence flows in from the future (t+1, t+2).
      Tensor a1f, a2f;
      if (t <= T - 2) {
        Tensor f1 = frame(flow_fwd, t);  // t -> t+1
        a1f = align(self, frame(feats, t + 1), f1);
        if (t <= T - 3)
          a2f = align(self, frame(feats, t + 2),
                      compose_flow(f1, frame(flow_fwd, t + 1)));
        else
          a2f = a1f;
      } else {
        a1f = align(self, self, zero_flow);
        a2f = a1f;
      }
      Tensor bwd_branch =
          conv2d(concat({self, a1f, a2f}, 1), branchb_w_, branchb_b_);

      out_frames.push_back(
          conv2d(concat({fwd_branch, bwd_branch}, 1), fuse_w_, fuse_b_));
    }
    return T == 1 ? out_frames[0] : concat(out_frames, 0);
  }

 private:
  int channels_, k_;
  Tensor off1_w_, off1_b_;
  Tensor off2_w_, off2_b_;
  Tensor align_w_, align_b_;
  Tensor branchf_w_, branchf_b_;
  Tensor branchb_w_, branchb_b_;
  Tensor fuse_w_, fuse_b_;
};

}  // namespace vinpaint
