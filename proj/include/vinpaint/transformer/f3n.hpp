#pragma once

#include "vinpaint/core/init.hpp"
#include "vinpaint/transformer/fgfp.hpp"
#include "vinpaint/transformer/tokens.hpp"

namespace vinpaint {

// Feed-forward that routes tokens through feature space: MLP down to patch
// width, compose to features, (optionally propagate along the completed
// flows,) split back to patches, MLP up to token width. Pre-normed; the
// caller adds the residual.
class F3n {
 public:
  F3n(ParamBank& bank, const std::string& prefix, int channels, int patch_dim,
      Rng& rng)
      : ln_g_(bank.add_full(prefix + ".ln.g", {channels}, 1.0)),
        ln_b_(bank.add_zeros(prefix + ".ln.b", {channels})),
        lin1_w_(bank.add_linear(prefix + ".in.w", channels, patch_dim, rng)),
        lin1_b_(bank.add_zeros(prefix + ".in.b", {patch_dim})),
        lin2_w_(bank.add_linear(prefix + ".out.w", patch_dim, channels, rng)),
        lin2_b_(bank.add_zeros(prefix + ".out.b", {channels})) {}

  // fgfp == nullptr gives the plain layer. With a propagation module, the
  // first `local_frames` frames run through it between composition and the
  // re-split; distant frames pass straight through (they have no flows).
  Tensor forward(const TokenMap& tm, const Fgfp* fgfp = nullptr,
                 int local_frames = 0, const Tensor& flow_fwd = Tensor(),
                 const Tensor& flow_bwd = Tensor()) const {
    const TokenGeometry& g = tm.geom;
    Tensor n = layer_norm(tm.tokens, ln_g_, ln_b_);
    Tensor h = gelu(linear(n, lin1_w_, lin1_b_));
    Tensor feats = soft_composition(with_tokens(tm, h));
    if (fgfp) {
      int T = feats.dim(0), C = feats.dim(1);
      if (local_frames < 1 || local_frames > T)
        tensor_fail("F3n: bad local frame count");
      Tensor locals =
          slice(feats, {0, 0, 0, 0}, {local_frames, C, g.feat_h, g.feat_w});
      Tensor prop = fgfp->forward(locals, flow_fwd, flow_bwd);
      if (local_frames < T) {
        Tensor globals = slice(feats, {local_frames, 0, 0, 0},
                               {T - local_frames, C, g.feat_h, g.feat_w});
        feats = concat({prop, globals}, 0);
      } else {
        feats = prop;
      }
    }
    Tensor tok = soft_split(feats, g.kernel, g.stride, g.pad).tokens;
    return linear(tok, lin2_w_, lin2_b_);
  }

 private:
  Tensor ln_g_, ln_b_;
  Tensor lin1_w_, lin1_b_;
  Tensor lin2_w_, lin2_b_;
};

}  // namespace vinpaint
