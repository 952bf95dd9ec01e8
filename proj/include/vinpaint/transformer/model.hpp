#pragma once

#include <optional>
#include <vector>

#include "vinpaint/transformer/f3n.hpp"
#include "vinpaint/transformer/fgfi.hpp"
#include "vinpaint/transformer/fgfp.hpp"
#include "vinpaint/transformer/mhsa.hpp"

namespace vinpaint {

// One inpainting work unit: a run of consecutive local frames with their
// completed one-step flows, plus distant frames for long-range context.
// Masks are 1 on corrupted pixels.
struct FgtInput {
  Tensor local_frames;   // [Tl, 3, H, W]
  Tensor global_frames;  // [Tg, 3, H, W]; Tg may be 0 (undefined tensor)
  Tensor local_masks;    // [Tl, 1, H, W]
  Tensor global_masks;   // [Tg, 1, H, W]
  Tensor flow_fwd;       // [Tl-1, 2, H, W], displacement t -> t+1
  Tensor flow_bwd;       // [Tl-1, 2, H, W], displacement t+1 -> t
};

// Post-softmax attention maps captured from one forward pass, one probe per
// executed attention site in block order. Lets tests inspect the window
// layout the constructed graph actually used.
struct FgtTrace {
  std::vector<AttentionProbe> lw, td, dp;
};

// Depth-wise conv positional signal added onto the token map; zero weights
// and bias leave the tokens untouched, and the construction carries no
// learned size-bound table, so any grid works.
inline Tensor positional_embedding(const Tensor& tokens, const Tensor& w,
                                   const Tensor& b) {
  int D = tokens.dim(3);
  Tensor grid = permute(tokens, {0, 3, 1, 2});
  Tensor c = conv2d(grid, w, b, 1, w.dim(2) / 2, 1, D);
  return tokens + permute(c, {0, 2, 3, 1});
}

// Keep valid pixels from the observed frame, fill corrupted ones from the
// prediction: out = M*pred + (1-M)*observed, with the single-channel mask
// broadcast over the color channels. The mask must be untracked.
inline Tensor composite_frames(const Tensor& pred, const Tensor& observed,
                               const Tensor& mask) {
  if (pred.shape() != observed.shape())
    tensor_fail("composite_frames: frame shapes differ");
  if (mask.dim(1) != 1) tensor_fail("composite_frames: mask must be [N,1,H,W]");
  if (mask.tracked()) tensor_fail("composite_frames: mask must be untracked");
  int C = pred.dim(1);
  Tensor mc = concat(std::vector<Tensor>((size_t)C, mask), 1);
  Tensor inv = add_scalar(neg(mc), 1.0);
  inv.set_tracked(false);
  mc.set_tracked(false);
  return pred * mc + observed * inv;
}

class FgtModel {
 public:
  FgtModel(const FgtConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    int C = cfg_.feature_channels, D = cfg_.token_channels;
    int P = cfg_.patch_dim();

    enc1_w_ = bank_.add_conv("enc1.w", {C, 4, 3, 3}, rng);
    enc1_b_ = bank_.add_zeros("enc1.b", {C});
    enc2_w_ = bank_.add_conv("enc2.w", {2 * C, C, 3, 3}, rng);
    enc2_b_ = bank_.add_zeros("enc2.b", {2 * C});
    enc3_w_ = bank_.add_conv("enc3.w", {2 * C, 2 * C, 3, 3}, rng);
    enc3_b_ = bank_.add_zeros("enc3.b", {2 * C});
    enc4_w_ = bank_.add_conv("enc4.w", {C, 2 * C, 3, 3}, rng);
    enc4_b_ = bank_.add_zeros("enc4.b", {C});

    if (cfg_.fgfp_encoder)
      enc_fgfp_.emplace(bank_, "encprop", C, cfg_.deform_kernel, rng);

    embed_w_ = bank_.add_linear("embed.w", P, D, rng);
    embed_b_ = bank_.add_zeros("embed.b", {D});
    pos_w_ = bank_.add_conv("pos.w", {D, 1, 3, 3}, rng);
    pos_b_ = bank_.add_zeros("pos.b", {D});

    if (cfg_.fgfi_blocks > 0) {
      // Bidirectional flow patches (4 channels) feed the flow-token embed.
      int FP = 4 * cfg_.token_kernel * cfg_.token_kernel;
      flow_embed_w_ = bank_.add_linear("flowembed.w", FP, D, rng);
      flow_embed_b_ = bank_.add_zeros("flowembed.b", {D});
    }

    int spatial_seen = 0, temporal_seen = 0;
    for (int i = 0; i < cfg_.blocks; ++i) {
      Block b;
      std::string pre = "blk" + std::to_string(i);
      if (i % 2 == 0) {
        b.kind = 'T';
        b.lw.emplace(bank_, pre + ".lw", D, cfg_.heads, cfg_.lw_zones, rng);
        if (temporal_seen < cfg_.td_blocks)
          b.td.emplace(bank_, pre + ".td", D, P, cfg_.heads, rng);
        ++temporal_seen;
      } else {
        b.kind = 'S';
        if (spatial_seen < cfg_.fgfi_blocks)
          b.fgfi.emplace(bank_, pre + ".fgfi", D, rng);
        b.dp.emplace(bank_, pre + ".dp", D, cfg_.heads, cfg_.spatial_window,
                     cfg_.global_kernel, cfg_.global_stride, rng);
        ++spatial_seen;
      }
      if (i < cfg_.fgfp_blocks)
        b.fgfp.emplace(bank_, pre + ".prop", C, cfg_.deform_kernel, rng);
      b.ffn.emplace(bank_, pre + ".ffn", D, P, rng);
      blocks_.push_back(std::move(b));
    }

    unembed_w_ = bank_.add_linear("unembed.w", D, P, rng);
    unembed_b_ = bank_.add_zeros("unembed.b", {P});
    dec1_w_ = bank_.add_conv("dec1.w", {C, C, 3, 3}, rng);
    dec1_b_ = bank_.add_zeros("dec1.b", {C});
    dec2_w_ = bank_.add_conv("dec2.w", {C, C, 3, 3}, rng);
    dec2_b_ = bank_.add_zeros("dec2.b", {C});
    dec3_w_ = bank_.add_conv("dec3.w", {3, C, 3, 3}, rng);
    dec3_b_ = bank_.add_zeros("dec3.b", {3});
  }

  // Inpaint the local frames. Output is [Tl, 3, H, W] in [0, 1].
  Tensor forward(const FgtInput& in, FgtTrace* trace = nullptr) const {
    validate_input(in);
    int Tl = in.local_frames.dim(0);
    int Tg = in.global_frames.defined() ? in.global_frames.dim(0) : 0;
    int T = Tl + Tg;
    int H = in.local_frames.dim(2), W = in.local_frames.dim(3);
    int fh = H / 4, fw = W / 4;

    Tensor frames = Tg == 0 ? in.local_frames
                            : concat({in.local_frames, in.global_frames}, 0);
    Tensor masks = Tg == 0 ? in.local_masks
                           : concat({in.local_masks, in.global_masks}, 0);
    Tensor mc = concat(std::vector<Tensor>(3, masks), 1);
    Tensor inv = add_scalar(neg(mc), 1.0);
    inv.set_tracked(false);
    Tensor enc_in = concat({frames * inv, masks}, 1);

    Tensor f = leaky_relu(conv2d(enc_in, enc1_w_, enc1_b_, 1, 1));
    f = leaky_relu(conv2d(f, enc2_w_, enc2_b_, 2, 1));
    f = leaky_relu(conv2d(f, enc3_w_, enc3_b_, 2, 1));
    f = conv2d(f, enc4_w_, enc4_b_, 1, 1);

    // One-step flows at feature resolution drive every flow-guided module.
    Tensor ff, fb;
    if (Tl > 1) {
      ff = resize_flow(in.flow_fwd, fh, fw);
      fb = resize_flow(in.flow_bwd, fh, fw);
    }

    int C = cfg_.feature_channels;
    if (enc_fgfp_) {
      Tensor locals = slice(f, {0, 0, 0, 0}, {Tl, C, fh, fw});
      Tensor prop = enc_fgfp_->forward(locals, ff, fb);
      f = Tl == T
              ? prop
              : concat({prop, slice(f, {Tl, 0, 0, 0}, {Tg, C, fh, fw})}, 0);
    }

    TokenMap tm = soft_split(f, cfg_.token_kernel, cfg_.token_stride,
                             cfg_.token_pad);
    int gh = tm.geom.grid_h, gw = tm.geom.grid_w;
    int D = cfg_.token_channels;
    Tensor x = linear(tm.tokens, embed_w_, embed_b_);

    Tensor flow_tokens;  // lazily built for the gating blocks
    int td_h = td_window_extent(lw_zone_extent(gh, cfg_.lw_zones));
    int td_w = td_window_extent(lw_zone_extent(gw, cfg_.lw_zones));

    auto probe_slot = [&](std::vector<AttentionProbe>* v) -> AttentionProbe* {
      if (!trace || !v) return nullptr;
      v->emplace_back();
      return &v->back();
    };
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const Block& b = blocks_[i];
      if (b.kind == 'T') {
        x = x + b.lw->forward(x, probe_slot(trace ? &trace->lw : nullptr));
        if (b.td && Tl > 1) {
          Tensor xl = slice(x, {0, 0, 0, 0}, {Tl, gh, gw, D});
          TokenMap tml;
          tml.geom = tm.geom;
          tml.tokens = xl;
          Tensor delta =
              b.td->forward(tml, ff, fb, td_h, td_w,
                            probe_slot(trace ? &trace->td : nullptr));
          Tensor xl2 = xl + delta;
          x = Tl == T
                  ? xl2
                  : concat({xl2, slice(x, {Tl, 0, 0, 0}, {Tg, gh, gw, D})}, 0);
        }
      } else {
        if (b.fgfi) {
          if (!flow_tokens.defined())
            flow_tokens = encode_flow_tokens(in, Tl, fh, fw);
          Tensor xl = slice(x, {0, 0, 0, 0}, {Tl, gh, gw, D});
          Tensor xl2 = b.fgfi->forward(xl, flow_tokens);
          x = Tl == T
                  ? xl2
                  : concat({xl2, slice(x, {Tl, 0, 0, 0}, {Tg, gh, gw, D})}, 0);
        }
        x = x + b.dp->forward(x, probe_slot(trace ? &trace->dp : nullptr));
      }
      TokenMap cur;
      cur.geom = tm.geom;
      cur.tokens = x;
      const Fgfp* prop = b.fgfp ? &*b.fgfp : nullptr;
      x = x + b.ffn->forward(cur, prop, prop ? Tl : 0, ff, fb);
      if (i == 0) x = positional_embedding(x, pos_w_, pos_b_);
    }

    Tensor xl = T == Tl ? x : slice(x, {0, 0, 0, 0}, {Tl, gh, gw, D});
    TokenMap out_tm;
    out_tm.geom = tm.geom;
    out_tm.tokens = linear(xl, unembed_w_, unembed_b_);
    Tensor df = soft_composition(out_tm);
    Tensor d = leaky_relu(conv2d(upsample_nearest2x(df), dec1_w_, dec1_b_, 1,
                                 1));
    d = leaky_relu(conv2d(upsample_nearest2x(d), dec2_w_, dec2_b_, 1, 1));
    return sigmoid(conv2d(d, dec3_w_, dec3_b_, 1, 1));
  }

  ParamBank& params() { return bank_; }
  const ParamBank& params() const { return bank_; }
  const FgtConfig& config() const { return cfg_; }

  // Structure report assembled by walking the constructed blocks.
  FgtDescription describe() const {
    FgtDescription d;
    d.blocks = (int)blocks_.size();
    d.fgfp_at_encoder = enc_fgfp_.has_value();
    for (size_t i = 0; i < blocks_.size(); ++i) {
      const Block& b = blocks_[i];
      d.block_kinds += b.kind;
      if (b.kind == 'T') ++d.temporal_blocks;
      if (b.kind == 'S') ++d.spatial_blocks;
      if (b.td) d.td_block_ids.push_back((int)i);
      if (b.fgfi) d.fgfi_block_ids.push_back((int)i);
      if (b.fgfp) d.fgfp_block_ids.push_back((int)i);
    }
    d.spatial_window = cfg_.spatial_window;
    d.global_kernel = cfg_.global_kernel;
    d.global_stride = cfg_.global_stride;
    d.lw_zones = cfg_.lw_zones;
    d.token_kernel = cfg_.token_kernel;
    d.token_stride = cfg_.token_stride;
    d.token_pad = cfg_.token_pad;
    d.heads = cfg_.heads;
    d.token_channels = cfg_.token_channels;
    return d;
  }

 private:
  struct Block {
    char kind = 'T';
    std::optional<LwMhsa> lw;
    std::optional<TdMhsa> td;
    std::optional<DpMhsa> dp;
    std::optional<Fgfi> fgfi;
    std::optional<F3n> ffn;
    std::optional<Fgfp> fgfp;
  };

  void validate_input(const FgtInput& in) const {
    if (in.local_frames.ndim() != 4 || in.local_frames.dim(1) != 3)
      tensor_fail("FgtModel: local frames must be [Tl,3,H,W]");
    int Tl = in.local_frames.dim(0);
    int H = in.local_frames.dim(2), W = in.local_frames.dim(3);
    if (Tl < 1) tensor_fail("FgtModel: no local frames");
    if (H % 4 != 0 || W % 4 != 0)
      tensor_fail("FgtModel: frame extents must be divisible by 4");
    if (in.local_masks.ndim() != 4 || in.local_masks.dim(0) != Tl ||
        in.local_masks.dim(1) != 1 || in.local_masks.dim(2) != H ||
        in.local_masks.dim(3) != W)
      tensor_fail("FgtModel: local masks must be [Tl,1,H,W]");
    if (Tl > 1) {
      auto chk = [&](const Tensor& fl, const char* name) {
        if (!fl.defined() || fl.ndim() != 4 || fl.dim(0) != Tl - 1 ||
            fl.dim(1) != 2 || fl.dim(2) != H || fl.dim(3) != W)
          tensor_fail(std::string("FgtModel: ") + name +
                      " must be [Tl-1,2,H,W]");
      };
      chk(in.flow_fwd, "flow_fwd");
      chk(in.flow_bwd, "flow_bwd");
    }
    if (in.global_frames.defined()) {
      int Tg = in.global_frames.dim(0);
      if (in.global_frames.ndim() != 4 || in.global_frames.dim(1) != 3 ||
          in.global_frames.dim(2) != H || in.global_frames.dim(3) != W)
        tensor_fail("FgtModel: global frames must be [Tg,3,H,W]");
      if (!in.global_masks.defined() || in.global_masks.dim(0) != Tg)
        tensor_fail("FgtModel: global masks missing or mismatched");
    }
  }

  // Per-local-frame bidirectional flow patch tokens on the token grid;
  // boundary frames zero-fill the missing direction.
  Tensor encode_flow_tokens(const FgtInput& in, int Tl, int fh,
                            int fw) const {
    Tensor fwd, bwd;  // [Tl, 2, fh, fw] each
    if (Tl > 1) {
      Tensor ff = resize_flow(in.flow_fwd, fh, fw);
      Tensor fb = resize_flow(in.flow_bwd, fh, fw);
      fwd = pad_zero(ff, {{0, 1}, {0, 0}, {0, 0}, {0, 0}});
      bwd = pad_zero(fb, {{1, 0}, {0, 0}, {0, 0}, {0, 0}});
    } else {
      fwd = Tensor::from_data({1, 2, fh, fw},
                              std::vector<real>((size_t)2 * fh * fw, 0.0));
      bwd = fwd;
    }
    TokenMap ft = soft_split(concat({fwd, bwd}, 1), cfg_.token_kernel,
                             cfg_.token_stride, cfg_.token_pad);
    return linear(ft.tokens, flow_embed_w_, flow_embed_b_);
  }

  FgtConfig cfg_;
  ParamBank bank_;
  Tensor enc1_w_, enc1_b_, enc2_w_, enc2_b_, enc3_w_, enc3_b_, enc4_w_,
      enc4_b_;
  std::optional<Fgfp> enc_fgfp_;
  Tensor embed_w_, embed_b_, pos_w_, pos_b_;
  Tensor flow_embed_w_, flow_embed_b_;
  std::vector<Block> blocks_;
  Tensor unembed_w_, unembed_b_;
  Tensor dec1_w_, dec1_b_, dec2_w_, dec2_b_, dec3_w_, dec3_b_;
};

}  // namespace vinpaint
