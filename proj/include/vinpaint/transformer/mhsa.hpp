#pragma once

#include "vinpaint/core/attention.hpp"
#include "vinpaint/core/conv.hpp"
#include "vinpaint/core/init.hpp"
#include "vinpaint/core/warp.hpp"
#include "vinpaint/transformer/config.hpp"
#include "vinpaint/transformer/tokens.hpp"
#include "vinpaint/transformer/windows.hpp"

namespace vinpaint {

// [B, L, D] -> [B*heads, L, D/heads]
inline Tensor split_heads(const Tensor& x, int heads) {
  int B = x.dim(0), L = x.dim(1), D = x.dim(2);
  if (D % heads != 0) tensor_fail("split_heads: channels not divisible");
  Tensor r = reshape(x, {B, L, heads, D / heads});
  return reshape(permute(r, {0, 2, 1, 3}), {B * heads, L, D / heads});
}

// Inverse of split_heads.
inline Tensor merge_heads(const Tensor& x, int heads) {
  int Bh = x.dim(0), L = x.dim(1), dh = x.dim(2);
  if (Bh % heads != 0) tensor_fail("merge_heads: batch not divisible");
  Tensor r = reshape(x, {Bh / heads, heads, L, dh});
  return reshape(permute(r, {0, 2, 1, 3}), {Bh / heads, L, heads * dh});
}

// Repeat each batch's key-validity run `heads` times, matching the batch
// order split_heads produces.
inline std::vector<unsigned char> repeat_for_heads(
    const std::vector<unsigned char>& v, int batches, int heads) {
  size_t lk = v.size() / batches;
  std::vector<unsigned char> out((size_t)batches * heads * lk);
  for (int b = 0; b < batches; ++b)
    for (int h = 0; h < heads; ++h)
      std::copy(v.begin() + b * lk, v.begin() + (b + 1) * lk,
                out.begin() + ((size_t)b * heads + h) * lk);
  return out;
}

namespace detail {

struct LnPair {
  Tensor gamma, beta;
  LnPair() = default;
  LnPair(ParamBank& bank, const std::string& name, int channels)
      : gamma(bank.add_full(name + ".g", {channels}, 1.0)),
        beta(bank.add_zeros(name + ".b", {channels})) {}
  Tensor operator()(const Tensor& x) const {
    return layer_norm(x, gamma, beta);
  }
};

struct LinearPair {
  Tensor w, b;
  LinearPair() = default;
  LinearPair(ParamBank& bank, const std::string& name, int in, int out,
             Rng& rng)
      : w(bank.add_linear(name + ".w", in, out, rng)),
        b(bank.add_zeros(name + ".b", {out})) {}
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

}  // namespace detail

// Cross-frame zone attention: the grid is cut into zones x zones spatial
// regions, and every token attends to all frames' tokens of its own zone.
class LwMhsa {
 public:
  LwMhsa(ParamBank& bank, const std::string& prefix, int channels, int heads,
         int zones, Rng& rng)
      : heads_(heads),
        zones_(zones),
        ln_(bank, prefix + ".ln", channels),
        q_(bank, prefix + ".q", channels, channels, rng),
        k_(bank, prefix + ".k", channels, channels, rng),
        v_(bank, prefix + ".v", channels, channels, rng),
        o_(bank, prefix + ".o", channels, channels, rng) {}

  // x: [T, H, W, D] over all frames; returns the attention update (caller
  // adds the residual).
  Tensor forward(const Tensor& x, AttentionProbe* probe = nullptr) const {
    int T = x.dim(0), H = x.dim(1), W = x.dim(2), D = x.dim(3);
    WindowPlan p = plan_windows(H, W, lw_zone_extent(H, zones_),
                                lw_zone_extent(W, zones_));
    int Z = p.windows(), L = p.window_len();
    Tensor n = ln_(x);
    auto zone_seq = [&](const Tensor& t) {
      // [T,H,W,D] -> windows [T*Z, L, D] -> [Z, T*L, D]
      Tensor w4 = reshape(window_partition(t, p), {T, Z, L, D});
      return reshape(permute(w4, {1, 0, 2, 3}), {Z, T * L, D});
    };
    Tensor q = zone_seq(q_(n)), k = zone_seq(k_(n)), v = zone_seq(v_(n));

    std::vector<unsigned char> slot = window_validity(p);
    std::vector<unsigned char> keys((size_t)Z * T * L);
    for (int z = 0; z < Z; ++z)
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < L; ++i)
          keys[((size_t)z * T + t) * L + i] = slot[(size_t)z * L + i];
    Tensor bias = attention_bias(Z * heads_, T * L,
                                 repeat_for_heads(keys, Z, heads_));

    Tensor att = softmax_attention(split_heads(q, heads_),
                                   split_heads(k, heads_),
                                   split_heads(v, heads_), bias, probe);
    Tensor m = merge_heads(att, heads_);
    Tensor w4 = reshape(m, {Z, T, L, D});
    Tensor wins = reshape(permute(w4, {1, 0, 2, 3}), {T * Z, L, D});
    return o_(window_merge(wins, p, T));
  }

 private:
  int heads_, zones_;
  detail::LnPair ln_;
  detail::LinearPair q_, k_, v_, o_;
};

// Flow-deformed temporal attention over the local frames: both neighbor
// token maps are composed to feature space, warped toward the target frame
// by the completed flows, split back to tokens, and serve as extra keys and
// values inside small windows.
class TdMhsa {
 public:
  TdMhsa(ParamBank& bank, const std::string& prefix, int channels,
         int patch_dim, int heads, Rng& rng)
      : heads_(heads),
        ln_q_(bank, prefix + ".lnq", channels),
        ln_kv_(bank, prefix + ".lnkv", channels),
        lp_in_(bank, prefix + ".pin", channels, patch_dim, rng),
        lp_out_(bank, prefix + ".pout", patch_dim, channels, rng),
        q_(bank, prefix + ".q", channels, channels, rng),
        k_(bank, prefix + ".k", channels, channels, rng),
        v_(bank, prefix + ".v", channels, channels, rng),
        o_(bank, prefix + ".o", channels, channels, rng) {}

  // tm: local-frame tokens [Tl, H, W, D]. flow_fwd [Tl-1, 2, fh, fw] holds
  // the displacement t -> t+1 at feature resolution, flow_bwd the
  // displacement t+1 -> t. Window extents come from the caller.
  Tensor forward(const TokenMap& tm, const Tensor& flow_fwd,
                 const Tensor& flow_bwd, int win_h, int win_w,
                 AttentionProbe* probe = nullptr) const {
    if (tm.tokens.dim(0) > 1) {
      const TokenGeometry& g = tm.geom;
      if (flow_fwd.ndim() != 4 || flow_fwd.dim(0) != tm.tokens.dim(0) - 1 ||
          flow_fwd.dim(2) != g.feat_h || flow_fwd.dim(3) != g.feat_w ||
          flow_bwd.shape() != flow_fwd.shape())
        tensor_fail("TdMhsa: flows must be [T-1, 2, feat_h, feat_w]");
    }
    return run(tm, &flow_fwd, &flow_bwd, win_h, win_w, probe);
  }

  // Ablation path: the neighbor maps take the same feature round trip but
  // are never moved. Zero flows make the warp a bitwise no-op, so forward()
  // with zero flows equals this exactly.
  Tensor forward_unwarped(const TokenMap& tm, int win_h, int win_w,
                          AttentionProbe* probe = nullptr) const {
    return run(tm, nullptr, nullptr, win_h, win_w, probe);
  }

 private:
  Tensor run(const TokenMap& tm, const Tensor* flow_fwd,
             const Tensor* flow_bwd, int win_h, int win_w,
             AttentionProbe* probe) const {
    const Tensor& x = tm.tokens;
    int T = x.dim(0), H = x.dim(1), W = x.dim(2), D = x.dim(3);
    const TokenGeometry& g = tm.geom;

    // Neighbor maps (warped into the target frame's coordinates when flows
    // are given).
    Tensor prev_map, next_map;  // [T, H, W, D]; frame 0 / T-1 slot is zero
    if (T > 1) {
      Tensor feats = soft_composition(with_tokens(tm, lp_in_(x)));
      Tensor prev_src = slice(feats, {0, 0, 0, 0},
                              {T - 1, feats.dim(1), g.feat_h, g.feat_w});
      Tensor next_src = slice(feats, {1, 0, 0, 0},
                              {T - 1, feats.dim(1), g.feat_h, g.feat_w});
      if (flow_bwd) prev_src = warp(prev_src, *flow_bwd);
      if (flow_fwd) next_src = warp(next_src, *flow_fwd);
      Tensor prev_tok =
          lp_out_(soft_split(prev_src, g.kernel, g.stride, g.pad).tokens);
      Tensor next_tok =
          lp_out_(soft_split(next_src, g.kernel, g.stride, g.pad).tokens);
      prev_map = pad_zero(prev_tok, {{1, 0}, {0, 0}, {0, 0}, {0, 0}});
      next_map = pad_zero(next_tok, {{0, 1}, {0, 0}, {0, 0}, {0, 0}});
    } else {
      prev_map = Tensor::from_data({T, H, W, D},
                                   std::vector<real>((size_t)T * H * W * D));
      next_map = prev_map;
    }

    WindowPlan p = plan_windows(H, W, win_h, win_w);
    int Z = p.windows(), L = p.window_len();
    Tensor qw = window_partition(q_(ln_q_(x)), p);
    auto kv_win = [&](const detail::LinearPair& proj) {
      // Key order per window: warped prev, self, warped next.
      return concat({window_partition(proj(ln_kv_(prev_map)), p),
                     window_partition(proj(ln_kv_(x)), p),
                     window_partition(proj(ln_kv_(next_map)), p)},
                    1);
    };
    Tensor kw = kv_win(k_), vw = kv_win(v_);

    std::vector<unsigned char> slot = window_validity(p);
    std::vector<unsigned char> keys((size_t)T * Z * 3 * L);
    for (int t = 0; t < T; ++t)
      for (int z = 0; z < Z; ++z) {
        unsigned char* kk = keys.data() + ((size_t)t * Z + z) * 3 * L;
        for (int i = 0; i < L; ++i) {
          unsigned char ok = slot[(size_t)z * L + i];
          kk[i] = ok && t > 0;          // warped prev
          kk[L + i] = ok;               // self
          kk[2 * L + i] = ok && t < T - 1;  // warped next
        }
      }
    Tensor bias = attention_bias(T * Z * heads_, L,
                                 repeat_for_heads(keys, T * Z, heads_));

    Tensor att = softmax_attention(split_heads(qw, heads_),
                                   split_heads(kw, heads_),
                                   split_heads(vw, heads_), bias, probe);
    return o_(window_merge(merge_heads(att, heads_), p, T));
  }

 private:
  int heads_;
  detail::LnPair ln_q_, ln_kv_;
  detail::LinearPair lp_in_, lp_out_;
  detail::LinearPair q_, k_, v_, o_;
};

// Per-frame window attention where each window's keys are its own tokens
// plus global tokens condensed from the whole grid by a strided depth-wise
// convolution.
class DpMhsa {
 public:
  DpMhsa(ParamBank& bank, const std::string& prefix, int channels, int heads,
         int window, int kernel, int stride, Rng& rng)
      : heads_(heads),
        window_(window),
        kernel_(kernel),
        stride_(stride),
        dc_w_(bank.add_conv(prefix + ".dc.w", {channels, 1, kernel, kernel},
                            rng)),
        dc_b_(bank.add_zeros(prefix + ".dc.b", {channels})),
        ln_q_(bank, prefix + ".lnq", channels),
        ln_kv_(bank, prefix + ".lnkv", channels),
        q_(bank, prefix + ".q", channels, channels, rng),
        k_(bank, prefix + ".k", channels, channels, rng),
        v_(bank, prefix + ".v", channels, channels, rng),
        o_(bank, prefix + ".o", channels, channels, rng) {}

  int global_tokens(int H, int W) const {
    return dp_global_token_count(H, W, stride_);
  }

  Tensor forward(const Tensor& x, AttentionProbe* probe = nullptr) const {
    int T = x.dim(0), H = x.dim(1), W = x.dim(2), D = x.dim(3);
    // Condense the raw token map; odd kernel with half-kernel padding gives
    // ceil(H/stride) x ceil(W/stride) outputs.
    Tensor grid = permute(x, {0, 3, 1, 2});
    Tensor cond = conv2d(grid, dc_w_, dc_b_, stride_, kernel_ / 2, 1, D);
    int G = cond.dim(2) * cond.dim(3);
    Tensor glob = reshape(permute(cond, {0, 2, 3, 1}), {T, G, D});

    WindowPlan p = plan_windows(H, W, window_, window_);
    int Z = p.windows(), L = p.window_len();
    Tensor qw = window_partition(q_(ln_q_(x)), p);
    auto kv = [&](const detail::LinearPair& proj) {
      Tensor local = window_partition(proj(ln_kv_(x)), p);  // [T*Z, L, D]
      Tensor gp = proj(ln_kv_(glob));                       // [T, G, D]
      // Hand every window of frame t the same global sequence.
      Tensor g4 = reshape(gp, {T, 1, G, D});
      std::vector<Tensor> copies((size_t)Z, g4);
      Tensor rep = reshape(concat(copies, 1), {T * Z, G, D});
      return concat({local, rep}, 1);  // keys: own window, then globals
    };
    Tensor kw = kv(k_), vw = kv(v_);

    std::vector<unsigned char> slot = window_validity(p);
    std::vector<unsigned char> keys((size_t)T * Z * (L + G));
    for (int t = 0; t < T; ++t)
      for (int z = 0; z < Z; ++z) {
        unsigned char* kk = keys.data() + ((size_t)t * Z + z) * (L + G);
        for (int i = 0; i < L; ++i) kk[i] = slot[(size_t)z * L + i];
        for (int i = 0; i < G; ++i) kk[L + i] = 1;
      }
    Tensor bias = attention_bias(T * Z * heads_, L,
                                 repeat_for_heads(keys, T * Z, heads_));

    Tensor att = softmax_attention(split_heads(qw, heads_),
                                   split_heads(kw, heads_),
                                   split_heads(vw, heads_), bias, probe);
    return o_(window_merge(merge_heads(att, heads_), p, T));
  }

 private:
  int heads_, window_, kernel_, stride_;
  Tensor dc_w_, dc_b_;
  detail::LnPair ln_q_, ln_kv_;
  detail::LinearPair q_, k_, v_, o_;
};

}  // namespace vinpaint
