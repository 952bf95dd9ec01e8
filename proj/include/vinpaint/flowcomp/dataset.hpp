#pragma once

#include <functional>
#include <vector>

#include "vinpaint/data/laplacian_fill.hpp"
#include "vinpaint/data/masks.hpp"
#include "vinpaint/data/occlusion.hpp"
#include "vinpaint/data/synthetic.hpp"
#include "vinpaint/flowcomp/losses.hpp"

namespace vinpaint {

// One training example for flow completion. All tensors are constants from
// the autodiff point of view.
struct LafcSample {
  Tensor input;          // [1,3,T,H,W]: hole-filled (u,v) plus the hole mask
  Tensor gt_flow;        // [1,2,H,W] target flow ground truth
  Tensor mask;           // [1,1,H,W] hole of the target flow
  Tensor frame_a;        // [1,3,H,W] flow maps frame_a -> frame_b
  Tensor frame_b;        // [1,3,H,W]
  Tensor occ;            // [1,1,H,W] round-trip failures, excluded from warp
  Tensor edge_target;    // [1,1,H,W] boundary map of gt_flow
  Tensor filled_target;  // [1,2,H,W] hole-filled target flow (baseline)
};

struct SyntheticLafcConfig {
  int clips = 200;
  int frames = 10;
  int height = 64, width = 112;
  int sprites = 5;
  int sprite_speed_max = 3;
  uint64_t seed = 1000;
  int n = 1;
  int interval = 3;

  int target_lo() const { return n * interval; }
  int target_hi() const { return frames - 2 - n * interval; }

  void validate() const {
    if (target_hi() < target_lo())
      tensor_fail("SyntheticLafcConfig: clip too short for the flow sequence");
    if (clips < 1) tensor_fail("SyntheticLafcConfig: need at least one clip");
  }
};

// Streams flow-completion samples from procedurally generated scenes. Clips
// are identified by seed and rebuilt on demand, so the source holds no frame
// data between samples and the stream is a pure function of the seeds.
class SyntheticLafcSource {
 public:
  explicit SyntheticLafcSource(const SyntheticLafcConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
  }

  const SyntheticLafcConfig& config() const { return cfg_; }

  LafcSample sample(Rng& rng) const {
    uint64_t clip = cfg_.seed + (uint64_t)rng.uniform_int(0, cfg_.clips - 1);
    bool forward_dir = rng.uniform() < 0.5;
    int t = rng.uniform_int(cfg_.target_lo(), cfg_.target_hi());
    return materialize(clip, forward_dir, t);
  }

  // Deterministic held-out set drawn from clip seeds disjoint from training.
  // t_lo/t_hi restrict the target-frame range so sources with different n can
  // be scored on identical (clip, direction, frame) triplets; defaults use
  // this source's own range.
  std::vector<LafcSample> fixed_eval(int count, uint64_t salt = 0,
                                     int t_lo = -1, int t_hi = -1) const {
    if (t_lo < 0) t_lo = cfg_.target_lo();
    if (t_hi < 0) t_hi = cfg_.target_hi();
    if (t_lo < cfg_.target_lo() || t_hi > cfg_.target_hi() || t_hi < t_lo)
      tensor_fail("fixed_eval: target range outside the sampleable span");
    std::vector<LafcSample> out;
    out.reserve(count);
    int span = t_hi - t_lo + 1;
    for (int k = 0; k < count; ++k) {
      uint64_t clip = cfg_.seed + (uint64_t)cfg_.clips + 9001 + salt + k;
      bool forward_dir = k % 2 == 0;
      int t = t_lo + k % span;
      out.push_back(materialize(clip, forward_dir, t));
    }
    return out;
  }

  LafcSample materialize(uint64_t clip_seed, bool forward_dir, int t) const {
    SceneSpec spec;
    spec.frames = cfg_.frames;
    spec.height = cfg_.height;
    spec.width = cfg_.width;
    spec.sprites = cfg_.sprites;
    spec.sprite_speed_max = cfg_.sprite_speed_max;
    spec.seed = clip_seed;
    SyntheticScene scene = gen_synthetic_scene(spec);
    MaskClip masks = gen_square_masks(cfg_.frames, cfg_.height, cfg_.width,
                                      clip_seed ^ 0x9e3779b97f4a7c15ull,
                                      MaskMotion::Drift);

    auto flow_at = [&](int s) -> const FlowField& {
      return forward_dir ? scene.fwd[s] : scene.bwd[s];
    };
    // a flow is corrupted by the hole of its source frame
    auto mask_frame = [&](int s) { return forward_dir ? s : s + 1; };

    LafcSample out;
    int T = 2 * cfg_.n + 1, H = cfg_.height, W = cfg_.width;
    std::vector<real> input((size_t)3 * T * H * W);
    for (int j = 0; j < T; ++j) {
      int s = t + (j - cfg_.n) * cfg_.interval;
      const std::vector<real>& m = masks.frame_vec(mask_frame(s));
      FlowField filled = laplacian_fill(flow_at(s), m);
      for (int i = 0; i < H * W; ++i) {
        input[(size_t)(0 * T + j) * H * W + i] = filled.uv[(size_t)i * 2];
        input[(size_t)(1 * T + j) * H * W + i] = filled.uv[(size_t)i * 2 + 1];
        input[(size_t)(2 * T + j) * H * W + i] = m[i];
      }
      if (s == t) {
        out.filled_target = flow_to_tensor(filled);
        out.mask = Tensor::from_data({1, 1, H, W}, m);
      }
    }
    out.input = Tensor::from_data({1, 3, T, H, W}, std::move(input));
    out.gt_flow = flow_to_tensor(flow_at(t));
    out.edge_target = flow_edge_target(out.gt_flow);
    out.frame_a = scene.frames.frame_tensor(forward_dir ? t : t + 1);
    out.frame_b = scene.frames.frame_tensor(forward_dir ? t + 1 : t);
    std::vector<real> occ = forward_dir
                                ? fb_consistency(scene.fwd[t], scene.bwd[t])
                                : fb_consistency(scene.bwd[t], scene.fwd[t]);
    out.occ = Tensor::from_data({1, 1, H, W}, std::move(occ));
    return out;
  }

 private:
  SyntheticLafcConfig cfg_;
};

}  // namespace vinpaint
