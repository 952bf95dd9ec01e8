#pragma once

#include <vector>

#include "vinpaint/data/laplacian_fill.hpp"
#include "vinpaint/data/masks.hpp"
#include "vinpaint/data/synthetic.hpp"
#include "vinpaint/pipeline/sampler.hpp"
#include "vinpaint/transformer/model.hpp"

namespace vinpaint {

// One frame-synthesis training unit cut from a procedural clip.
struct FgtSample {
  FgtInput input;       // clean frames (the model masks them itself), hole
                        // masks and exact one-step flows between the locals
  Tensor target_local;  // [Tl,3,H,W] clean local frames, the training target
  int center = 0;       // target frame index within the clip
};

struct SyntheticFgtConfig {
  int clips = 60;
  int frames = 20;
  int height = 64, width = 112;
  int local_radius = 2;
  int global_interval = 5;
  int sprites = 5;
  int sprite_speed_max = 3;
  uint64_t seed = 5000;

  void validate() const {
    if (clips < 1) tensor_fail("SyntheticFgtConfig: need at least one clip");
    if (frames < 2 * local_radius + 1)
      tensor_fail("SyntheticFgtConfig: clip shorter than the local window");
    if (height % 4 != 0 || width % 4 != 0)
      tensor_fail("SyntheticFgtConfig: extents must be divisible by 4");
  }
};

// Fills the corrupted region of every frame channel by channel with the
// harmonic (Laplace) interpolant of its surroundings. Serves as the
// no-learning reference the trained model has to beat, and as the seed
// frames for inference.
inline Tensor laplacian_fill_frames(const Tensor& frames,
                                    const Tensor& masks) {
  if (frames.ndim() != 4 || masks.ndim() != 4 || masks.dim(1) != 1 ||
      frames.dim(0) != masks.dim(0) || frames.dim(2) != masks.dim(2) ||
      frames.dim(3) != masks.dim(3))
    tensor_fail("laplacian_fill_frames: expects [T,C,H,W] + [T,1,H,W]");
  int T = frames.dim(0), C = frames.dim(1), H = frames.dim(2),
      W = frames.dim(3);
  int64_t plane = (int64_t)H * W;
  std::vector<real> out = frames.values();
  for (int t = 0; t < T; ++t) {
    std::vector<real> hole(masks.values().begin() + t * plane,
                           masks.values().begin() + (t + 1) * plane);
    for (int c = 0; c < C; ++c) {
      std::vector<real> ch(out.begin() + ((int64_t)t * C + c) * plane,
                           out.begin() + ((int64_t)t * C + c + 1) * plane);
      laplace_fill_plane(ch, hole, H, W);
      std::copy(ch.begin(), ch.end(),
                out.begin() + ((int64_t)t * C + c) * plane);
    }
  }
  return Tensor::from_data(frames.shape(), std::move(out));
}

// Streams frame-synthesis samples from procedurally generated scenes. Clips
// are identified by seed and rebuilt on demand, mirroring the flow-completion
// source: the stream is a pure function of the seeds.
class SyntheticFgtSource {
 public:
  explicit SyntheticFgtSource(const SyntheticFgtConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
  }

  const SyntheticFgtConfig& config() const { return cfg_; }

  int target_lo() const { return 0; }
  int target_hi() const { return cfg_.frames - 1; }

  FgtSample sample(Rng& rng) const {
    uint64_t clip = cfg_.seed + (uint64_t)rng.uniform_int(0, cfg_.clips - 1);
    int t = rng.uniform_int(target_lo(), target_hi());
    return materialize(clip, t);
  }

  // Deterministic held-out set on clip seeds disjoint from training.
  std::vector<FgtSample> fixed_eval(int count, uint64_t salt = 0) const {
    std::vector<FgtSample> out;
    out.reserve(count);
    int span = target_hi() - target_lo() + 1;
    for (int k = 0; k < count; ++k) {
      uint64_t clip = cfg_.seed + (uint64_t)cfg_.clips + 7001 + salt + k;
      int t = target_lo() + (k * 5 + 3) % span;
      out.push_back(materialize(clip, t));
    }
    return out;
  }

  FgtSample materialize(uint64_t clip_seed, int t) const {
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
    WindowSample win = sliding_window_sampler(
        cfg_.frames, t, cfg_.local_radius, cfg_.global_interval);

    FgtSample out;
    out.center = t;
    out.input.local_frames = stack_frames(scene, win.locals);
    out.input.local_masks = stack_masks(masks, win.locals);
    if (!win.globals.empty()) {
      out.input.global_frames = stack_frames(scene, win.globals);
      out.input.global_masks = stack_masks(masks, win.globals);
    }
    int Tl = (int)win.locals.size();
    if (Tl > 1) {
      out.input.flow_fwd = stack_flows(scene.fwd, win.locals, Tl - 1);
      out.input.flow_bwd = stack_flows(scene.bwd, win.locals, Tl - 1);
    }
    out.target_local = out.input.local_frames;
    return out;
  }

 private:
  Tensor stack_frames(const SyntheticScene& scene,
                      const std::vector<int>& ids) const {
    int H = cfg_.height, W = cfg_.width;
    int64_t plane = (int64_t)H * W;
    std::vector<real> v((size_t)ids.size() * 3 * plane);
    for (size_t j = 0; j < ids.size(); ++j)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            v[((size_t)j * 3 + c) * plane + (int64_t)y * W + x] =
                scene.frames.at(ids[j], c, y, x);
    return Tensor::from_data({(int)ids.size(), 3, H, W}, std::move(v));
  }

  Tensor stack_masks(const MaskClip& masks, const std::vector<int>& ids) const {
    int64_t plane = (int64_t)cfg_.height * cfg_.width;
    std::vector<real> v((size_t)ids.size() * plane);
    for (size_t j = 0; j < ids.size(); ++j) {
      const std::vector<real>& m = masks.frame_vec(ids[j]);
      std::copy(m.begin(), m.end(), v.begin() + (int64_t)j * plane);
    }
    return Tensor::from_data({(int)ids.size(), 1, cfg_.height, cfg_.width},
                             std::move(v));
  }

  // One-step flows between consecutive local frames; fields[s] maps frame s
  // to s+1 (forward stack) or s+1 back to s (backward stack).
  Tensor stack_flows(const std::vector<FlowField>& fields,
                     const std::vector<int>& locals, int count) const {
    int H = cfg_.height, W = cfg_.width;
    int64_t plane = (int64_t)H * W;
    std::vector<real> v((size_t)count * 2 * plane);
    for (int j = 0; j < count; ++j) {
      const FlowField& f = fields[locals[j]];
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          v[((size_t)j * 2 + 0) * plane + (int64_t)y * W + x] = f.u(y, x);
          v[((size_t)j * 2 + 1) * plane + (int64_t)y * W + x] = f.v(y, x);
        }
    }
    return Tensor::from_data({count, 2, H, W}, std::move(v));
  }

  SyntheticFgtConfig cfg_;
};

}  // namespace vinpaint
