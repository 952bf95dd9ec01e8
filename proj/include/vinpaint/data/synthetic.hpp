#pragma once

#include <array>
#include <memory>

#include "vinpaint/core/rng.hpp"
#include "vinpaint/data/flow_field.hpp"
#include "vinpaint/data/image.hpp"
#include "vinpaint/data/masks.hpp"

namespace vinpaint {

// Planar RGB clip: data indexed [t][c][y][x], values in [0,1].
struct VideoClip {
  int frames = 0, height = 0, width = 0, channels = 0;
  std::vector<real> data;

  static VideoClip zeros(int t, int h, int w, int c) {
    VideoClip v;
    v.frames = t;
    v.height = h;
    v.width = w;
    v.channels = c;
    v.data.assign((size_t)t * c * h * w, 0.0);
    return v;
  }

  real& at(int t, int c, int y, int x) {
    return data[(((size_t)t * channels + c) * height + y) * width + x];
  }
  real at(int t, int c, int y, int x) const {
    return data[(((size_t)t * channels + c) * height + y) * width + x];
  }

  Tensor frame_tensor(int t) const {
    int64_t n = (int64_t)channels * height * width;
    std::vector<real> d(data.begin() + (int64_t)t * n,
                        data.begin() + (int64_t)(t + 1) * n);
    return Tensor::from_data({1, channels, height, width}, std::move(d));
  }

  Image frame_image(int t) const {
    Image im = Image::zeros(height, width, channels);
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          im.at(y, x, c) = std::clamp(at(t, c, y, x), 0.0, 1.0);
    return im;
  }
};

struct SceneSpec {
  int frames = 10, height = 64, width = 112;
  int sprites = 3;
  uint64_t seed = 0;
  // 0 freezes the background; otherwise it drifts up to this many px/frame.
  int bg_speed_max = 1;
  // Per-axis sprite speed cap; every sprite gets a nonzero velocity so each
  // one carries a motion boundary against the background.
  int sprite_speed_max = 3;
  // When non-empty, sprite s moves with velocities[s % size] (vy, vx)
  // instead of a seeded random velocity.
  std::vector<std::pair<int, int>> sprite_velocities;
};

// A rendered scene with exact ground truth. fwd[t] maps frame t to t+1,
// bwd[t] maps frame t+1 back to t (both have frames-1 entries). occ_fwd[t]
// flags pixels of frame t whose forward correspondence is invalid (covered
// by another surface at t+1 or outside the frame); occ_bwd[t] is the
// analogue for frame t+1 looking back.
struct SyntheticScene {
  VideoClip frames;
  std::vector<FlowField> fwd, bwd;
  MaskClip occ_fwd, occ_bwd;
};

namespace detail {

// Smooth value-noise texture: random lattice values interpolated with a
// cosine ramp, two octaves. Periodic in both axes so integer translations
// of the *sampling point* wrap exactly.
struct NoiseTexture {
  int cells_y, cells_x, period_y, period_x;
  std::vector<real> lattice;  // cells_y * cells_x per octave, 2 octaves
  real base, span;

  NoiseTexture(int period_y_, int period_x_, Rng& rng, real base_,
               real span_)
      : cells_y(std::max(2, period_y_ / 8)),
        cells_x(std::max(2, period_x_ / 8)),
        period_y(period_y_),
        period_x(period_x_),
        base(base_),
        span(span_) {
    lattice.resize((size_t)cells_y * cells_x * 2);
    for (real& v : lattice) v = rng.uniform();
  }

  real octave(int oct, real fy, real fx) const {
    int scale = oct == 0 ? 1 : 2;
    real gy = fy * cells_y * scale, gx = fx * cells_x * scale;
    int y0 = (int)std::floor(gy), x0 = (int)std::floor(gx);
    real ty = gy - y0, tx = gx - x0;
    ty = 0.5 - 0.5 * std::cos(ty * M_PI);  // cosine ease
    tx = 0.5 - 0.5 * std::cos(tx * M_PI);
    auto lat = [&](int yy, int xx) {
      yy = ((yy % cells_y) + cells_y) % cells_y;
      xx = ((xx % cells_x) + cells_x) % cells_x;
      return lattice[(size_t)oct * cells_y * cells_x + yy * cells_x + xx];
    };
    real top = (1 - tx) * lat(y0, x0) + tx * lat(y0, x0 + 1);
    real bot = (1 - tx) * lat(y0 + 1, x0) + tx * lat(y0 + 1, x0 + 1);
    return (1 - ty) * top + ty * bot;
  }

  // Sampled at integer pixel coordinates with exact wraparound.
  real sample(int y, int x) const {
    int yy = ((y % period_y) + period_y) % period_y;
    int xx = ((x % period_x) + period_x) % period_x;
    real fy = (real)yy / period_y, fx = (real)xx / period_x;
    real v = 0.65 * octave(0, fy, fx) + 0.35 * octave(1, fy, fx);
    return std::clamp(base + span * (v - 0.5), 0.0, 1.0);
  }
};

struct Sprite {
  int kind;  // 0 rectangle, 1 disk
  int h, w;  // bounding box
  int y0, x0;
  int vy, vx;  // integer pixels per frame
  std::array<NoiseTexture*, 3> tex;

  bool covers(int ly, int lx) const {
    if (ly < 0 || ly >= h || lx < 0 || lx >= w) return false;
    if (kind == 0) return true;
    real cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    real dy = (ly - cy) / (h / 2.0), dx = (lx - cx) / (w / 2.0);
    return dy * dy + dx * dx <= 1.0;
  }
};

}  // namespace detail

// Layered rendering: a periodically tiled drifting background plus opaque
// sprites moving with constant integer velocities (later sprites on top).
// Integer motion makes warp consistency exact away from occlusions.
inline SyntheticScene gen_synthetic_scene(const SceneSpec& spec) {
  int T = spec.frames, H = spec.height, W = spec.width;
  if (T < 1 || H < 8 || W < 8)
    tensor_fail("gen_synthetic_scene: degenerate spec");
  Rng rng(spec.seed);

  std::vector<std::unique_ptr<detail::NoiseTexture>> owned;
  auto make_tex = [&](int ph, int pw, real base, real span) {
    owned.push_back(
        std::make_unique<detail::NoiseTexture>(ph, pw, rng, base, span));
    return owned.back().get();
  };

  std::array<detail::NoiseTexture*, 3> bg_tex;
  for (int c = 0; c < 3; ++c)
    bg_tex[c] = make_tex(H, W, rng.uniform(0.3, 0.7), 0.6);
  int bg_vy = 0, bg_vx = 0;
  if (spec.bg_speed_max > 0) {
    bg_vy = rng.uniform_int(-spec.bg_speed_max, spec.bg_speed_max);
    bg_vx = rng.uniform_int(-spec.bg_speed_max, spec.bg_speed_max);
  }

  std::vector<detail::Sprite> sprites;
  for (int s = 0; s < spec.sprites; ++s) {
    detail::Sprite sp;
    sp.kind = rng.uniform_int(0, 1);
    sp.h = rng.uniform_int(H / 6, H / 3);
    sp.w = rng.uniform_int(W / 8, W / 4);
    sp.y0 = rng.uniform_int(0, H - sp.h);
    sp.x0 = rng.uniform_int(0, W - sp.w);
    if (!spec.sprite_velocities.empty()) {
      auto [vy, vx] = spec.sprite_velocities[s % spec.sprite_velocities.size()];
      sp.vy = vy;
      sp.vx = vx;
    } else {
      int cap = std::max(1, spec.sprite_speed_max);
      do {
        sp.vy = rng.uniform_int(-cap, cap);
        sp.vx = rng.uniform_int(-cap, cap);
      } while (sp.vy == 0 && sp.vx == 0);
    }
    for (int c = 0; c < 3; ++c)
      sp.tex[c] = make_tex(sp.h, sp.w, rng.uniform(0.2, 0.8), 0.8);
    sprites.push_back(sp);
  }

  SyntheticScene scene;
  scene.frames = VideoClip::zeros(T, H, W, 3);
  std::vector<std::vector<int>> ids(T,
                                    std::vector<int>((size_t)H * W, 0));
  // velocity of surface id (index 0 = background)
  std::vector<std::pair<int, int>> vel{{bg_vy, bg_vx}};
  for (const auto& sp : sprites) vel.push_back({sp.vy, sp.vx});

  for (int t = 0; t < T; ++t) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        int id = 0;
        const detail::Sprite* top = nullptr;
        for (size_t s = 0; s < sprites.size(); ++s) {
          const detail::Sprite& sp = sprites[s];
          int ly = y - (sp.y0 + sp.vy * t);
          int lx = x - (sp.x0 + sp.vx * t);
          if (sp.covers(ly, lx)) {
            id = (int)s + 1;
            top = &sp;
          }
        }
        ids[t][y * W + x] = id;
        for (int c = 0; c < 3; ++c)
          scene.frames.at(t, c, y, x) =
              top ? top->tex[c]->sample(y - (top->y0 + top->vy * t),
                                        x - (top->x0 + top->vx * t))
                  : bg_tex[c]->sample(y - bg_vy * t, x - bg_vx * t);
      }
  }

  scene.occ_fwd = MaskClip::zeros(std::max(T - 1, 0), H, W);
  scene.occ_bwd = MaskClip::zeros(std::max(T - 1, 0), H, W);
  for (int t = 0; t + 1 < T; ++t) {
    FlowField f = FlowField::zeros(H, W), b = FlowField::zeros(H, W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        auto [fvy, fvx] = vel[ids[t][y * W + x]];
        f.u(y, x) = fvx;
        f.v(y, x) = fvy;
        int ty = y + fvy, tx = x + fvx;
        bool valid = ty >= 0 && ty < H && tx >= 0 && tx < W &&
                     ids[t + 1][ty * W + tx] == ids[t][y * W + x];
        if (!valid) scene.occ_fwd.frame(t)[y * W + x] = 1.0;

        auto [bvy2, bvx2] = vel[ids[t + 1][y * W + x]];
        b.u(y, x) = -bvx2;
        b.v(y, x) = -bvy2;
        int sy = y - bvy2, sx = x - bvx2;
        bool bvalid = sy >= 0 && sy < H && sx >= 0 && sx < W &&
                      ids[t][sy * W + sx] == ids[t + 1][y * W + x];
        if (!bvalid) scene.occ_bwd.frame(t)[y * W + x] = 1.0;
      }
    scene.fwd.push_back(std::move(f));
    scene.bwd.push_back(std::move(b));
  }
  return scene;
}

}  // namespace vinpaint
