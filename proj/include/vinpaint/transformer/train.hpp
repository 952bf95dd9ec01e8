#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vinpaint/core/adam.hpp"
#include "vinpaint/core/serialize.hpp"
#include "vinpaint/data/metrics.hpp"
#include "vinpaint/objectives/gan.hpp"
#include "vinpaint/objectives/losses.hpp"
#include "vinpaint/transformer/dataset.hpp"
#include "vinpaint/transformer/model.hpp"

namespace vinpaint {

struct FgtTrainConfig {
  int iterations = 5000;
  real lr = 1e-4;
  // Tenfold learning-rate drop. Negative means "scale the full-size
  // schedule": the milestone sits at the same fraction of the run (400k of
  // 500k).
  int lr_milestone = -1;
  uint64_t seed = 0;
  LossWeights weights;
  // The adversarial term only participates when a critic is wired in; the
  // desk recipe trains reconstruction + amplitude only.
  HingeMode hinge = HingeMode::kConventional;

  int milestone() const {
    return lr_milestone >= 0 ? lr_milestone
                             : (int)((int64_t)iterations * 400 / 500);
  }
};

// Per-iteration loss record: the four generator terms, the critic's own
// loss (0 when no critic), and the weighted generator total.
struct FgtCurvePoint {
  int iteration = 0;
  real hole = 0, valid = 0, amp = 0, adv = 0, disc = 0, total = 0;
};

struct FgtTrainResult {
  std::vector<FgtCurvePoint> curve;
};

// [T,3,H,W] frame stack -> [1,3,T,H,W] clip for the spatiotemporal critic.
inline Tensor clip_for_critic(const Tensor& frames) {
  if (frames.ndim() != 4 || frames.dim(1) != 3)
    tensor_fail("clip_for_critic: expects [T,3,H,W]");
  return reshape(permute(frames, {1, 0, 2, 3}),
                 {1, 3, frames.dim(0), frames.dim(2), frames.dim(3)});
}

// Runs iterations [start_iteration, stop_iteration) of the configured
// schedule; stop_iteration < 0 means run to the end. The milestone follows
// cfg.iterations, so an interrupted-and-resumed run retraces the
// uninterrupted one. When a critic and its optimizer are supplied, each
// iteration appends a critic update on the detached composite plus one
// power-iteration step.
inline FgtTrainResult train_fgt(
    FgtModel& model, Adam& opt, const FgtTrainConfig& cfg,
    const std::function<FgtSample(Rng&)>& source, Rng& rng,
    int start_iteration = 0, int stop_iteration = -1,
    const std::function<void(int, const FgtCurvePoint&)>& on_step = {},
    DiscriminatorNet* disc = nullptr, Adam* disc_opt = nullptr) {
  if ((disc == nullptr) != (disc_opt == nullptr))
    tensor_fail("train_fgt: critic and critic optimizer come as a pair");
  int end = stop_iteration >= 0 ? stop_iteration : cfg.iterations;
  FgtTrainResult result;
  result.curve.reserve(end - start_iteration);
  for (int it = start_iteration; it < end; ++it) {
    FgtSample s = source(rng);
    model.params().zero_grad();
    Tensor pred = model.forward(s.input);
    ReconLosses rec = recon_losses(pred, s.target_local, s.input.local_masks);
    Tensor amp = amplitude_loss(pred, s.target_local);
    Tensor adv = Tensor::from_data({1}, {0.0});
    if (disc) {
      Tensor fake =
          composite_frames(pred, s.target_local, s.input.local_masks);
      adv = gan_generator_loss(disc->forward(clip_for_critic(fake)));
    }
    Tensor total = generator_total(rec.hole, rec.valid, adv, amp, cfg.weights);
    if (!std::isfinite(total.item()))
      throw std::runtime_error("train_fgt: non-finite loss at iteration " +
                               std::to_string(it));
    total.backward();
    real lr_scale = it < cfg.milestone() ? 1.0 : 0.1;
    opt.step(model.params().params(), lr_scale);

    real disc_loss = 0;
    if (disc) {
      disc->params().zero_grad();
      Tensor frozen = Tensor::from_data(pred.shape(), pred.values());
      Tensor fake =
          composite_frames(frozen, s.target_local, s.input.local_masks);
      Tensor dl = gan_discriminator_loss(
          disc->forward(clip_for_critic(s.target_local)),
          disc->forward(clip_for_critic(fake)), cfg.hinge);
      disc_loss = dl.item();
      if (!std::isfinite(disc_loss))
        throw std::runtime_error(
            "train_fgt: non-finite critic loss at iteration " +
            std::to_string(it));
      dl.backward();
      disc_opt->step(disc->params().params(), lr_scale);
      disc->power_iterate(1);
    }

    FgtCurvePoint pt{it,          rec.hole.item(), rec.valid.item(),
                     amp.item(),  adv.item(),      disc_loss,
                     total.item()};
    result.curve.push_back(pt);
    if (on_step) on_step(it, pt);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline void fgt_checkpoint_fill(Archive& a, const FgtModel& model,
                                const Adam& opt, const Rng& rng, int iteration,
                                const std::vector<FgtCurvePoint>& curve,
                                const DiscriminatorNet* disc = nullptr,
                                const Adam* disc_opt = nullptr) {
  archive_put_params(a, model.params().params());
  archive_put_adam(a, opt.state());
  a.put_blob("rng", rng.serialize());
  a.put_scalar("iteration", (real)iteration);
  a.put_scalar("config/token_channels", (real)model.config().token_channels);
  a.put_scalar("config/heads", (real)model.config().heads);
  a.put_scalar("config/feature_channels",
               (real)model.config().feature_channels);
  a.put_scalar("config/blocks", (real)model.config().blocks);
  std::vector<real> rows;
  rows.reserve(curve.size() * 7);
  for (const FgtCurvePoint& p : curve) {
    rows.push_back((real)p.iteration);
    rows.push_back(p.hole);
    rows.push_back(p.valid);
    rows.push_back(p.amp);
    rows.push_back(p.adv);
    rows.push_back(p.disc);
    rows.push_back(p.total);
  }
  a.put_tensor("curve", {(int)curve.size(), 7}, rows);
  if (disc && disc_opt) {
    archive_put_params(a, disc->params().params(), "critic/");
    archive_put_adam(a, disc_opt->state(), "critic_adam/");
    std::vector<real> ps = disc->power_state();
    a.put_tensor("critic_power", {(int)ps.size()}, ps);
  }
}

inline void save_fgt_checkpoint(const std::string& path, const FgtModel& model,
                                const Adam& opt, const Rng& rng, int iteration,
                                const std::vector<FgtCurvePoint>& curve,
                                const DiscriminatorNet* disc = nullptr,
                                const Adam* disc_opt = nullptr) {
  Archive a;
  fgt_checkpoint_fill(a, model, opt, rng, iteration, curve, disc, disc_opt);
  a.save(path);
}

// Restores parameters, optimizer state and the data stream position.
// Returns the iteration to resume from.
inline int load_fgt_checkpoint(const std::string& path, FgtModel& model,
                               Adam& opt, Rng& rng,
                               std::vector<FgtCurvePoint>* curve = nullptr,
                               DiscriminatorNet* disc = nullptr,
                               Adam* disc_opt = nullptr) {
  Archive a = Archive::load(path);
  if ((int)a.scalar("config/token_channels") !=
          model.config().token_channels ||
      (int)a.scalar("config/heads") != model.config().heads ||
      (int)a.scalar("config/feature_channels") !=
          model.config().feature_channels ||
      (int)a.scalar("config/blocks") != model.config().blocks)
    throw std::runtime_error("fgt checkpoint: configuration mismatch");
  {
    std::vector<Parameter> params = model.params().params();
    archive_get_params(a, params);
    AdamState& st = opt.state();
    archive_get_adam(a, st, params);
  }
  rng.deserialize(a.blob("rng"));
  if (disc && disc_opt) {
    if (!a.has("critic_power"))
      throw std::runtime_error("fgt checkpoint: no critic state stored");
    std::vector<Parameter> dparams = disc->params().params();
    archive_get_params(a, dparams, "critic/");
    archive_get_adam(a, disc_opt->state(), dparams, "critic_adam/");
    disc->set_power_state(a.tensor_data("critic_power"));
  }
  if (curve) {
    curve->clear();
    const std::vector<real>& rows = a.tensor_data("curve");
    for (size_t i = 0; i + 6 < rows.size(); i += 7)
      curve->push_back({(int)rows[i], rows[i + 1], rows[i + 2], rows[i + 3],
                        rows[i + 4], rows[i + 5], rows[i + 6]});
  }
  return (int)a.scalar("iteration");
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct FgtEval {
  real hole_psnr_model = 0;     // masked-region PSNR of the raw prediction
  real hole_psnr_baseline = 0;  // masked-region PSNR of harmonic filling
  real whole_psnr_model = 0;    // composited output vs clean frames
};

namespace detail {

// PSNR over the pixels selected by a [T,1,H,W] mask, all channels.
inline real region_psnr(const Tensor& a, const Tensor& b, const Tensor& mask) {
  int T = a.dim(0), C = a.dim(1);
  int64_t plane = (int64_t)a.dim(2) * a.dim(3);
  real mse = 0;
  int64_t count = 0;
  for (int t = 0; t < T; ++t)
    for (int64_t i = 0; i < plane; ++i) {
      if (mask.values()[t * plane + i] <= 0.5) continue;
      for (int c = 0; c < C; ++c) {
        real d = a.values()[((int64_t)t * C + c) * plane + i] -
                 b.values()[((int64_t)t * C + c) * plane + i];
        mse += d * d;
      }
      count += C;
    }
  if (count == 0) tensor_fail("region_psnr: empty region");
  mse /= (real)count;
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace detail

inline FgtEval eval_fgt(FgtModel& model, const std::vector<FgtSample>& set) {
  if (set.empty()) tensor_fail("eval_fgt: empty evaluation set");
  ParamFreeze freeze(model.params());
  FgtEval acc;
  for (const FgtSample& s : set) {
    Tensor pred = model.forward(s.input);
    Tensor filled =
        laplacian_fill_frames(s.input.local_frames, s.input.local_masks);
    Tensor comp =
        composite_frames(pred, s.target_local, s.input.local_masks);
    acc.hole_psnr_model +=
        detail::region_psnr(pred, s.target_local, s.input.local_masks);
    acc.hole_psnr_baseline +=
        detail::region_psnr(filled, s.target_local, s.input.local_masks);
    Tensor ones = Tensor::from_data(
        s.input.local_masks.shape(),
        std::vector<real>(s.input.local_masks.numel(), 1.0));
    acc.whole_psnr_model += detail::region_psnr(comp, s.target_local, ones);
  }
  acc.hole_psnr_model /= set.size();
  acc.hole_psnr_baseline /= set.size();
  acc.whole_psnr_model /= set.size();
  return acc;
}

}  // namespace vinpaint
