#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vinpaint/core/adam.hpp"
#include "vinpaint/core/serialize.hpp"
#include "vinpaint/data/metrics.hpp"
#include "vinpaint/flowcomp/dataset.hpp"
#include "vinpaint/flowcomp/network.hpp"

namespace vinpaint {

struct LafcTrainConfig {
  int iterations = 2000;
  real lr = 1e-4;
  // Tenfold learning-rate drop. Negative mean "scale the full-size schedule":
  // the milestone sits at the same fraction of the run (120k of 280k).
  int lr_milestone = -1;
  uint64_t seed = 0;

  int milestone() const {
    return lr_milestone >= 0 ? lr_milestone
                             : (int)((int64_t)iterations * 120 / 280);
  }
};

// Per-iteration loss record: hole, valid, smooth, warp, edge, total.
struct LafcCurvePoint {
  int iteration = 0;
  real hole = 0, valid = 0, smooth = 0, warp_term = 0, edge = 0, total = 0;
};

struct LafcTrainResult {
  std::vector<LafcCurvePoint> curve;
};

// Runs iterations [start_iteration, stop_iteration) of the configured
// schedule; stop_iteration < 0 means run to the end. The learning-rate
// milestone always follows cfg.iterations, so an interrupted-and-resumed run
// retraces the uninterrupted one.
inline LafcTrainResult train_lafc(
    LafcNet& net, Adam& opt, const LafcTrainConfig& cfg,
    const std::function<LafcSample(Rng&)>& source, Rng& rng,
    int start_iteration = 0, int stop_iteration = -1,
    const std::function<void(int, const LafcCurvePoint&)>& on_step = {}) {
  int end = stop_iteration >= 0 ? stop_iteration : cfg.iterations;
  LafcTrainResult result;
  result.curve.reserve(end - start_iteration);
  for (int it = start_iteration; it < end; ++it) {
    LafcSample s = source(rng);
    net.params().zero_grad();
    LafcOutput out = net.forward(s.input);
    FlowLossTerms terms =
        flow_losses(out.flow, s.gt_flow, s.mask, s.frame_a, s.frame_b, s.occ,
                    out.edge, s.edge_target, net.config());
    real total = terms.total.item();
    if (!std::isfinite(total))
      throw std::runtime_error("train_lafc: non-finite loss at iteration " +
                               std::to_string(it));
    terms.total.backward();
    opt.step(net.params().params(), it < cfg.milestone() ? 1.0 : 0.1);
    LafcCurvePoint pt{it,
                      terms.hole.item(),
                      terms.valid.item(),
                      terms.smooth.item(),
                      terms.warp_term.item(),
                      terms.edge.item(),
                      total};
    result.curve.push_back(pt);
    if (on_step) on_step(it, pt);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline void lafc_checkpoint_fill(Archive& a, const LafcNet& net,
                                 const Adam& opt, const Rng& rng,
                                 int iteration,
                                 const std::vector<LafcCurvePoint>& curve) {
  archive_put_params(a, net.params().params());
  archive_put_adam(a, opt.state());
  a.put_blob("rng", rng.serialize());
  a.put_scalar("iteration", (real)iteration);
  a.put_scalar("config/n", (real)net.config().n);
  a.put_scalar("config/interval", (real)net.config().interval);
  a.put_scalar("config/base_channels", (real)net.config().base_channels);
  std::vector<real> rows;
  rows.reserve(curve.size() * 7);
  for (const LafcCurvePoint& p : curve) {
    rows.push_back((real)p.iteration);
    rows.push_back(p.hole);
    rows.push_back(p.valid);
    rows.push_back(p.smooth);
    rows.push_back(p.warp_term);
    rows.push_back(p.edge);
    rows.push_back(p.total);
  }
  a.put_tensor("curve", {(int)curve.size(), 7}, rows);
}

inline void save_lafc_checkpoint(const std::string& path, const LafcNet& net,
                                 const Adam& opt, const Rng& rng,
                                 int iteration,
                                 const std::vector<LafcCurvePoint>& curve) {
  Archive a;
  lafc_checkpoint_fill(a, net, opt, rng, iteration, curve);
  a.save(path);
}

// Restores parameters, optimizer state and the data stream position.
// Returns the iteration to resume from.
inline int load_lafc_checkpoint(const std::string& path, LafcNet& net,
                                Adam& opt, Rng& rng,
                                std::vector<LafcCurvePoint>* curve = nullptr) {
  Archive a = Archive::load(path);
  if ((int)a.scalar("config/n") != net.config().n ||
      (int)a.scalar("config/interval") != net.config().interval ||
      (int)a.scalar("config/base_channels") != net.config().base_channels)
    throw std::runtime_error("lafc checkpoint: configuration mismatch");
  archive_get_params(a, net.params().params());
  archive_get_adam(a, opt.state(), net.params().params());
  rng.deserialize(a.blob("rng"));
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

struct LafcEval {
  real hole_epe_model = 0;     // completed flow vs ground truth, hole only
  real hole_epe_baseline = 0;  // hole-filled input flow vs ground truth
  real whole_epe_model = 0;    // composited output vs ground truth, all pixels
};

inline LafcEval eval_lafc(LafcNet& net, const std::vector<LafcSample>& set) {
  if (set.empty()) tensor_fail("eval_lafc: empty evaluation set");
  ParamFreeze freeze(net.params());
  LafcEval acc;
  for (const LafcSample& s : set) {
    LafcOutput out = net.forward(s.input);
    FlowField pred = tensor_to_flow(out.flow);
    FlowField gt = tensor_to_flow(s.gt_flow);
    FlowField base = tensor_to_flow(s.filled_target);
    Tensor comp = lafc_composite(out.flow, s.filled_target, s.mask);
    acc.hole_epe_model += metric_epe(pred, gt, &s.mask.values());
    acc.hole_epe_baseline += metric_epe(base, gt, &s.mask.values());
    acc.whole_epe_model += metric_epe(tensor_to_flow(comp), gt);
  }
  acc.hole_epe_model /= set.size();
  acc.hole_epe_baseline /= set.size();
  acc.whole_epe_model /= set.size();
  return acc;
}

}  // namespace vinpaint
