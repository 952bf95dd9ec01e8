#pragma once

#include "vinpaint/core/losses.hpp"
#include "vinpaint/core/warp.hpp"
#include "vinpaint/data/canny.hpp"
#include "vinpaint/data/flow_field.hpp"
#include "vinpaint/flowcomp/config.hpp"

namespace vinpaint {

// Edge-detector settings used to extract motion-boundary targets from
// ground-truth flows. Piecewise-smooth flow fields have near-zero gradients
// away from boundaries, so the thresholds sit well below a one-pixel
// velocity step.
inline constexpr real kFlowEdgeSigma = 1.0;
inline constexpr real kFlowEdgeLow = 0.2;
inline constexpr real kFlowEdgeHigh = 0.6;

inline Tensor flow_edge_target(const Tensor& gt_flow) {
  FlowField f = tensor_to_flow(gt_flow);
  std::vector<real> e =
      canny_flow(f, kFlowEdgeSigma, kFlowEdgeLow, kFlowEdgeHigh);
  return Tensor::from_data({1, 1, f.height, f.width}, std::move(e));
}

// First- plus second-order smoothness of a flow map [N,2,H,W]: mean absolute
// forward differences (replicate border, so edge differences vanish) plus the
// mean absolute 5-point Laplacian response.
inline Tensor flow_smoothness(const Tensor& flow) {
  if (flow.ndim() != 4) tensor_fail("flow_smoothness: expects [N,C,H,W]");
  int N = flow.dim(0), C = flow.dim(1), H = flow.dim(2), W = flow.dim(3);
  real numel = (real)flow.numel();

  auto shift_diff = [&](int axis, int sign) {
    // difference toward the neighbour at +/-1 along `axis`, zero where the
    // neighbour falls outside the frame (replicate-border convention)
    std::vector<int> starts_hi = {0, 0, 0, 0}, sizes = {N, C, H, W};
    std::vector<int> starts_lo = {0, 0, 0, 0};
    sizes[axis] -= 1;
    (sign > 0 ? starts_hi : starts_lo)[axis] = 1;
    Tensor d = sub(slice(flow, starts_hi, sizes), slice(flow, starts_lo, sizes));
    std::vector<std::pair<int, int>> pads(4, {0, 0});
    if (sign > 0)
      pads[axis] = {0, 1};  // no forward neighbour on the far edge
    else
      pads[axis] = {1, 0};
    return pad_zero(d, pads);
  };

  Tensor dx = shift_diff(3, +1);
  Tensor dy = shift_diff(2, +1);
  Tensor grad_term =
      mul_scalar(sum_all(abs_op(dx)) + sum_all(abs_op(dy)), 0.5 / numel);

  Tensor lap = shift_diff(3, +1) + shift_diff(3, -1) + shift_diff(2, +1) +
               shift_diff(2, -1);
  Tensor lap_term = mul_scalar(sum_all(abs_op(lap)), 1.0 / numel);
  return grad_term + lap_term;
}

struct FlowLossTerms {
  Tensor hole, valid, smooth, warp_term, edge, total;
  bool empty_hole = false;     // no corrupted pixels: hole term forced to 0
  bool empty_valid = false;    // no valid pixels: valid term forced to 0
  bool all_occluded = false;   // no usable pixels for the warp term
};

// Full flow-completion objective.
//   pred_flow   [N,2,H,W]  network output
//   gt_flow     [N,2,H,W]  ground truth for the target flow
//   mask        [N,1,H,W]  1 inside the corrupted region (untracked)
//   frame_a/b   [N,3,H,W]  frames with flow pred mapping a -> b
//   occ         [N,1,H,W]  1 where the flow round trip fails (untracked)
//   edge_pred   [N,1,H,W]  boundary-head output
//   edge_target [N,1,H,W]  binary boundary map of gt_flow
inline FlowLossTerms flow_losses(const Tensor& pred_flow, const Tensor& gt_flow,
                                 const Tensor& mask, const Tensor& frame_a,
                                 const Tensor& frame_b, const Tensor& occ,
                                 const Tensor& edge_pred,
                                 const Tensor& edge_target,
                                 const LafcConfig& cfg) {
  FlowLossTerms out;
  auto mass = [](const Tensor& m) {
    real s = 0;
    for (real v : m.values()) s += v;
    return s;
  };
  real hole_mass = mass(mask);
  real total_px = (real)mask.numel();

  out.hole = masked_l1(pred_flow, gt_flow, mask);
  out.empty_hole = hole_mass <= 0.0;
  Tensor inv_mask = add_scalar(neg(mask), 1.0);
  inv_mask.set_tracked(false);
  out.valid = masked_l1(pred_flow, gt_flow, inv_mask);
  out.empty_valid = hole_mass >= total_px;

  out.smooth = flow_smoothness(pred_flow);

  Tensor usable = add_scalar(neg(occ), 1.0);
  usable.set_tracked(false);
  out.all_occluded = mass(usable) <= 0.0;
  out.warp_term = masked_l1(warp(frame_b, pred_flow), frame_a, usable);

  out.edge = bce_loss(edge_pred, edge_target);

  out.total = mul_scalar(out.hole, cfg.lambda_hole) +
              mul_scalar(out.valid, cfg.lambda_valid) +
              mul_scalar(out.smooth, cfg.lambda_smooth) +
              mul_scalar(out.warp_term, cfg.lambda_warp) +
              mul_scalar(out.edge, cfg.lambda_edge);
  return out;
}

// Convenience overload that derives the boundary target from the ground
// truth with the pinned edge-detector settings.
inline FlowLossTerms flow_losses(const Tensor& pred_flow, const Tensor& gt_flow,
                                 const Tensor& mask, const Tensor& frame_a,
                                 const Tensor& frame_b, const Tensor& occ,
                                 const Tensor& edge_pred,
                                 const LafcConfig& cfg) {
  return flow_losses(pred_flow, gt_flow, mask, frame_a, frame_b, occ,
                     edge_pred, flow_edge_target(gt_flow), cfg);
}

}  // namespace vinpaint
