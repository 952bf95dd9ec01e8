#pragma once

#include <array>
#include <vector>

#include "vinpaint/core/fourier.hpp"
#include "vinpaint/core/losses.hpp"

namespace vinpaint {

// Blend weights for the full frame-synthesis objective, in the order the
// terms appear in generator_total: corrupted-region reconstruction,
// valid-region reconstruction, adversarial term, amplitude term.
struct LossWeights {
  real y1 = 1.0;   // hole reconstruction
  real y2 = 1.0;   // valid-region reconstruction
  real y3 = 0.01;  // adversarial
  real y4 = 0.1;   // amplitude spectrum
};

struct ReconLosses {
  Tensor hole, valid;
};

// Region-normalized L1 reconstruction pair. Each term averages |pred-target|
// per pixel *and* channel of its region, so a mask covering everything makes
// the hole term equal the plain mean L1 and zeroes the valid term (empty
// regions fall back to 0 through the mass floor).
inline ReconLosses recon_losses(const Tensor& pred, const Tensor& target,
                                const Tensor& mask) {
  if (pred.ndim() != 4) tensor_fail("recon_losses: expects [N,C,H,W]");
  real inv_c = 1.0 / (real)pred.dim(1);
  ReconLosses out;
  out.hole = mul_scalar(masked_l1(pred, target, mask), inv_c);
  Tensor inv_mask = add_scalar(neg(mask), 1.0);
  inv_mask.set_tracked(false);
  out.valid = mul_scalar(masked_l1(pred, target, inv_mask), inv_c);
  return out;
}

// Mean L1 distance between the unitary-DFT amplitude spectra of two frame
// stacks, computed per channel and averaged. Phase differences are ignored,
// so the loss vanishes between circularly shifted copies of the same image.
inline Tensor amplitude_loss(const Tensor& pred, const Tensor& target) {
  detail::check_same_shape("amplitude_loss", pred, target);
  return l1_loss(dft2_amplitude(pred), dft2_amplitude(target));
}

// Weighted sum of the four objective terms.
inline Tensor generator_total(const Tensor& hole, const Tensor& valid,
                              const Tensor& adv, const Tensor& amp,
                              const LossWeights& w = {}) {
  return mul_scalar(hole, w.y1) + mul_scalar(valid, w.y2) +
         mul_scalar(adv, w.y3) + mul_scalar(amp, w.y4);
}

// ---------------------------------------------------------------------------
// Amplitude-spectrum group analysis
// ---------------------------------------------------------------------------

// Coefficients are grouped by log10 of their ratio to the map maximum:
// group 0 at or below -4, group 1 in (-4,-3], group 2 in (-3,-2], group 3
// above -2 (the maximum itself lands here at ratio 1). Zeros are clamped to
// a tiny floor so the logarithm stays finite.
inline constexpr real kAmplitudeFloor = 1e-12;

inline int spectrum_group_of(real amp, real amp_max) {
  if (amp_max <= 0.0)
    tensor_fail("spectrum_group_of: amplitude map has no positive maximum");
  real r = std::log10(std::max(amp, kAmplitudeFloor) / amp_max);
  if (r <= -4.0) return 0;
  if (r <= -3.0) return 1;
  if (r <= -2.0) return 2;
  return 3;
}

struct SpectrumGroups {
  std::array<int64_t, 4> counts{};
  std::array<real, 4> fraction{};
};

inline SpectrumGroups spectrum_groups(const std::vector<real>& amp) {
  if (amp.empty()) tensor_fail("spectrum_groups: empty amplitude map");
  real mx = 0;
  for (real v : amp) mx = std::max(mx, v);
  SpectrumGroups out;
  for (real v : amp) ++out.counts[spectrum_group_of(v, mx)];
  for (int g = 0; g < 4; ++g)
    out.fraction[g] = (real)out.counts[g] / (real)amp.size();
  return out;
}

// Bins every coefficient by the reference map's grouping and reports the
// mean |ref - other| inside each bin (0 where a bin is empty). Lets a report
// say which loudness band of the spectrum an approximation gets wrong.
struct SpectrumGroupDeltas {
  std::array<int64_t, 4> counts{};
  std::array<real, 4> l1{};
};

inline SpectrumGroupDeltas spectrum_group_compare(
    const std::vector<real>& ref, const std::vector<real>& other) {
  if (ref.size() != other.size())
    tensor_fail("spectrum_group_compare: size mismatch");
  real mx = 0;
  for (real v : ref) mx = std::max(mx, v);
  SpectrumGroupDeltas out;
  for (size_t i = 0; i < ref.size(); ++i) {
    int g = spectrum_group_of(ref[i], mx);
    ++out.counts[g];
    out.l1[g] += std::abs(ref[i] - other[i]);
  }
  for (int g = 0; g < 4; ++g)
    if (out.counts[g] > 0) out.l1[g] /= (real)out.counts[g];
  return out;
}

}  // namespace vinpaint
