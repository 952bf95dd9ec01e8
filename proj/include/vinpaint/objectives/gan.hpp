#pragma once

#include <string>
#include <vector>

#include "vinpaint/core/conv.hpp"
#include "vinpaint/core/init.hpp"
#include "vinpaint/core/ops.hpp"

namespace vinpaint {

// The printed form of the hinge pair swaps which side of the margin the real
// and fake logits are pushed to; both are exposed so the deviation stays a
// visible switch rather than a silent fix.
enum class HingeMode { kConventional, kAsPrinted };

// Generator objective: raise the critic's mean score on synthesized clips.
inline Tensor gan_generator_loss(const Tensor& fake_logits) {
  return neg(mean_all(fake_logits));
}

// Two-sided hinge on the critic's patch logits.
inline Tensor gan_discriminator_loss(const Tensor& real_logits,
                                     const Tensor& fake_logits,
                                     HingeMode mode = HingeMode::kConventional) {
  Tensor real_term, fake_term;
  if (mode == HingeMode::kConventional) {
    real_term = relu(add_scalar(neg(real_logits), 1.0));  // max(0, 1 - D(x))
    fake_term = relu(add_scalar(fake_logits, 1.0));       // max(0, 1 + D(z))
  } else {
    real_term = relu(add_scalar(real_logits, 1.0));
    fake_term = relu(add_scalar(neg(fake_logits), 1.0));
  }
  return mean_all(real_term) + mean_all(fake_term);
}

// ---------------------------------------------------------------------------
// Spatiotemporal patch critic
// ---------------------------------------------------------------------------

// Six 3D convolutions with kernel (3,5,5) and stride (1,2,2): time is kept
// whole while space shrinks, so the output stays a logit map over
// (T, H', W') patches. Hidden channels ramp base -> 8*base; lone logit
// channel at the end, no final activation.
//
// Every convolution runs on its spectrally normalized weight w / sigma,
// where sigma is the largest singular value of w flattened to
// [out_channels, rest]. The singular pair (u, v) lives outside the graph and
// only moves when power_iterate() is called between training steps; the
// forward pass is pure, and sigma = u^T w v participates in the graph so the
// normalization is differentiated exactly.
class DiscriminatorNet {
 public:
  DiscriminatorNet(int in_channels, int base_channels, uint64_t seed) {
    Rng rng(seed);
    int hidden[5] = {base_channels, 2 * base_channels, 4 * base_channels,
                     8 * base_channels, 8 * base_channels};
    int c = in_channels;
    for (int i = 0; i < 6; ++i) {
      int oc = i < 5 ? hidden[i] : 1;
      Layer layer;
      std::string pre = "d" + std::to_string(i + 1);
      layer.w = bank_.add_conv(pre + ".w", {oc, c, 3, 5, 5}, rng);
      layer.b = bank_.add_zeros(pre + ".b", {oc});
      layer.u.resize(oc);
      for (real& x : layer.u) x = rng.normal();
      layer.v.assign(layer.w.numel() / oc, 0.0);
      layers_.push_back(std::move(layer));
      c = oc;
    }
    in_channels_ = in_channels;
    power_iterate(10);  // settle the singular pairs before first use
  }

  // clip: [N, C, T, H, W] -> patch logits [N, 1, T, H', W'].
  Tensor forward(const Tensor& clip) const {
    if (clip.ndim() != 5 || clip.dim(1) != in_channels_)
      tensor_fail("DiscriminatorNet: expects [N," +
                  std::to_string(in_channels_) + ",T,H,W], got " +
                  shape_str(clip.shape()));
    Tensor x = clip;
    for (size_t i = 0; i < layers_.size(); ++i) {
      x = conv3d(x, normalized_weight(layers_[i]), layers_[i].b, 1, 2, 2, 1, 2,
                 2);
      if (i + 1 < layers_.size()) x = leaky_relu(x, 0.2);
    }
    return x;
  }

  // Advances every layer's singular-pair estimate on the current raw
  // weights. Call between optimizer steps, never inside a traced forward.
  void power_iterate(int steps = 1) {
    for (Layer& l : layers_) {
      int oc = l.w.dim(0);
      int64_t r = l.w.numel() / oc;
      const std::vector<real>& w = l.w.values();
      for (int s = 0; s < steps; ++s) {
        for (int64_t j = 0; j < r; ++j) {
          real acc = 0;
          for (int i = 0; i < oc; ++i) acc += w[(size_t)i * r + j] * l.u[i];
          l.v[j] = acc;
        }
        normalize(l.v);
        for (int i = 0; i < oc; ++i) {
          real acc = 0;
          const real* row = w.data() + (size_t)i * r;
          for (int64_t j = 0; j < r; ++j) acc += row[j] * l.v[j];
          l.u[i] = acc;
        }
        normalize(l.u);
      }
    }
  }

  // Current largest-singular-value estimates u^T w v, one per layer.
  std::vector<real> sigma_estimates() const {
    std::vector<real> out;
    for (const Layer& l : layers_) out.push_back(sigma_of(l));
    return out;
  }

  // Singular-pair buffers flattened in layer order, for checkpointing.
  std::vector<real> power_state() const {
    std::vector<real> out;
    for (const Layer& l : layers_) {
      out.insert(out.end(), l.u.begin(), l.u.end());
      out.insert(out.end(), l.v.begin(), l.v.end());
    }
    return out;
  }

  void set_power_state(const std::vector<real>& state) {
    size_t at = 0;
    for (Layer& l : layers_) {
      if (at + l.u.size() + l.v.size() > state.size())
        tensor_fail("DiscriminatorNet: power state too short");
      std::copy_n(state.begin() + at, l.u.size(), l.u.begin());
      at += l.u.size();
      std::copy_n(state.begin() + at, l.v.size(), l.v.begin());
      at += l.v.size();
    }
    if (at != state.size())
      tensor_fail("DiscriminatorNet: power state size mismatch");
  }

  ParamBank& params() { return bank_; }
  const ParamBank& params() const { return bank_; }
  int in_channels() const { return in_channels_; }

 private:
  struct Layer {
    Tensor w, b;
    std::vector<real> u, v;
  };

  static void normalize(std::vector<real>& x) {
    real n = 0;
    for (real v : x) n += v * v;
    n = std::sqrt(std::max(n, (real)1e-24));
    for (real& v : x) v /= n;
  }

  real sigma_of(const Layer& l) const {
    int oc = l.w.dim(0);
    int64_t r = l.w.numel() / oc;
    real sigma = 0;
    for (int i = 0; i < oc; ++i) {
      real acc = 0;
      const real* row = l.w.values().data() + (size_t)i * r;
      for (int64_t j = 0; j < r; ++j) acc += row[j] * l.v[j];
      sigma += acc * l.u[i];
    }
    return sigma;
  }

  Tensor normalized_weight(const Layer& l) const {
    int oc = l.w.dim(0);
    int64_t r = l.w.numel() / oc;
    Tensor u = Tensor::from_data({1, oc}, l.u);
    Tensor v = Tensor::from_data({(int)r, 1}, l.v);
    Tensor sigma = matmul(u, matmul(reshape(l.w, {oc, (int)r}), v));
    return scale_by(l.w, reciprocal(reshape(sigma, {1})));
  }

  ParamBank bank_;
  std::vector<Layer> layers_;
  int in_channels_ = 0;
};

}  // namespace vinpaint
