#include <gtest/gtest.h>

#include "test_oracles.hpp"
#include "vinpaint/core/adam.hpp"
#include "vinpaint/core/attention.hpp"
#include "vinpaint/core/conv.hpp"
#include "vinpaint/core/fourier.hpp"
#include "vinpaint/core/gradcheck.hpp"
#include "vinpaint/core/init.hpp"
#include "vinpaint/core/losses.hpp"
#include "vinpaint/core/ops.hpp"
#include "vinpaint/core/serialize.hpp"
#include "vinpaint/core/warp.hpp"

using namespace vinpaint;

namespace {

Tensor rand_tensor(Shape s, Rng& rng, bool tracked = false, real lo = -1.0,
                   real hi = 1.0) {
  std::vector<real> v(shape_numel(s));
  for (real& x : v) x = rng.uniform(lo, hi);
  Tensor t = Tensor::from_data(std::move(s), std::move(v));
  t.set_tracked(tracked);
  return t;
}

real max_abs_diff(const std::vector<real>& a, const std::vector<real>& b) {
  EXPECT_EQ(a.size(), b.size());
  real m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Scalarize an op output with a fixed random projection so every element
// contributes to the gradient check.
Tensor project(const Tensor& y, Rng& rng) {
  Tensor proj = rand_tensor(y.shape(), rng);
  return sum_all(mul(y, proj));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor fundamentals
// ---------------------------------------------------------------------------

TEST(Tensor, BasicsAndErrors) {
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.ndim(), 2);
  EXPECT_EQ(t.dim(0), 2);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_EQ(t.numel(), 6);
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(t.item(), std::invalid_argument);
  EXPECT_DOUBLE_EQ(Tensor::scalar(4.5).item(), 4.5);
}

TEST(Tensor, ReshapeInfersExtent) {
  Tensor t = Tensor::from_data({2, 6}, std::vector<real>(12, 1.0));
  Tensor r = reshape(t, {3, -1});
  EXPECT_EQ(r.shape(), (Shape{3, 4}));
  EXPECT_THROW(reshape(t, {5, -1}), std::invalid_argument);
}

TEST(Tensor, UntrackedGraphIsNotRecorded) {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = Tensor::from_data({2}, {3, 4});
  Tensor c = add(a, b);
  EXPECT_FALSE(c.tracked());
  EXPECT_EQ(c.node()->parents.size(), 0u);
}

TEST(Tensor, DeepChainDestructsWithoutOverflow) {
  Tensor x = Tensor::from_data({4}, {1, 2, 3, 4});
  x.set_tracked(true);
  Tensor y = x;
  for (int i = 0; i < 200000; ++i) y = add_scalar(y, 1e-6);
  SUCCEED();  // the chain frees iteratively when y goes out of scope
}

TEST(Tensor, BackwardThroughSharedSubexpression) {
  Tensor x = Tensor::scalar(3.0);
  x.set_tracked(true);
  Tensor y = mul(x, x);       // x^2
  Tensor z = add(y, y);       // 2 x^2, dz/dx = 4x = 12
  z.backward();
  EXPECT_NEAR(x.grad()[0], 12.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

TEST(Elementwise, ForwardMatchesLoops) {
  Rng rng(1);
  Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
  Tensor s = add(a, b), d = sub(a, b), p = mul(a, b);
  for (int i = 0; i < 12; ++i) {
    EXPECT_DOUBLE_EQ(s.values()[i], a.values()[i] + b.values()[i]);
    EXPECT_DOUBLE_EQ(d.values()[i], a.values()[i] - b.values()[i]);
    EXPECT_DOUBLE_EQ(p.values()[i], a.values()[i] * b.values()[i]);
  }
  EXPECT_THROW(add(a, rand_tensor({4, 3}, rng)), std::invalid_argument);
}

TEST(Elementwise, Gradcheck) {
  Rng rng(2);
  Tensor a = rand_tensor({3, 5}, rng, true);
  Tensor b = rand_tensor({3, 5}, rng, true, 0.2, 1.5);
  Rng prng(3);
  std::vector<Parameter> ps{{"a", a}, {"b", b}};
  auto fn = [&] {
    Rng r = prng;
    Tensor y = mul(sigmoid(a), add(sub(b, a), abs_op(mul_scalar(b, 0.7))));
    y = add(y, leaky_relu(a, 0.2));
    y = add(y, sqrt_op(b));
    y = add(y, reciprocal(add_scalar(b, 2.0)));
    return project(y, r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Elementwise, ClampBlocksGradientOutsideRange) {
  Tensor x = Tensor::from_data({3}, {-2.0, 0.5, 2.0});
  x.set_tracked(true);
  sum_all(clamp(x, -1.0, 1.0)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 0.0);
}

TEST(Elementwise, ScaleByScalarTensor) {
  Tensor a = Tensor::from_data({2}, {3.0, -1.0});
  Tensor s = Tensor::scalar(2.5);
  a.set_tracked(true);
  s.set_tracked(true);
  Tensor y = scale_by(a, s);
  EXPECT_DOUBLE_EQ(y.values()[0], 7.5);
  sum_all(y).backward();
  EXPECT_DOUBLE_EQ(s.grad()[0], 2.0);  // sum of a
  EXPECT_DOUBLE_EQ(a.grad()[0], 2.5);
}

// ---------------------------------------------------------------------------
// Matmul / linear
// ---------------------------------------------------------------------------

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(4);
  Tensor a = rand_tensor({7, 5}, rng), b = rand_tensor({5, 9}, rng);
  Tensor c = matmul(a, b);
  auto ref = oracle::matmul(a.values(), b.values(), 7, 5, 9);
  EXPECT_LT(max_abs_diff(c.values(), ref), 1e-12);
}

TEST(Matmul, Gradcheck) {
  Rng rng(5);
  Tensor a = rand_tensor({4, 3}, rng, true), b = rand_tensor({3, 6}, rng, true);
  std::vector<Parameter> ps{{"a", a}, {"b", b}};
  Rng prng(6);
  auto fn = [&] {
    Rng r = prng;
    return project(matmul(a, b), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Linear, MatchesOracleWithLeadingDims) {
  Rng rng(7);
  Tensor x = rand_tensor({2, 3, 5}, rng);
  Tensor w = rand_tensor({5, 4}, rng);
  Tensor bias = rand_tensor({4}, rng);
  Tensor y = linear(x, w, bias);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 4}));
  auto ref = oracle::matmul(x.values(), w.values(), 6, 5, 4);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 4; ++c)
      EXPECT_NEAR(y.values()[r * 4 + c], ref[r * 4 + c] + bias.values()[c],
                  1e-12);
}

TEST(Linear, Gradcheck) {
  Rng rng(8);
  Tensor x = rand_tensor({3, 4}, rng, true);
  Tensor w = rand_tensor({4, 5}, rng, true);
  Tensor bias = rand_tensor({5}, rng, true);
  std::vector<Parameter> ps{{"x", x}, {"w", w}, {"b", bias}};
  Rng prng(9);
  auto fn = [&] {
    Rng r = prng;
    return project(linear(x, w, bias), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

TEST(Conv2d, MatchesNestedLoopAcrossConfigs) {
  struct Cfg {
    int N, C, H, W, OC, K, stride, pad, dil, groups;
  };
  std::vector<Cfg> cfgs = {
      {1, 2, 6, 7, 3, 3, 1, 0, 1, 1},  {2, 3, 8, 8, 4, 3, 2, 1, 1, 1},
      {1, 2, 9, 9, 2, 3, 1, 2, 2, 1},  {1, 4, 6, 6, 6, 3, 1, 1, 1, 2},
      {1, 5, 7, 7, 5, 3, 1, 1, 1, 5},  {2, 3, 5, 5, 4, 1, 1, 0, 1, 1},
      {1, 2, 10, 6, 3, 5, 2, 2, 1, 1},
  };
  Rng rng(10);
  for (const Cfg& c : cfgs) {
    Tensor x = rand_tensor({c.N, c.C, c.H, c.W}, rng);
    Tensor w = rand_tensor({c.OC, c.C / c.groups, c.K, c.K}, rng);
    Tensor bias = rand_tensor({c.OC}, rng);
    Tensor y = conv2d(x, w, bias, c.stride, c.pad, c.dil, c.groups);
    int OH, OW;
    auto ref = oracle::conv2d(x.values(), c.N, c.C, c.H, c.W, w.values(),
                              c.OC, c.K, c.K, &bias.values(), c.stride, c.pad,
                              c.dil, c.groups, OH, OW);
    ASSERT_EQ(y.shape(), (Shape{c.N, c.OC, OH, OW}));
    EXPECT_LT(max_abs_diff(y.values(), ref), 1e-10)
        << "stride=" << c.stride << " pad=" << c.pad << " dil=" << c.dil
        << " groups=" << c.groups;
  }
}

TEST(Conv2d, Gradcheck) {
  Rng rng(11);
  Tensor x = rand_tensor({1, 2, 5, 6}, rng, true);
  Tensor w = rand_tensor({3, 2, 3, 3}, rng, true);
  Tensor bias = rand_tensor({3}, rng, true);
  std::vector<Parameter> ps{{"x", x}, {"w", w}, {"b", bias}};
  Rng prng(12);
  auto fn = [&] {
    Rng r = prng;
    return project(conv2d(x, w, bias, 2, 1), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Conv2d, GroupedGradcheck) {
  Rng rng(13);
  Tensor x = rand_tensor({1, 4, 5, 5}, rng, true);
  Tensor w = rand_tensor({4, 1, 3, 3}, rng, true);  // depthwise
  std::vector<Parameter> ps{{"x", x}, {"w", w}};
  Rng prng(14);
  auto fn = [&] {
    Rng r = prng;
    return project(conv2d(x, w, Tensor(), 1, 1, 1, 4), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Conv3d, MatchesNestedLoop) {
  Rng rng(15);
  Tensor x = rand_tensor({1, 2, 4, 6, 6}, rng);
  Tensor w = rand_tensor({3, 2, 3, 3, 3}, rng);
  Tensor bias = rand_tensor({3}, rng);
  Tensor y = conv3d(x, w, bias, 1, 2, 2, 1, 1, 1);
  int OT, OH, OW;
  auto ref = oracle::conv3d(x.values(), 1, 2, 4, 6, 6, w.values(), 3, 3, 3, 3,
                            &bias.values(), 1, 2, 2, 1, 1, 1, OT, OH, OW);
  ASSERT_EQ(y.shape(), (Shape{1, 3, OT, OH, OW}));
  EXPECT_LT(max_abs_diff(y.values(), ref), 1e-10);
}

TEST(Conv3d, Gradcheck) {
  Rng rng(16);
  Tensor x = rand_tensor({1, 2, 3, 4, 4}, rng, true);
  Tensor w = rand_tensor({2, 2, 3, 3, 3}, rng, true);
  std::vector<Parameter> ps{{"x", x}, {"w", w}};
  Rng prng(17);
  auto fn = [&] {
    Rng r = prng;
    return project(conv3d(x, w, Tensor(), 1, 1, 1, 1, 1, 1), r);
  };
  auto res = gradcheck(fn, ps, 1e-4, 60);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(ConvTemporal, EqualsConv3dWithUnitSpatialKernel) {
  Rng rng(18);
  Tensor x = rand_tensor({1, 3, 5, 4, 4}, rng);
  Tensor w = rand_tensor({2, 3, 3}, rng);
  Tensor y = conv_temporal(x, w, Tensor(), 1, 1);
  int OT, OH, OW;
  Tensor w5 = reshape(w, {2, 3, 3, 1, 1});
  auto ref = oracle::conv3d(x.values(), 1, 3, 5, 4, 4, w5.values(), 2, 3, 1,
                            1, nullptr, 1, 1, 1, 1, 0, 0, OT, OH, OW);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 5, 4, 4}));
  EXPECT_LT(max_abs_diff(y.values(), ref), 1e-12);
}

TEST(ConvSpatial, EqualsPerFrameConv2d) {
  Rng rng(19);
  Tensor x = rand_tensor({1, 3, 4, 6, 6}, rng);
  Tensor w = rand_tensor({5, 3, 3, 3}, rng);
  Tensor bias = rand_tensor({5}, rng);
  Tensor y = conv_spatial(x, w, bias, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 5, 4, 6, 6}));
  for (int t = 0; t < 4; ++t) {
    Tensor frame = slice(x, {0, 0, t, 0, 0}, {1, 3, 1, 6, 6});
    Tensor f2 = conv2d(reshape(frame, {1, 3, 6, 6}), w, bias, 1, 1);
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < 36; ++i)
        EXPECT_NEAR(y.values()[((c * 4) + t) * 36 + i],
                    f2.values()[c * 36 + i], 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Structure ops
// ---------------------------------------------------------------------------

TEST(Structure, PermuteSliceConcatPadRoundtrip) {
  Rng rng(20);
  Tensor x = rand_tensor({2, 3, 4, 5}, rng);
  Tensor p = permute(x, {0, 2, 1, 3});
  EXPECT_EQ(p.shape(), (Shape{2, 4, 3, 5}));
  // spot check an element: p[n,h,c,w] == x[n,c,h,w]
  auto at = [](const Tensor& t, std::initializer_list<int> idx) {
    auto st = vinpaint::detail::row_major_strides(t.shape());
    int64_t off = 0;
    int i = 0;
    for (int v : idx) off += st[i++] * v;
    return t.values()[off];
  };
  EXPECT_DOUBLE_EQ(at(p, {1, 3, 2, 4}), at(x, {1, 2, 3, 4}));

  Tensor back = permute(p, {0, 2, 1, 3});
  EXPECT_LT(max_abs_diff(back.values(), x.values()), 0.0 + 1e-15);

  Tensor s = slice(x, {0, 1, 2, 1}, {2, 2, 2, 3});
  EXPECT_EQ(s.shape(), (Shape{2, 2, 2, 3}));
  EXPECT_DOUBLE_EQ(at(s, {1, 0, 1, 2}), at(x, {1, 1, 3, 3}));
  EXPECT_THROW(slice(x, {0, 2, 0, 0}, {2, 2, 4, 5}), std::invalid_argument);

  Tensor a = slice(x, {0, 0, 0, 0}, {2, 1, 4, 5});
  Tensor b = slice(x, {0, 1, 0, 0}, {2, 2, 4, 5});
  Tensor cat = concat({a, b}, 1);
  EXPECT_LT(max_abs_diff(cat.values(), x.values()), 1e-15);

  Tensor padded = pad_zero(x, {{0, 0}, {0, 0}, {1, 2}, {2, 1}});
  EXPECT_EQ(padded.shape(), (Shape{2, 3, 7, 8}));
  EXPECT_DOUBLE_EQ(at(padded, {0, 0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(at(padded, {1, 2, 4, 6}), at(x, {1, 2, 3, 4}));
  Tensor unpadded = slice(padded, {0, 0, 1, 2}, {2, 3, 4, 5});
  EXPECT_LT(max_abs_diff(unpadded.values(), x.values()), 1e-15);
}

TEST(Structure, Gradcheck) {
  Rng rng(21);
  Tensor x = rand_tensor({2, 3, 4}, rng, true);
  std::vector<Parameter> ps{{"x", x}};
  Rng prng(22);
  auto fn = [&] {
    Rng r = prng;
    Tensor p = permute(x, {2, 0, 1});
    Tensor s = slice(p, {1, 0, 1}, {2, 2, 2});
    Tensor c = concat({s, s}, 0);
    Tensor pad = pad_zero(c, {{1, 0}, {0, 1}, {0, 0}});
    return project(pad, r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Structure, UpsampleNearestForwardAndGrad) {
  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = upsample_nearest2x(x);
  std::vector<real> want = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_LT(max_abs_diff(y.values(), want), 1e-15);
  x.set_tracked(true);
  sum_all(upsample_nearest2x(x)).backward();
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 4.0);
}

// ---------------------------------------------------------------------------
// Softmax / layer norm
// ---------------------------------------------------------------------------

TEST(Softmax, MatchesOracleAndSumsToOne) {
  Rng rng(23);
  Tensor x = rand_tensor({4, 7}, rng, false, -5.0, 5.0);
  Tensor y = softmax_lastaxis(x);
  auto ref = oracle::softmax_rows(x.values(), 4, 7);
  EXPECT_LT(max_abs_diff(y.values(), ref), 1e-10);
  for (int r = 0; r < 4; ++r) {
    real s = 0;
    for (int c = 0; c < 7; ++c) s += y.values()[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, Gradcheck) {
  Rng rng(24);
  Tensor x = rand_tensor({3, 5}, rng, true, -2.0, 2.0);
  std::vector<Parameter> ps{{"x", x}};
  Rng prng(25);
  auto fn = [&] {
    Rng r = prng;
    return project(softmax_lastaxis(x), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  Rng rng(26);
  Tensor x = rand_tensor({6, 9}, rng);
  Tensor gamma = rand_tensor({9}, rng, false, 0.5, 1.5);
  Tensor beta = rand_tensor({9}, rng);
  Tensor y = layer_norm(x, gamma, beta);
  auto ref = oracle::layer_norm(x.values(), 6, 9, gamma.values(),
                                beta.values(), 1e-5);
  EXPECT_LT(max_abs_diff(y.values(), ref), 1e-10);
}

TEST(LayerNorm, Gradcheck) {
  Rng rng(27);
  Tensor x = rand_tensor({4, 6}, rng, true);
  Tensor gamma = rand_tensor({6}, rng, true, 0.5, 1.5);
  Tensor beta = rand_tensor({6}, rng, true);
  std::vector<Parameter> ps{{"x", x}, {"g", gamma}, {"b", beta}};
  Rng prng(28);
  auto fn = [&] {
    Rng r = prng;
    return project(layer_norm(x, gamma, beta), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

TEST(Attention, MatchesManualLoops) {
  Rng rng(29);
  int B = 3, Lq = 5, Lk = 7, D = 4;
  Tensor q = rand_tensor({B, Lq, D}, rng);
  Tensor k = rand_tensor({B, Lk, D}, rng);
  Tensor v = rand_tensor({B, Lk, D}, rng);
  Tensor bias = rand_tensor({B, Lq, Lk}, rng);
  Tensor out = softmax_attention(q, k, v, bias);
  for (int b = 0; b < B; ++b) {
    std::vector<real> qb(q.values().begin() + b * Lq * D,
                         q.values().begin() + (b + 1) * Lq * D);
    std::vector<real> kb(k.values().begin() + b * Lk * D,
                         k.values().begin() + (b + 1) * Lk * D);
    std::vector<real> vb(v.values().begin() + b * Lk * D,
                         v.values().begin() + (b + 1) * Lk * D);
    std::vector<real> bb(bias.values().begin() + b * Lq * Lk,
                         bias.values().begin() + (b + 1) * Lq * Lk);
    auto ref = oracle::attention(qb, kb, vb, Lq, Lk, D, &bb);
    for (int i = 0; i < Lq * D; ++i)
      EXPECT_NEAR(out.values()[b * Lq * D + i], ref[i], 1e-10);
  }
}

TEST(Attention, BiasMasksKeysAndRowsSumToOne) {
  Rng rng(30);
  int Lq = 4, Lk = 6, D = 3;
  Tensor q = rand_tensor({1, Lq, D}, rng);
  Tensor k = rand_tensor({1, Lk, D}, rng);
  Tensor v = rand_tensor({1, Lk, D}, rng);
  std::vector<real> bias(Lq * Lk, 0.0);
  for (int i = 0; i < Lq; ++i) bias[i * Lk + 5] = bias[i * Lk + 2] = -1e9;
  AttentionProbe probe;
  softmax_attention(q, k, v, Tensor::from_data({1, Lq, Lk}, bias), &probe);
  ASSERT_EQ(probe.shape, (Shape{1, Lq, Lk}));
  for (int i = 0; i < Lq; ++i) {
    real valid = 0;
    for (int j = 0; j < Lk; ++j) {
      real p = probe.probs[i * Lk + j];
      if (j == 2 || j == 5)
        EXPECT_LT(p, 1e-30);
      else
        valid += p;
    }
    EXPECT_NEAR(valid, 1.0, 1e-12);
  }
}

TEST(Attention, Gradcheck) {
  Rng rng(31);
  int B = 2, Lq = 3, Lk = 4, D = 3;
  Tensor q = rand_tensor({B, Lq, D}, rng, true);
  Tensor k = rand_tensor({B, Lk, D}, rng, true);
  Tensor v = rand_tensor({B, Lk, D}, rng, true);
  std::vector<Parameter> ps{{"q", q}, {"k", k}, {"v", v}};
  Rng prng(32);
  auto fn = [&] {
    Rng r = prng;
    return project(softmax_attention(q, k, v), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

// ---------------------------------------------------------------------------
// Warping and resizing
// ---------------------------------------------------------------------------

TEST(Warp, ZeroFlowIsBitwiseIdentity) {
  Rng rng(33);
  Tensor src = rand_tensor({2, 3, 6, 8}, rng);
  Tensor flow = Tensor::zeros({2, 2, 6, 8});
  Tensor out = warp(src, flow);
  for (int64_t i = 0; i < src.numel(); ++i)
    EXPECT_EQ(out.values()[i], src.values()[i]);
}

TEST(Warp, MatchesBilinearOracle) {
  Rng rng(34);
  int H = 7, W = 9;
  Tensor src = rand_tensor({1, 2, H, W}, rng);
  Tensor flow = rand_tensor({1, 2, H, W}, rng, false, -3.0, 3.0);
  Tensor out = warp(src, flow);
  for (int c = 0; c < 2; ++c) {
    std::vector<real> plane(src.values().begin() + c * H * W,
                            src.values().begin() + (c + 1) * H * W);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        real u = flow.values()[y * W + x];
        real v = flow.values()[H * W + y * W + x];
        EXPECT_NEAR(out.values()[c * H * W + y * W + x],
                    oracle::bilinear(plane, H, W, y + v, x + u), 1e-12);
      }
  }
}

TEST(Warp, Gradcheck) {
  Rng rng(35);
  int H = 5, W = 6;
  Tensor src = rand_tensor({1, 2, H, W}, rng, true);
  // Keep sample points away from integer lattice and borders so the forward
  // map is smooth in the probed neighbourhood.
  std::vector<real> fv(2 * H * W);
  for (real& f : fv) {
    real mag = rng.uniform(0.15, 0.85);  // fractional part away from 0 and 1
    f = rng.uniform() < 0.5 ? -mag : mag;
  }
  Tensor flow = Tensor::from_data({1, 2, H, W}, fv);
  flow.set_tracked(true);
  std::vector<Parameter> ps{{"src", src}, {"flow", flow}};
  Rng prng(36);
  auto fn = [&] {
    Rng r = prng;
    return project(warp(src, flow), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Resize, SameSizeIsIdentity) {
  Rng rng(37);
  Tensor x = rand_tensor({1, 2, 5, 7}, rng);
  Tensor y = resize_bilinear(x, 5, 7);
  EXPECT_LT(max_abs_diff(x.values(), y.values()), 1e-15);
}

TEST(Resize, MatchesHalfPixelOracle) {
  Rng rng(38);
  int H = 6, W = 8, OH = 4, OW = 5;
  Tensor x = rand_tensor({1, 1, H, W}, rng);
  Tensor y = resize_bilinear(x, OH, OW);
  for (int oy = 0; oy < OH; ++oy)
    for (int ox = 0; ox < OW; ++ox) {
      double sy = (oy + 0.5) * H / OH - 0.5;
      double sx = (ox + 0.5) * W / OW - 0.5;
      EXPECT_NEAR(y.values()[oy * OW + ox],
                  oracle::bilinear(x.values(), H, W, sy, sx), 1e-12);
    }
}

TEST(Resize, Gradcheck) {
  Rng rng(39);
  Tensor x = rand_tensor({1, 2, 4, 6}, rng, true);
  std::vector<Parameter> ps{{"x", x}};
  Rng prng(40);
  auto fn = [&] {
    Rng r = prng;
    return project(resize_bilinear(x, 6, 4), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(ResizeFlow, ScalesVectorComponents) {
  std::vector<real> fv(2 * 4 * 8);
  for (int i = 0; i < 4 * 8; ++i) fv[i] = 2.0;           // u
  for (int i = 0; i < 4 * 8; ++i) fv[4 * 8 + i] = -1.0;  // v
  Tensor flow = Tensor::from_data({1, 2, 4, 8}, fv);
  Tensor r = resize_flow(flow, 8, 4);  // halve width, double height
  for (int i = 0; i < 8 * 4; ++i) {
    EXPECT_NEAR(r.values()[i], 1.0, 1e-12);
    EXPECT_NEAR(r.values()[8 * 4 + i], -2.0, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Fourier transform
// ---------------------------------------------------------------------------

TEST(Fourier, MatchesDirectSummation) {
  Rng rng(41);
  for (auto [H, W] : std::vector<std::pair<int, int>>{{5, 7}, {8, 8}}) {
    Tensor x = rand_tensor({1, 1, H, W}, rng);
    Tensor f = dft2(x);
    std::vector<real> re, im;
    oracle::dft2(x.values(), H, W, re, im);
    for (int i = 0; i < H * W; ++i) {
      EXPECT_NEAR(f.values()[i], re[i], 1e-9);
      EXPECT_NEAR(f.values()[H * W + i], im[i], 1e-9);
    }
  }
}

TEST(Fourier, ParsevalHolds) {
  Rng rng(42);
  Tensor x = rand_tensor({2, 3, 9, 11}, rng);
  Tensor f = dft2(x);
  real ex = 0, ef = 0;
  for (real v : x.values()) ex += v * v;
  for (real v : f.values()) ef += v * v;
  EXPECT_NEAR(ex, ef, 1e-9);
}

TEST(Fourier, AmplitudeInvariantUnderCircularShift) {
  Rng rng(43);
  int H = 6, W = 10;
  Tensor x = rand_tensor({1, 1, H, W}, rng);
  std::vector<real> rolled(H * W);
  int dy = 2, dx = 3;
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx)
      rolled[((y + dy) % H) * W + (xx + dx) % W] = x.values()[y * W + xx];
  Tensor a1 = dft2_amplitude(x);
  Tensor a2 = dft2_amplitude(Tensor::from_data({1, 1, H, W}, rolled));
  EXPECT_LT(max_abs_diff(a1.values(), a2.values()), 1e-9);
}

TEST(Fourier, ConstantImageConcentratesAtDC) {
  Tensor x = Tensor::full({1, 1, 4, 6}, 2.0);
  Tensor a = dft2_amplitude(x);
  EXPECT_NEAR(a.values()[0], 2.0 * std::sqrt(4.0 * 6.0), 1e-9);
  for (int i = 1; i < 24; ++i) EXPECT_NEAR(a.values()[i], 0.0, 1e-9);
}

TEST(Fourier, Gradcheck) {
  Rng rng(44);
  Tensor x = rand_tensor({1, 1, 4, 5}, rng, true);
  std::vector<Parameter> ps{{"x", x}};
  Rng prng(45);
  auto fn = [&] {
    Rng r = prng;
    return project(dft2_amplitude(add_scalar(x, 3.0)), r);
  };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

TEST(Losses, L1MatchesLoopSum) {
  Rng rng(46);
  Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
  real want = 0;
  for (int i = 0; i < 12; ++i)
    want += std::abs(a.values()[i] - b.values()[i]);
  want /= 12;
  EXPECT_NEAR(l1_loss(a, b).item(), want, 1e-12);
}

TEST(Losses, MaskedL1NormalizesByMaskMass) {
  Rng rng(47);
  int N = 2, C = 3, H = 4, W = 5;
  Tensor p = rand_tensor({N, C, H, W}, rng);
  Tensor t = rand_tensor({N, C, H, W}, rng);
  std::vector<real> mv(N * H * W);
  for (real& m : mv) m = rng.uniform() < 0.4 ? 1.0 : 0.0;
  Tensor mask = Tensor::from_data({N, 1, H, W}, mv);
  real num = 0, den = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H * W; ++i) {
        num += mv[n * H * W + i] *
               std::abs(p.values()[(n * C + c) * H * W + i] -
                        t.values()[(n * C + c) * H * W + i]);
      }
  for (real m : mv) den += m;
  EXPECT_NEAR(masked_l1(p, t, mask).item(), num / std::max(den, 1e-8), 1e-12);
  // empty mask stays finite
  Tensor zmask = Tensor::zeros({N, 1, H, W});
  EXPECT_TRUE(std::isfinite(masked_l1(p, t, zmask).item()));
  EXPECT_DOUBLE_EQ(masked_l1(p, t, zmask).item(), 0.0);
}

TEST(Losses, MaskedL1Gradcheck) {
  Rng rng(48);
  Tensor p = rand_tensor({1, 2, 3, 4}, rng, true);
  Tensor t = rand_tensor({1, 2, 3, 4}, rng, true);
  std::vector<real> mv(12);
  for (real& m : mv) m = rng.uniform() < 0.5 ? 1.0 : 0.0;
  Tensor mask = Tensor::from_data({1, 1, 3, 4}, mv);
  std::vector<Parameter> ps{{"p", p}, {"t", t}};
  auto fn = [&] { return masked_l1(p, t, mask); };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

TEST(Losses, BceMatchesLoopAndGradchecks) {
  Rng rng(49);
  Tensor logits = rand_tensor({2, 5}, rng, true, -2.0, 2.0);
  Tensor target = rand_tensor({2, 5}, rng, false, 0.0, 1.0);
  Tensor prob = sigmoid(logits);
  real want = 0;
  for (int i = 0; i < 10; ++i) {
    real pp = std::clamp(prob.values()[i], 1e-6, 1.0 - 1e-6);
    real tt = target.values()[i];
    want += -tt * std::log(pp) - (1 - tt) * std::log(1 - pp);
  }
  want /= 10;
  EXPECT_NEAR(bce_loss(prob, target).item(), want, 1e-12);
  std::vector<Parameter> ps{{"logits", logits}};
  auto fn = [&] { return bce_loss(sigmoid(logits), target); };
  auto res = gradcheck(fn, ps, 1e-4);
  EXPECT_LT(res.max_rel_err, 1e-3) << res.worst;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

TEST(Adam, ConstantGradientHasClosedFormUpdates) {
  // With a constant gradient g the bias-corrected moments are exactly g and
  // g^2, so every step moves the parameter by lr * g / (|g| + eps).
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt(cfg);
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5});
  p.set_tracked(true);
  std::vector<Parameter> ps{{"p", p}};
  std::vector<real> g = {0.3, -1.2, 2.0};
  int steps = 7;
  for (int s = 0; s < steps; ++s) {
    p.zero_grad();
    Tensor gt = Tensor::from_data({3}, g);
    // route the fixed gradient through the tape: loss = sum(p * g_const)
    sum_all(mul(p, gt)).backward();
    opt.step(ps);
  }
  std::vector<real> want = {1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i)
    want[i] -= steps * cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.values()[i], want[i], 1e-9);
}

TEST(Adam, AbortsNamingParameterOnNonFinite) {
  Adam opt;
  Tensor p = Tensor::from_data({2}, {1.0, 2.0});
  p.set_tracked(true);
  p.zero_grad();
  p.node()->grad[1] = std::numeric_limits<real>::quiet_NaN();
  std::vector<Parameter> ps{{"enc.w", p}};
  try {
    opt.step(ps);
    FAIL() << "expected abort";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("enc.w"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Archive
// ---------------------------------------------------------------------------

TEST(Archive, RoundtripAndChecksum) {
  Archive a;
  a.put_tensor("w", {2, 3}, {1, 2, 3, 4, 5, 6});
  a.put_scalar("iter", 42.0);
  a.put_blob("note", std::string("hello\0world", 11));
  std::string bytes = a.to_bytes();
  Archive b = Archive::from_bytes(bytes);
  EXPECT_EQ(b.tensor_data("w"), (std::vector<real>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(b.at("w").shape, (Shape{2, 3}));
  EXPECT_DOUBLE_EQ(b.scalar("iter"), 42.0);
  EXPECT_EQ(b.blob("note").size(), 11u);
  EXPECT_THROW(b.at("missing"), std::runtime_error);

  std::string tampered = bytes;
  tampered[20] ^= 0x40;
  EXPECT_THROW(Archive::from_bytes(tampered), std::runtime_error);
}

TEST(Archive, BytesIndependentOfInsertionOrder) {
  Archive a, b;
  a.put_scalar("x", 1.0);
  a.put_scalar("y", 2.0);
  b.put_scalar("y", 2.0);
  b.put_scalar("x", 1.0);
  EXPECT_EQ(a.to_bytes(), b.to_bytes());
}

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

TEST(Rng, DeterministicAndSerializable) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  std::string state = a.serialize();
  std::vector<real> ahead;
  for (int i = 0; i < 50; ++i) ahead.push_back(a.normal());
  Rng c(999);
  c.deserialize(state);
  for (int i = 0; i < 50; ++i) EXPECT_DOUBLE_EQ(c.normal(), ahead[i]);
}

TEST(Rng, UniformBoundsAndMoments) {
  Rng rng(7);
  real sum = 0, sumsq = 0;
  int n = 200000;
  for (int i = 0; i < n; ++i) {
    real u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sumsq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 5e-3);
  EXPECT_NEAR(sumsq / n - 0.25, 1.0 / 12, 5e-3);
  real nsum = 0, nsq = 0;
  for (int i = 0; i < n; ++i) {
    real z = rng.normal();
    nsum += z;
    nsq += z * z;
  }
  EXPECT_NEAR(nsum / n, 0.0, 1e-2);
  EXPECT_NEAR(nsq / n, 1.0, 1e-2);
}

TEST(Rng, ForkedStreamsDiffer) {
  Rng a(5);
  Rng f1 = a.fork(1), f2 = a.fork(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += f1.next_u64() == f2.next_u64();
  EXPECT_EQ(same, 0);
}
