#include <gtest/gtest.h>

#include <filesystem>

#include "test_oracles.hpp"
#include "vinpaint/core/gradcheck.hpp"
#include "vinpaint/flowcomp/dataset.hpp"
#include "vinpaint/flowcomp/train.hpp"

using namespace vinpaint;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, real lo = -1.0, real hi = 1.0) {
  int64_t n = shape_numel(shape);
  std::vector<real> v(n);
  for (real& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
  real m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

void fill_zero(ParamBank& bank, const std::string& name) {
  Tensor t = bank.find(name);
  std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
}

SyntheticLafcConfig tiny_data_config() {
  SyntheticLafcConfig d;
  d.clips = 3;
  d.frames = 8;
  d.height = 16;
  d.width = 16;
  d.sprites = 1;
  d.seed = 400;
  return d;
}

LafcConfig tiny_net_config() {
  LafcConfig cfg;
  cfg.base_channels = 4;
  return cfg;
}

}  // namespace

TEST(LafcConfig, DefaultsAndValidation) {
  LafcConfig cfg;
  EXPECT_EQ(cfg.n, 1);
  EXPECT_EQ(cfg.interval, 3);
  EXPECT_EQ(cfg.sequence_length(), 3);
  EXPECT_EQ(cfg.base_channels, 32);
  EXPECT_DOUBLE_EQ(cfg.lambda_hole, 1.0);
  EXPECT_DOUBLE_EQ(cfg.lambda_valid, 1.0);
  EXPECT_DOUBLE_EQ(cfg.lambda_smooth, 0.5);
  EXPECT_DOUBLE_EQ(cfg.lambda_warp, 0.01);
  EXPECT_DOUBLE_EQ(cfg.lambda_edge, 1.0);
  cfg.validate();
  cfg.interval = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(P3D, ZeroWeightsGiveExactIdentity) {
  ParamBank bank;
  Rng rng(1);
  P3DBlock block(bank, "b", 6, 6, 0, rng);
  fill_zero(bank, "b.sc.w");
  fill_zero(bank, "b.tc.w");
  Tensor x = rand_tensor({2, 6, 3, 5, 7}, rng);
  Tensor y = block.forward(x);
  ASSERT_EQ(y.shape(), x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    ASSERT_EQ(y.values()[i], x.values()[i]);
}

TEST(P3D, ShrinkCollapsesToMiddleStep) {
  ParamBank bank;
  Rng rng(2);
  P3DBlock block(bank, "s", 4, 4, 3, rng);
  Tensor x = rand_tensor({1, 4, 3, 6, 6}, rng);
  Tensor y = block.forward(x);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 1, 6, 6}));
  // zero weights: the residual path carries the middle step through
  fill_zero(bank, "s.sc.w");
  fill_zero(bank, "s.tc.w");
  Tensor mid = slice(x, {0, 0, 1, 0, 0}, {1, 4, 1, 6, 6});
  EXPECT_EQ(max_abs_diff(block.forward(x), mid), 0.0);
  // built for T=3, so any other length is rejected
  EXPECT_THROW(block.forward(rand_tensor({1, 4, 5, 6, 6}, rng)),
               std::invalid_argument);
}

TEST(P3D, MatchesPerFrameCompositionOracle) {
  ParamBank bank;
  Rng rng(3);
  int C = 5, T = 4, H = 6, W = 7;
  P3DBlock block(bank, "c", C, C, 0, rng);
  Tensor x = rand_tensor({2, C, T, H, W}, rng);
  Tensor got = block.forward(x);

  // oracle: 2D convolution on each timestep, leaky relu, then an explicit
  // temporal convolution loop, plus the residual
  Tensor sc_w = bank.find("c.sc.w"), sc_b = bank.find("c.sc.b");
  Tensor tc_w = bank.find("c.tc.w"), tc_b = bank.find("c.tc.b");
  std::vector<Tensor> frames;
  for (int t = 0; t < T; ++t) {
    Tensor xt = reshape(slice(x, {0, 0, t, 0, 0}, {2, C, 1, H, W}),
                        {2, C, H, W});
    frames.push_back(leaky_relu(conv2d(xt, sc_w, sc_b, 1, 1)));
  }
  real m = 0;
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < C; ++oc)
      for (int t = 0; t < T; ++t)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) {
            real acc = tc_b.values()[oc];
            for (int ic = 0; ic < C; ++ic)
              for (int k = 0; k < 3; ++k) {
                int ts = t + k - 1;
                if (ts < 0 || ts >= T) continue;
                real w = tc_w.values()[(size_t)(oc * C + ic) * 3 + k];
                acc += w * frames[ts]
                               .values()[((size_t)(n * C + ic) * H + y) * W +
                                         xx];
              }
            acc += x.values()[(((size_t)(n * C + oc) * T + t) * H + y) * W +
                              xx];
            real g = got.values()[(((size_t)(n * C + oc) * T + t) * H + y) *
                                      W +
                                  xx];
            m = std::max(m, std::abs(acc - g));
          }
  EXPECT_LT(m, 1e-10);
}

TEST(P3D, ProjectionHandlesChannelChange) {
  ParamBank bank;
  Rng rng(4);
  P3DBlock block(bank, "p", 3, 5, 0, rng);
  Tensor x = rand_tensor({1, 3, 2, 4, 4}, rng);
  Tensor y = block.forward(x);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 2, 4, 4}));
}

TEST(LafcNet, OutputExtentsAndEdgeRange) {
  LafcNet net(tiny_net_config(), 11);
  Rng rng(5);
  Tensor x = rand_tensor({1, 3, 3, 16, 24}, rng);
  LafcOutput out = net.forward(x);
  EXPECT_EQ(out.flow.shape(), (Shape{1, 2, 16, 24}));
  EXPECT_EQ(out.edge.shape(), (Shape{1, 1, 16, 24}));
  for (real v : out.edge.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(net.forward(rand_tensor({1, 3, 5, 16, 24}, rng)),
               std::invalid_argument);
  EXPECT_THROW(net.forward(rand_tensor({1, 3, 3, 15, 24}, rng)),
               std::invalid_argument);
}

TEST(LafcNet, FreshNetworkPredictsZeroFlow) {
  LafcNet net(tiny_net_config(), 12);
  Rng rng(6);
  Tensor x = rand_tensor({1, 3, 3, 16, 16}, rng, -3.0, 3.0);
  LafcOutput out = net.forward(x);
  for (real v : out.flow.values()) ASSERT_EQ(v, 0.0);
}

TEST(LafcNet, EdgeHeadIsAPureBranch) {
  LafcNet net(tiny_net_config(), 13);
  Rng rng(7);
  Tensor x = rand_tensor({1, 3, 3, 16, 16}, rng);
  // give the flow branch nonzero output so the comparison is meaningful
  Tensor fw = net.params().find("flow.w");
  for (real& v : fw.values_mut()) v = rng.uniform(-0.1, 0.1);
  Tensor flow_before = net.forward(x).flow;
  Tensor edge_before = net.forward(x).edge;
  // rewriting the boundary head must not move the flow output at all
  Tensor ew = net.params().find("edge2.w");
  for (real& v : ew.values_mut()) v += rng.uniform(-0.5, 0.5);
  LafcOutput after = net.forward(x);
  EXPECT_EQ(max_abs_diff(after.flow, flow_before), 0.0);
  EXPECT_GT(max_abs_diff(after.edge, edge_before), 0.0);
}

TEST(FlowLosses, PerfectPredictionZeroesReconstruction) {
  Rng rng(8);
  int H = 8, W = 8;
  Tensor gt = rand_tensor({1, 2, H, W}, rng);
  std::vector<real> mvec((size_t)H * W, 0.0);
  for (int i = 20; i < 36; ++i) mvec[i] = 1.0;
  Tensor mask = Tensor::from_data({1, 1, H, W}, mvec);
  Tensor fa = rand_tensor({1, 3, H, W}, rng, 0, 1);
  Tensor fb = rand_tensor({1, 3, H, W}, rng, 0, 1);
  Tensor occ = Tensor::zeros({1, 1, H, W});
  Tensor edge_pred = Tensor::full({1, 1, H, W}, 0.5);
  Tensor edge_target = Tensor::zeros({1, 1, H, W});
  LafcConfig cfg;
  FlowLossTerms t = flow_losses(gt, gt, mask, fa, fb, occ, edge_pred,
                                edge_target, cfg);
  EXPECT_DOUBLE_EQ(t.hole.item(), 0.0);
  EXPECT_DOUBLE_EQ(t.valid.item(), 0.0);
  EXPECT_FALSE(t.empty_hole);
  EXPECT_FALSE(t.empty_valid);

  // constant prediction has zero smoothness
  Tensor flat = Tensor::full({1, 2, H, W}, 1.75);
  FlowLossTerms tf = flow_losses(flat, gt, mask, fa, fb, occ, edge_pred,
                                 edge_target, cfg);
  EXPECT_DOUBLE_EQ(tf.smooth.item(), 0.0);
}

TEST(FlowLosses, WeightedTotalMatchesManualSum) {
  Rng rng(9);
  int H = 8, W = 8;
  Tensor pred = rand_tensor({1, 2, H, W}, rng, -0.8, 0.8);
  Tensor gt = rand_tensor({1, 2, H, W}, rng, -0.8, 0.8);
  std::vector<real> mvec((size_t)H * W, 0.0);
  for (int i = 0; i < H * W; ++i) mvec[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  mvec[3] = 1.0;
  Tensor mask = Tensor::from_data({1, 1, H, W}, mvec);
  Tensor fa = rand_tensor({1, 3, H, W}, rng, 0, 1);
  Tensor fb = rand_tensor({1, 3, H, W}, rng, 0, 1);
  Tensor occ = Tensor::zeros({1, 1, H, W});
  Tensor ep = rand_tensor({1, 1, H, W}, rng, 0.1, 0.9);
  Tensor et = Tensor::zeros({1, 1, H, W});
  LafcConfig cfg;
  FlowLossTerms t = flow_losses(pred, gt, mask, fa, fb, occ, ep, et, cfg);
  real manual = 1.0 * t.hole.item() + 1.0 * t.valid.item() +
                0.5 * t.smooth.item() + 0.01 * t.warp_term.item() +
                1.0 * t.edge.item();
  EXPECT_NEAR(t.total.item(), manual, 1e-12);
}

TEST(FlowLosses, SmoothnessMatchesStencilOracle) {
  // small hand field, explicit stencils
  int H = 3, W = 3;
  std::vector<real> vals = {// u channel
                            0.0, 1.0, 4.0, 2.0, -1.0, 0.5, 3.0, 2.0, -2.0,
                            // v channel
                            1.0, 1.0, 1.0, 0.0, 2.0, -1.0, 0.5, 0.5, 0.5};
  Tensor f = Tensor::from_data({1, 2, H, W}, vals);
  real grad_sum = 0, lap_sum = 0;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        auto at = [&](int yy, int xx) {
          yy = std::clamp(yy, 0, H - 1);
          xx = std::clamp(xx, 0, W - 1);
          return vals[(size_t)(c * H + yy) * W + xx];
        };
        grad_sum += std::abs(at(y, x + 1) - at(y, x));
        grad_sum += std::abs(at(y + 1, x) - at(y, x));
        lap_sum += std::abs(at(y, x + 1) + at(y, x - 1) + at(y + 1, x) +
                            at(y - 1, x) - 4 * at(y, x));
      }
  real want = grad_sum / (2.0 * 2 * H * W) + lap_sum / (2.0 * H * W);
  EXPECT_NEAR(flow_smoothness(f).item(), want, 1e-12);
}

TEST(FlowLosses, DegenerateRegionsFlaggedWithZeroTerms) {
  Rng rng(10);
  int H = 8, W = 8;
  Tensor pred = rand_tensor({1, 2, H, W}, rng);
  Tensor gt = rand_tensor({1, 2, H, W}, rng);
  Tensor fa = rand_tensor({1, 3, H, W}, rng, 0, 1);
  Tensor fb = rand_tensor({1, 3, H, W}, rng, 0, 1);
  Tensor ep = Tensor::full({1, 1, H, W}, 0.5);
  Tensor et = Tensor::zeros({1, 1, H, W});
  LafcConfig cfg;

  Tensor no_hole = Tensor::zeros({1, 1, H, W});
  Tensor occ0 = Tensor::zeros({1, 1, H, W});
  FlowLossTerms a =
      flow_losses(pred, gt, no_hole, fa, fb, occ0, ep, et, cfg);
  EXPECT_TRUE(a.empty_hole);
  EXPECT_FALSE(a.empty_valid);
  EXPECT_DOUBLE_EQ(a.hole.item(), 0.0);

  Tensor all_hole = Tensor::full({1, 1, H, W}, 1.0);
  FlowLossTerms b =
      flow_losses(pred, gt, all_hole, fa, fb, occ0, ep, et, cfg);
  EXPECT_TRUE(b.empty_valid);
  EXPECT_DOUBLE_EQ(b.valid.item(), 0.0);

  Tensor occ1 = Tensor::full({1, 1, H, W}, 1.0);
  FlowLossTerms c =
      flow_losses(pred, gt, no_hole, fa, fb, occ1, ep, et, cfg);
  EXPECT_TRUE(c.all_occluded);
  EXPECT_DOUBLE_EQ(c.warp_term.item(), 0.0);
}

TEST(FlowLosses, FullObjectiveGradientCheck) {
  // Checked at a generic point: random data and random (nonzero) parameters.
  // Structured inputs can park activations exactly on a relu kink or a
  // sampling cell edge, where no unique derivative exists for a finite
  // difference to agree with.
  LafcConfig cfg = tiny_net_config();
  LafcNet net(cfg, 21);
  Rng rng(22);
  for (Parameter& p : net.params().params())
    for (real& v : p.tensor.values_mut()) v += rng.uniform(-0.05, 0.05);

  int H = 16, W = 16;
  LafcSample s;
  s.input = rand_tensor({1, 3, 3, H, W}, rng);
  s.gt_flow = rand_tensor({1, 2, H, W}, rng);
  std::vector<real> mvec((size_t)H * W);
  for (real& v : mvec) v = rng.uniform() < 0.25 ? 1.0 : 0.0;
  mvec[7] = 1.0;
  s.mask = Tensor::from_data({1, 1, H, W}, mvec);
  s.frame_a = rand_tensor({1, 3, H, W}, rng, 0.0, 1.0);
  s.frame_b = rand_tensor({1, 3, H, W}, rng, 0.0, 1.0);
  s.occ = Tensor::zeros({1, 1, H, W});
  std::vector<real> evec((size_t)H * W);
  for (real& v : evec) v = rng.uniform() < 0.1 ? 1.0 : 0.0;
  s.edge_target = Tensor::from_data({1, 1, H, W}, evec);

  auto fn = [&]() {
    LafcOutput out = net.forward(s.input);
    FlowLossTerms t = flow_losses(out.flow, s.gt_flow, s.mask, s.frame_a,
                                  s.frame_b, s.occ, out.edge, s.edge_target,
                                  net.config());
    return t.total;
  };
  GradCheckResult res = gradcheck(fn, net.params().params(), 1e-4, 4, 99);
  EXPECT_TRUE(res.ok(1e-3)) << res.worst << " rel err " << res.max_rel_err;
}

TEST(Train, OneIterationTouchesEveryParameter) {
  LafcNet net(tiny_net_config(), 31);
  std::vector<std::vector<real>> before;
  for (const Parameter& p : net.params().params())
    before.push_back(p.tensor.values());
  SyntheticLafcSource source(tiny_data_config());
  Adam opt(AdamConfig{});
  LafcTrainConfig tc;
  tc.iterations = 1;
  Rng rng(32);
  train_lafc(net, opt, tc, [&](Rng& r) { return source.sample(r); }, rng);
  const auto& params = net.params().params();
  for (size_t i = 0; i < params.size(); ++i) {
    real moved = 0;
    for (int64_t j = 0; j < params[i].tensor.numel(); ++j)
      moved = std::max(moved,
                       std::abs(params[i].tensor.values()[j] - before[i][j]));
    EXPECT_GT(moved, 0.0) << params[i].name << " did not move";
  }
}

TEST(Train, SameSeedSameCurve) {
  SyntheticLafcSource source(tiny_data_config());
  auto run = [&]() {
    LafcNet net(tiny_net_config(), 41);
    Adam opt(AdamConfig{});
    LafcTrainConfig tc;
    tc.iterations = 5;
    Rng rng(42);
    return train_lafc(net, opt, tc, [&](Rng& r) { return source.sample(r); },
                      rng);
  };
  LafcTrainResult a = run(), b = run();
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].total, b.curve[i].total);
    EXPECT_EQ(a.curve[i].hole, b.curve[i].hole);
    EXPECT_EQ(a.curve[i].edge, b.curve[i].edge);
  }
}

TEST(Train, CheckpointResumeIsBitwise) {
  SyntheticLafcSource source(tiny_data_config());
  auto src = [&](Rng& r) { return source.sample(r); };
  LafcTrainConfig tc;
  tc.iterations = 6;

  // uninterrupted run
  LafcNet net_a(tiny_net_config(), 51);
  Adam opt_a(AdamConfig{});
  Rng rng_a(52);
  LafcTrainResult full = train_lafc(net_a, opt_a, tc, src, rng_a);

  // interrupted at 3, checkpointed, resumed in fresh objects
  std::string path =
      (std::filesystem::temp_directory_path() / "vinpaint_lafc.ckpt").string();
  LafcNet net_b(tiny_net_config(), 51);
  Adam opt_b(AdamConfig{});
  Rng rng_b(52);
  LafcTrainResult first = train_lafc(net_b, opt_b, tc, src, rng_b, 0, 3);
  save_lafc_checkpoint(path, net_b, opt_b, rng_b, 3, first.curve);

  LafcNet net_c(tiny_net_config(), 999);  // different init, overwritten by load
  Adam opt_c(AdamConfig{});
  Rng rng_c(1);
  std::vector<LafcCurvePoint> curve;
  int resume = load_lafc_checkpoint(path, net_c, opt_c, rng_c, &curve);
  ASSERT_EQ(resume, 3);
  ASSERT_EQ(curve.size(), 3u);
  LafcTrainResult rest = train_lafc(net_c, opt_c, tc, src, rng_c, resume);
  for (const LafcCurvePoint& p : rest.curve) curve.push_back(p);

  ASSERT_EQ(curve.size(), full.curve.size());
  for (size_t i = 0; i < curve.size(); ++i)
    EXPECT_EQ(curve[i].total, full.curve[i].total) << "iteration " << i;
  const auto& pa = net_a.params().params();
  const auto& pc = net_c.params().params();
  for (size_t i = 0; i < pa.size(); ++i)
    EXPECT_EQ(max_abs_diff(pa[i].tensor, pc[i].tensor), 0.0) << pa[i].name;
  std::filesystem::remove(path);
}

TEST(Train, NonFiniteLossAbortsWithIteration) {
  LafcNet net(tiny_net_config(), 61);
  Tensor sb = net.params().find("stem.b");
  sb.values_mut()[0] = std::numeric_limits<real>::quiet_NaN();
  SyntheticLafcSource source(tiny_data_config());
  Adam opt(AdamConfig{});
  LafcTrainConfig tc;
  tc.iterations = 1;
  Rng rng(62);
  try {
    train_lafc(net, opt, tc, [&](Rng& r) { return source.sample(r); }, rng);
    FAIL() << "expected abort";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos);
  }
}

TEST(Train, MilestoneDefaultsToScheduleFraction) {
  LafcTrainConfig tc;
  tc.iterations = 2000;
  EXPECT_EQ(tc.milestone(), 857);  // 2000 * 120k / 280k
  tc.lr_milestone = 100;
  EXPECT_EQ(tc.milestone(), 100);
}

TEST(Dataset, SampleShapesAndDeterminism) {
  SyntheticLafcSource source(tiny_data_config());
  Rng r1(70), r2(70);
  LafcSample a = source.sample(r1);
  LafcSample b = source.sample(r2);
  EXPECT_EQ(a.input.shape(), (Shape{1, 3, 3, 16, 16}));
  EXPECT_EQ(a.gt_flow.shape(), (Shape{1, 2, 16, 16}));
  EXPECT_EQ(a.mask.shape(), (Shape{1, 1, 16, 16}));
  EXPECT_EQ(a.frame_a.shape(), (Shape{1, 3, 16, 16}));
  EXPECT_EQ(a.input.values(), b.input.values());
  EXPECT_EQ(a.gt_flow.values(), b.gt_flow.values());
  // mask channel binary and equal to the stored target mask on the middle step
  for (int i = 0; i < 16 * 16; ++i) {
    real m = a.input.values()[(size_t)(2 * 3 + 1) * 16 * 16 + i];
    EXPECT_TRUE(m == 0.0 || m == 1.0);
    EXPECT_EQ(m, a.mask.values()[i]);
  }
  // hole-filled input flows stay finite
  for (real v : a.input.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Dataset, EvalSetIsDisjointAndStable) {
  SyntheticLafcSource source(tiny_data_config());
  std::vector<LafcSample> e1 = source.fixed_eval(4);
  std::vector<LafcSample> e2 = source.fixed_eval(4);
  ASSERT_EQ(e1.size(), 4u);
  for (size_t i = 0; i < e1.size(); ++i)
    EXPECT_EQ(e1[i].gt_flow.values(), e2[i].gt_flow.values());
}

TEST(Composite, ValidRegionCopiedHolePredicted) {
  Rng rng(80);
  int H = 6, W = 6;
  Tensor pred = rand_tensor({1, 2, H, W}, rng);
  Tensor obs = rand_tensor({1, 2, H, W}, rng);
  std::vector<real> mvec((size_t)H * W, 0.0);
  for (int i = 10; i < 20; ++i) mvec[i] = 1.0;
  Tensor mask = Tensor::from_data({1, 1, H, W}, mvec);
  Tensor out = lafc_composite(pred, obs, mask);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < H * W; ++i) {
      real want = mvec[i] > 0.5 ? pred.values()[c * H * W + i]
                                : obs.values()[c * H * W + i];
      EXPECT_EQ(out.values()[c * H * W + i], want);
    }
}

TEST(TrainSmoke, ShortRunReducesLoss) {
  SyntheticLafcConfig d = tiny_data_config();
  d.clips = 8;
  SyntheticLafcSource source(d);
  LafcNet net(tiny_net_config(), 91);
  Adam opt(AdamConfig{.lr = 1e-3});
  LafcTrainConfig tc;
  tc.iterations = 120;
  Rng rng(92);
  LafcTrainResult res =
      train_lafc(net, opt, tc, [&](Rng& r) { return source.sample(r); }, rng);
  real head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += res.curve[i].total;
    tail += res.curve[res.curve.size() - 20 + i].total;
  }
  EXPECT_LT(tail, head * 0.8) << "head " << head / 20 << " tail " << tail / 20;
  // evaluation produces finite, sensible numbers
  LafcEval ev = eval_lafc(net, source.fixed_eval(4));
  EXPECT_TRUE(std::isfinite(ev.hole_epe_model));
  EXPECT_GT(ev.hole_epe_baseline, 0.0);
}
