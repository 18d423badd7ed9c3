#include <gtest/gtest.h>

#include <cmath>

#include "deepshield/diffcore/gradcheck.hpp"
#include "deepshield/diffcore/ops.hpp"
#include "deepshield/diffcore/optim.hpp"
#include "deepshield/errors.hpp"
#include "support/random.hpp"

using namespace deepshield;
using deepshield::testing::random_tensor;
using deepshield::testing::random_var;

namespace {

Var<double> constant(Shape shape, std::vector<double> data) { return Var<double>(Tensor<double>(shape, data)); }

// Straight nested-loop convolution, independent of the im2col path.
Tensor<double> reference_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                              std::size_t stride, std::size_t pad, bool depthwise) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor<double> out(Shape{n, k, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < k; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t ci = 0; ci < c; ++ci) {
            if (depthwise && ci != o) continue;
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                long yy = long(y * stride + i) - long(pad), xx = long(xo * stride + j) - long(pad);
                if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(wd)) continue;
                acc += x.at({b, ci, std::size_t(yy), std::size_t(xx)}) * w.at({o, depthwise ? 0 : ci, i, j});
              }
          }
          out.at({b, o, y, xo}) = acc;
        }
  return out;
}

// Scalar probe: sum(f(x) * R) for a fixed random R exercises the full Jacobian.
Var<double> probe(const Var<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::multiply(y, Var<double>(random_tensor(y.shape(), rng))));
}

void expect_near_all(const Tensor<double>& a, const Tensor<double>& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  Tensor<float> t(Shape{2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(Tensor<float>(Shape{2, 0}), DimensionError);
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(t.reshaped(Shape{4}), DimensionError);
}

TEST(Conv2d, WorkedExamples) {
  auto x = constant({1, 1, 2, 2}, {1, 2, 3, 4});
  auto w = constant({1, 1, 2, 2}, {1, 0, 0, 1});
  auto y = ops::conv2d(x, w, Var<double>(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 5.0);
}

TEST(Conv2d, IdentityKernelAndShapes) {
  std::mt19937_64 rng(2);
  auto img = random_var({1, 1, 4, 4}, rng, false);
  auto y = ops::conv2d(img, constant({1, 1, 1, 1}, {1.0}), Var<double>(), 1, 0);
  EXPECT_EQ(y.value(), img.value());

  auto big = Var<double>(Tensor<double>(Shape{1, 3, 64, 64}));
  auto w = Var<double>(Tensor<double>(Shape{8, 3, 3, 3}));
  EXPECT_EQ(ops::conv2d(big, w, Var<double>(), 2, 1).shape(), (Shape{1, 8, 32, 32}));
}

TEST(Conv2d, ChannelMismatchThrows) {
  Var<double> x(Tensor<double>(Shape{1, 2, 4, 4}));
  Var<double> w(Tensor<double>(Shape{1, 3, 3, 3}));
  EXPECT_THROW(ops::conv2d(x, w, Var<double>(), 1, 0), DimensionError);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(3);
  for (auto [stride, pad, kh] : {std::tuple{1u, 0u, 3u}, {2u, 1u, 3u}, {1u, 1u, 1u}, {2u, 2u, 5u}}) {
    auto x = random_var({2, 3, 7, 7}, rng, false);
    auto w = random_var({4, 3, kh, kh}, rng, false);
    auto b = random_var({4}, rng, false);
    auto y = ops::conv2d(x, w, b, stride, pad);
    auto bias = b.value();
    expect_near_all(y.value(), reference_conv(x.value(), w.value(), &bias, stride, pad, false), 1e-12);
  }
}

TEST(DepthwiseConv2d, WorkedExamples) {
  auto x = constant({1, 2, 2, 2}, {1, 1, 1, 1, 2, 2, 2, 2});
  auto w = constant({2, 1, 2, 2}, {1, 1, 1, 1, 1, 1, 1, 1});
  auto y = ops::depthwise_conv2d(x, w, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(y.value()[0], 4.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 8.0);

  std::mt19937_64 rng(4);
  auto img = random_var({1, 3, 4, 4}, rng, false);
  auto ones = Var<double>(Tensor<double>(Shape{3, 1, 1, 1}, 1.0));
  EXPECT_EQ(ops::depthwise_conv2d(img, ones, 1, 0).value(), img.value());

  Var<double> z(Tensor<double>(Shape{1, 4, 8, 8}));
  Var<double> k3(Tensor<double>(Shape{4, 1, 3, 3}));
  EXPECT_EQ(ops::depthwise_conv2d(z, k3, 2, 1).shape(), (Shape{1, 4, 4, 4}));
  Var<double> wrong(Tensor<double>(Shape{3, 1, 3, 3}));
  EXPECT_THROW(ops::depthwise_conv2d(z, wrong, 1, 1), DimensionError);
}

TEST(DepthwiseConv2d, MatchesNestedLoopOracleAndChannelLocality) {
  std::mt19937_64 rng(5);
  auto x = random_var({2, 3, 6, 6}, rng, false);
  auto w = random_var({3, 1, 3, 3}, rng, false);
  auto y = ops::depthwise_conv2d(x, w, 2, 1);
  expect_near_all(y.value(), reference_conv(x.value(), w.value(), nullptr, 2, 1, true), 1e-12);

  // Perturbing channel 1 leaves channels 0 and 2 untouched.
  Tensor<double> x2 = x.value();
  for (std::size_t i = 0; i < 36; ++i) x2[36 + i] += 1.0;
  auto y2 = ops::depthwise_conv2d(Var<double>(x2), w, 2, 1);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(y.value()[i], y2.value()[i]);
    EXPECT_EQ(y.value()[18 + i], y2.value()[18 + i]);
  }
}

TEST(Linear, WorkedExamples) {
  auto x = constant({1, 2}, {1, 2});
  auto w = constant({2, 2}, {1, 1, 1, -1});
  auto b = constant({2}, {0, 0});
  auto y = ops::linear(x, w, b);
  EXPECT_DOUBLE_EQ(y.value()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.value()[1], -1.0);

  std::mt19937_64 rng(6);
  auto in = random_var({3, 4}, rng, false);
  Tensor<double> eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  EXPECT_EQ(ops::linear(in, Var<double>(eye), Var<double>(Tensor<double>(Shape{4}))).value(), in.value());

  Var<double> batch(Tensor<double>(Shape{2, 5, 8}));
  Var<double> w16(Tensor<double>(Shape{16, 8}));
  EXPECT_EQ(ops::linear(batch, w16, Var<double>()).shape(), (Shape{2, 5, 16}));
  Var<double> w_bad(Tensor<double>(Shape{16, 7}));
  EXPECT_THROW(ops::linear(batch, w_bad, Var<double>()), DimensionError);
}

TEST(Normalize, WorkedExamples) {
  auto one = Var<double>(Tensor<double>(Shape{2}, 1.0));
  auto zero = Var<double>(Tensor<double>(Shape{2}));
  auto constant_in = constant({1, 2}, {3, 3});
  auto y = ops::normalize(ops::NormKind::layer, constant_in, one, zero, 1e-5);
  EXPECT_DOUBLE_EQ(y.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.0);

  auto pair = constant({1, 2}, {1, 3});
  y = ops::normalize(ops::NormKind::layer, pair, one, zero, 1e-5);
  // var = 1, so (x - 2) / sqrt(1 + 1e-5)
  EXPECT_NEAR(y.value()[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-12);
  EXPECT_NEAR(y.value()[1], 1.0 / std::sqrt(1.0 + 1e-5), 1e-12);

  auto c = constant({2}, {0.7, 0.7});
  y = ops::normalize(ops::NormKind::layer, pair, zero, c, 1e-5);
  EXPECT_DOUBLE_EQ(y.value()[0], 0.7);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.7);

  EXPECT_THROW(ops::normalize(ops::NormKind::layer, pair, one, zero, 0.0), ConfigError);
  EXPECT_THROW(ops::normalize(ops::NormKind::batch, pair, one, zero, -1.0), ConfigError);
}

TEST(Normalize, TrainingModeStandardizesEachGroup) {
  std::mt19937_64 rng(7);
  auto x = random_var({4, 3, 5, 5}, rng, false, -3.0, 5.0);
  Var<double> g(Tensor<double>(Shape{3}, 1.0)), b(Tensor<double>(Shape{3}));
  Tensor<double> rm(Shape{3}), rv(Shape{3}, 1.0);
  auto y = ops::batch_norm(x, g, b, ops::RunningStats<double>{&rm, &rv, 0.1}, true, 1e-5);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) m += y.value()[(n * 3 + ch) * 25 + i];
    m /= 100;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) v += std::pow(y.value()[(n * 3 + ch) * 25 + i] - m, 2);
    v /= 100;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-3);
    EXPECT_NE(rm[ch], 0.0) << "running mean should move in training mode";
  }
  // Inference mode reads the running statistics and leaves them alone.
  Tensor<double> rm_before = rm;
  ops::batch_norm(x, g, b, ops::RunningStats<double>{&rm, &rv, 0.1}, false, 1e-5);
  EXPECT_EQ(rm, rm_before);
}

TEST(Activation, WorkedExamples) {
  auto zero = constant({1}, {0.0});
  EXPECT_DOUBLE_EQ(ops::sigmoid(zero).value()[0], 0.5);
  auto r = ops::activation(ops::Activation::relu, constant({2}, {-1, 2}));
  EXPECT_DOUBLE_EQ(r.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(r.value()[1], 2.0);
  auto s = ops::activation(ops::Activation::silu, constant({1}, {1.0}));
  EXPECT_NEAR(s.value()[0], 0.731059, 1e-6);
  auto sat = ops::sigmoid(constant({2}, {-800.0, 800.0}));
  EXPECT_GT(sat.value()[0], -1e-300);
  EXPECT_TRUE(sat.value().all_finite());
}

TEST(Softmax, WorkedExamplesAndInvariants) {
  auto y = ops::softmax(constant({2}, {0, 0}), 0);
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  y = ops::softmax(constant({2}, {std::log(2.0), 0}), 0);
  EXPECT_NEAR(y.value()[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.value()[1], 1.0 / 3.0, 1e-15);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_var({3, 4, 5}, rng, false, -20.0, 20.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto a = ops::softmax(x, axis);
      Tensor<double> shifted = x.value();
      for (auto& v : shifted.data()) v += 100.0;
      auto b = ops::softmax(Var<double>(shifted), axis);
      expect_near_all(a.value(), b.value(), 1e-6);
      auto sums = ops::mean(a, axis).value();
      for (auto v : sums.data()) EXPECT_NEAR(v * double(x.dim(axis)), 1.0, 1e-6);
      for (auto v : a.value().data()) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Attention, SingleKeyAndUniformAttention) {
  std::mt19937_64 rng(9);
  const std::size_t d = 4;
  ops::AttentionParams<double> p;
  p.wq = random_var({d, d}, rng, false);
  p.wk = random_var({d, d}, rng, false);
  p.wv = random_var({d, d}, rng, false);
  p.wo = random_var({d, d}, rng, false);
  p.bq = p.bk = p.bv = p.bo = Var<double>(Tensor<double>(Shape{d}));

  auto q = random_var({2, 3, d}, rng, false);
  auto kv = random_var({2, 1, d}, rng, false);
  auto out = ops::multi_head_attention(q, kv, p, 2);
  auto expected = ops::linear(ops::linear(kv, p.wv, p.bv), p.wo, p.bo);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t k = 0; k < d; ++k)
        EXPECT_NEAR(out.value().at({n, t, k}), expected.value().at({n, 0, k}), 1e-12);

  Tensor<double> eye(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) eye.at({i, i}) = 1.0;
  p.wq = p.wk = Var<double>(Tensor<double>(Shape{d, d}));
  p.wv = p.wo = Var<double>(eye);
  auto kv5 = random_var({2, 5, d}, rng, false);
  out = ops::multi_head_attention(q, kv5, p, 2);
  auto avg = ops::mean(kv5, 1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(out.value().at({n, t, k}), avg.value().at({n, 0, k}), 1e-12);
}

TEST(Attention, ShapesAndHeadDivisibility) {
  const std::size_t d = 8;
  ops::AttentionParams<double> p;
  p.wq = p.wk = p.wv = p.wo = Var<double>(Tensor<double>(Shape{d, d}));
  p.bq = p.bk = p.bv = p.bo = Var<double>(Tensor<double>(Shape{d}));
  Var<double> q(Tensor<double>(Shape{2, 3, d})), kv(Tensor<double>(Shape{2, 5, d}));
  EXPECT_EQ(ops::multi_head_attention(q, kv, p, 2).shape(), (Shape{2, 3, 8}));
  EXPECT_THROW(ops::multi_head_attention(q, kv, p, 3), ConfigError);
}

TEST(BceLoss, WorkedExamples) {
  auto l = ops::bce_loss(constant({1}, {0.5}), Tensor<double>(Shape{1}, 1.0));
  EXPECT_NEAR(l.value()[0], 0.693147, 1e-6);
  l = ops::bce_loss(constant({1}, {0.9}), Tensor<double>(Shape{1}, 0.0));
  EXPECT_NEAR(l.value()[0], 2.302585, 1e-6);

  // Clamp boundary: finite, and equal to -ln(1 - eps) at each precision.
  l = ops::bce_loss(constant({1}, {1.0}), Tensor<double>(Shape{1}, 1.0));
  EXPECT_NEAR(l.value()[0], -std::log1p(-1e-7), 1e-15);
  Var<float> pf(Tensor<float>(Shape{1}, 1.0f));
  auto lf = ops::bce_loss(pf, Tensor<float>(Shape{1}, 1.0f));
  EXPECT_TRUE(std::isfinite(lf.value()[0]));
  EXPECT_NEAR(lf.value()[0], 1.19e-7f, 0.01e-7f);

  EXPECT_THROW(ops::bce_loss(constant({1}, {0.3}), Tensor<double>(Shape{1}, 2.0)), InputError);
}

TEST(BceLoss, NonNegativeAndZeroOnlyAtClampedPerfection) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double p = u(rng), y = (i % 2) ? 1.0 : 0.0;
    EXPECT_GE(ops::bce_loss(constant({1}, {p}), Tensor<double>(Shape{1}, y)).value()[0], 0.0);
  }
  auto perfect = ops::bce_loss(constant({2}, {1.0, 0.0}), Tensor<double>(Shape{2}, std::vector<double>{1.0, 0.0}));
  EXPECT_LT(perfect.value()[0], 2e-7);
  EXPECT_GT(perfect.value()[0], 0.0);
}

TEST(Backward, AnalyticSquareSum) {
  Var<double> x(Tensor<double>(Shape{3}, std::vector<double>{1, 2, 3}), true);
  auto z = ops::sum(ops::multiply(x, x));
  backward(z);
  EXPECT_EQ(x.grad(), Tensor<double>(Shape{3}, std::vector<double>({2, 4, 6})));

  Var<double> unused(Tensor<double>(Shape{2}, 1.0), true);
  auto z2 = ops::sum(ops::add(ops::multiply(x, x), ops::scale(ops::sum(unused), 0.0)));
  unused.zero_grad();
  backward(z2);
  ASSERT_TRUE(unused.has_grad());
  for (auto g : unused.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, RepeatedCallsAccumulateExactlyTwice) {
  std::mt19937_64 rng(11);
  auto x = random_var({3, 4}, rng);
  auto w = random_var({2, 4}, rng);
  auto loss = ops::sum(ops::activation(ops::Activation::gelu, ops::linear(x, w, Var<double>())));
  backward(loss);
  Tensor<double> once = w.grad();
  backward(loss);
  for (std::size_t i = 0; i < once.numel(); ++i) EXPECT_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backward, RejectsNonScalar) {
  Var<double> x(Tensor<double>(Shape{3}), true);
  EXPECT_THROW(backward(ops::scale(x, 2.0)), ContractError);
}

TEST(Backward, TapeVisitsEachRecordOnce) {
  Var<double> x(Tensor<double>(Shape{2}, 1.5), true);
  auto y = ops::multiply(x, x);
  auto z = ops::sum(ops::add(y, y));
  auto tape = Tape<double>::record(z);
  EXPECT_EQ(tape.size(), 4u);  // x, y, add, sum
  EXPECT_EQ(tape.records().back(), z.node().get());
  backward(z, tape);
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Sgd, WorkedExamples) {
  ParameterStore<double> ps;
  auto w = ps.add("w", Tensor<double>(Shape{1}, 1.0));
  w.mutable_grad()[0] = 0.5;
  Sgd<double>(SgdConfig{}).step(ps);
  EXPECT_DOUBLE_EQ(ps.at("w").value()[0], 0.995);
  EXPECT_DOUBLE_EQ(ps.at("w").grad()[0], 0.5) << "step must not touch gradients";

  w.zero_grad();
  Sgd<double>(SgdConfig{}).step(ps);
  EXPECT_DOUBLE_EQ(ps.at("w").value()[0], 0.995);

  ParameterStore<double> ps2;
  auto m = ps2.add("m", Tensor<double>(Shape{1}, 0.0));
  m.mutable_grad()[0] = 1.0;
  Sgd<double> opt(SgdConfig{0.1, 0.9, 0.0});
  opt.step(ps2);
  EXPECT_NEAR(m.value()[0], -0.1, 1e-15);
  opt.step(ps2);
  EXPECT_NEAR(m.value()[0], -0.29, 1e-15);
}

TEST(Sgd, ZeroLearningRateIsIdentityAndMissingGradThrows) {
  std::mt19937_64 rng(12);
  ParameterStore<double> ps;
  auto a = ps.add("a", random_tensor({3, 3}, rng));
  ps.add("buffer", Tensor<double>(Shape{2}), false);
  Tensor<double> before = a.value();
  EXPECT_THROW(Sgd<double>(SgdConfig{0.0}).step(ps), ContractError);
  a.mutable_grad().fill(3.0);
  Sgd<double>(SgdConfig{0.0, 0.5, 0.1}).step(ps);
  EXPECT_EQ(a.value(), before);
  EXPECT_THROW(Sgd<double>(SgdConfig{-1.0}), ConfigError);
}

TEST(ShapeOps, WorkedExamples) {
  std::mt19937_64 rng(13);
  auto x = random_var({1, 4}, rng, false);
  EXPECT_EQ(ops::reshape(ops::reshape(x, {2, 2}), {1, 4}).value(), x.value());

  auto fm = constant({1, 2, 2, 2}, {1, 2, 3, 4, 0, 0, 0, 4});
  auto pooled = ops::global_avg_pool2d(fm);
  EXPECT_DOUBLE_EQ(pooled.value()[0], 2.5);
  EXPECT_DOUBLE_EQ(pooled.value()[1], 1.0);

  Var<double> a(Tensor<double>(Shape{2, 3, 8})), b(Tensor<double>(Shape{2, 5, 8}));
  EXPECT_EQ(ops::concat<double>({a, b}, 1).shape(), (Shape{2, 8, 8}));
  Var<double> c(Tensor<double>(Shape{2, 5, 7}));
  EXPECT_THROW(ops::concat<double>({a, c}, 1), DimensionError);
  EXPECT_THROW(ops::add(a, b), DimensionError);
}

TEST(ShapeOps, ConcatPreservesOperandOrder) {
  auto a = constant({1, 2}, {1, 2});
  auto b = constant({1, 1}, {3});
  auto c = ops::concat<double>({a, b}, 1);
  EXPECT_EQ(c.value(), Tensor<double>(Shape{1, 3}, std::vector<double>({1, 2, 3})));
  auto s = ops::slice(c, 1, 1, 2);
  EXPECT_EQ(s.value(), Tensor<double>(Shape{1, 2}, std::vector<double>({2, 3})));
}

// ---------------------------------------------------------------------------
// Finite-difference checks: every differentiable op, 5 seeds, 2 shapes each.

class OpGradCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradCheck, AllOpsMatchCentralDifferences) {
  const std::uint64_t seed = GetParam();
  std::mt19937_64 rng(seed);
  constexpr double kTol = 1e-4;
  auto check = [&](const char* name, auto build, std::vector<Var<double>> params) {
    double err = grad_check([&] { return probe(build(), seed); }, params, 1e-5);
    EXPECT_LT(err, kTol) << name << " seed " << seed;
  };

  for (Shape xs : {Shape{1, 2, 5, 5}, Shape{2, 3, 6, 4}}) {
    auto x = random_var(xs, rng);
    auto w = random_var({3, xs[1], 3, 3}, rng);
    auto b = random_var({3}, rng);
    check("conv2d", [&] { return ops::conv2d(x, w, b, 2, 1); }, {x, w, b});
    auto w1 = random_var({2, xs[1], 1, 1}, rng);
    check("conv2d_pointwise", [&] { return ops::conv2d(x, w1, Var<double>(), 1, 0); }, {x, w1});
    auto dw = random_var({xs[1], 1, 3, 3}, rng);
    check("depthwise_conv2d", [&] { return ops::depthwise_conv2d(x, dw, 1, 1); }, {x, dw});
    auto g = random_var({xs[1]}, rng), s = random_var({xs[1]}, rng);
    check("batch_norm", [&] { return ops::batch_norm(x, g, s, {}, true, 1e-5); }, {x, g, s});
    check("global_avg_pool2d", [&] { return ops::global_avg_pool2d(x); }, {x});
  }
  for (Shape xs : {Shape{3, 4}, Shape{2, 3, 5}}) {
    const std::size_t d = xs.back();
    auto x = random_var(xs, rng);
    auto w = random_var({6, d}, rng), b = random_var({6}, rng);
    check("linear", [&] { return ops::linear(x, w, b); }, {x, w, b});
    auto g = random_var({d}, rng), s = random_var({d}, rng);
    check("layer_norm", [&] { return ops::layer_norm(x, g, s, 1e-5); }, {x, g, s});
    for (auto kind : {ops::Activation::sigmoid, ops::Activation::silu, ops::Activation::gelu, ops::Activation::relu}) {
      check("activation", [&] { return ops::activation(kind, x); }, {x});
    }
    check("softmax", [&] { return ops::softmax(x, 0); }, {x});
    check("softmax_last", [&] { return ops::softmax(x, xs.size() - 1); }, {x});
    auto y = random_var(xs, rng);
    check("add", [&] { return ops::add(x, y); }, {x, y});
    check("multiply", [&] { return ops::multiply(x, y); }, {x, y});
    auto row = random_var({d}, rng);
    check("add_broadcast", [&] { return ops::add(x, row); }, {x, row});
    check("multiply_broadcast", [&] { return ops::multiply(x, row); }, {x, row});
    check("mean", [&] { return ops::mean(x, 0); }, {x});
    check("transpose_last_two", [&] { return ops::transpose_last_two(x); }, {x});
    check("concat", [&] { return ops::concat<double>({x, y}, 0); }, {x, y});
    check("slice", [&] { return ops::slice(x, xs.size() - 1, 1, 2); }, {x});
    check("reshape", [&] { return ops::reshape(x, {x.numel()}); }, {x});
    auto m = random_var({d, 3}, rng);
    check("matmul", [&] { return ops::matmul(x, m); }, {x, m});
    auto p = random_var(xs, rng, true, 0.05, 0.95);
    Tensor<double> labels(xs);
    for (std::size_t i = 0; i < labels.numel(); ++i) labels[i] = double(i % 2);
    check("bce_loss", [&] { return ops::bce_loss(p, labels); }, {p});
  }
  for (auto [tq, tkv] : {std::pair{1u, 3u}, {3u, 5u}}) {
    const std::size_t d = 4;
    auto q = random_var({2, tq, d}, rng), kv = random_var({2, tkv, d}, rng);
    ops::AttentionParams<double> ap{random_var({d, d}, rng), random_var({d}, rng), random_var({d, d}, rng),
                                    random_var({d}, rng),    random_var({d, d}, rng), random_var({d}, rng),
                                    random_var({d, d}, rng), random_var({d}, rng)};
    check("multi_head_attention", [&] { return ops::multi_head_attention(q, kv, ap, 2); },
          {q, kv, ap.wq, ap.bq, ap.wk, ap.bk, ap.wv, ap.bv, ap.wo, ap.bo});
    auto bm = random_var({2, d, tkv}, rng);
    check("matmul_batched", [&] { return ops::matmul(q, bm); }, {q, bm});
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradCheck, ::testing::Values(1, 2, 3, 4, 5));

TEST(GradCheck, WorkedExamples) {
  Var<double> x(Tensor<double>(Shape{1}, 3.0), true);
  EXPECT_LT(grad_check([&] { return ops::multiply(x, x); }, {x}, 1e-5), 1e-8);

  std::mt19937_64 rng(14);
  auto in = random_var({4, 8}, rng);
  auto w = random_var({1, 8}, rng), b = random_var({1}, rng);
  Tensor<double> labels(Shape{4, 1}, std::vector<double>{1, 0, 1, 0});
  EXPECT_LT(grad_check([&] { return ops::bce_loss(ops::sigmoid(ops::linear(in, w, b)), labels); }, {in, w, b}, 1e-5),
            1e-4);

  Var<double> c(Tensor<double>(Shape{2}, 1.0), true);
  EXPECT_EQ(grad_check([&] { return Var<double>(Tensor<double>::scalar(4.0)); }, {c}, 1e-5), 0.0);
  EXPECT_THROW(grad_check([&] { return ops::scale(c, 2.0); }, {c}, 1e-5), ContractError);
}

TEST(GradCheck, DetectsTamperedGradient) {
  Var<double> x(Tensor<double>(Shape{1}, 3.0), true);
  double err = grad_check([&] { return ops::multiply(x, x); }, {x}, 1e-5,
                          [](std::vector<Tensor<double>>& g) { g[0][0] += 1.0; });
  EXPECT_GT(err, 0.1);
}

TEST(Fuzz, OpsStayFiniteWithinPreconditions) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 40; ++trial) {
    auto x = random_var<float>({2, 3, 8, 8}, rng, false, -50.0, 50.0);
    auto w = random_var<float>({4, 3, 3, 3}, rng, false, -5.0, 5.0);
    auto y = ops::conv2d(x, w, Var<float>(), 2, 1);
    Var<float> g(Tensor<float>(Shape{4}, 1.0f)), s(Tensor<float>(Shape{4}));
    y = ops::batch_norm(y, g, s, {}, true, 1e-5f);
    for (auto k : {ops::Activation::sigmoid, ops::Activation::silu, ops::Activation::gelu, ops::Activation::relu}) {
      EXPECT_TRUE(ops::activation(k, y).value().all_finite());
    }
    auto seq = random_var<float>({2, 6, 8}, rng, false, -1e3, 1e3);
    EXPECT_TRUE(ops::softmax(seq, 2).value().all_finite());
    Var<float> lg(Tensor<float>(Shape{8}, 1.0f)), ls(Tensor<float>(Shape{8}));
    EXPECT_TRUE(ops::layer_norm(seq, lg, ls, 1e-5f).value().all_finite());
    auto p = ops::sigmoid(random_var<float>({6}, rng, false, -100.0, 100.0));
    EXPECT_TRUE(ops::bce_loss(p, Tensor<float>(Shape{6}, 1.0f)).value().all_finite());
  }
}
