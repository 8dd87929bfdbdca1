#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "problist/numerics/adam.hpp"
#include "problist/numerics/grad_check.hpp"
#include "problist/numerics/ops.hpp"
#include "problist/numerics/tensor.hpp"

using namespace problist;
using namespace problist::numerics;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor2 t(r, c);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

// Nested-loop convolution in channel-major notation: X is d_e x N.
std::vector<std::vector<double>> conv_oracle(const std::vector<std::vector<double>>& x_cm,
                                             const Tensor2& w, const std::vector<double>& b, int k,
                                             bool use_tanh) {
  const std::size_t de = x_cm.size(), n = x_cm[0].size(), df = w.rows();
  std::vector<std::vector<double>> out(df, std::vector<double>(n));
  for (std::size_t f = 0; f < df; ++f)
    for (std::size_t t = 0; t < n; ++t) {
      double z = b[f];
      for (int j = 0; j < k; ++j)
        for (std::size_t c = 0; c < de; ++c) {
          const double xv = t + j < n ? x_cm[c][t + j] : 0.0;
          z += w(f, static_cast<std::size_t>(j) * de + c) * xv;
        }
      out[f][t] = use_tanh ? std::tanh(z) : z;
    }
  return out;
}

}  // namespace

TEST(Conv1d, WidthOneLinearIsMatrixProduct) {
  Tensor2 x{{1, 2}, {3, 4}, {5, 6}};  // N=3, d_e=2
  Tensor2 w{{1, 0}, {0, 1}, {1, 1}};  // d_f=3
  std::vector<double> b(3, 0.0);
  auto out = conv1d_same(x, w, b, 1, Activation::linear);
  ASSERT_EQ(out.rows(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(out(t, 0), x(t, 0));
    EXPECT_EQ(out(t, 1), x(t, 1));
    EXPECT_EQ(out(t, 2), x(t, 0) + x(t, 1));
  }
}

TEST(Conv1d, ZeroInputGivesActivatedBias) {
  Tensor2 x(5, 4);
  Rng rng(3);
  Tensor2 w = random_tensor(2, 12, rng);
  std::vector<double> b = {0.3, -0.7};
  auto out = conv1d_same(x, w, b, 3);
  for (std::size_t t = 0; t < 5; ++t) {
    EXPECT_DOUBLE_EQ(out(t, 0), std::tanh(0.3));
    EXPECT_DOUBLE_EQ(out(t, 1), std::tanh(-0.7));
  }
}

TEST(Conv1d, MatchesNestedLoopOracle) {
  Rng rng(11);
  for (int k = 1; k <= 3; ++k) {
    const std::size_t de = 3, n = 5, df = 4;
    Tensor2 x = random_tensor(n, de, rng);
    Tensor2 w = random_tensor(df, k * de, rng);
    std::vector<double> b(df);
    for (double& v : b) v = rng.uniform(-1, 1);
    std::vector<std::vector<double>> x_cm(de, std::vector<double>(n));
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < de; ++c) x_cm[c][t] = x(t, c);
    for (bool use_tanh : {false, true}) {
      auto expect = conv_oracle(x_cm, w, b, k, use_tanh);
      auto got = conv1d_same(x, w, b, k, use_tanh ? Activation::tanh : Activation::linear);
      for (std::size_t f = 0; f < df; ++f)
        for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(got(t, f), expect[f][t], 1e-12);
    }
  }
}

TEST(Conv1d, WidthLargerThanSequenceIsPadded) {
  Tensor2 x{{1.0}};
  Tensor2 w{{2.0, 5.0, 7.0}};
  std::vector<double> b{0.0};
  auto out = conv1d_same(x, w, b, 3, Activation::linear);
  EXPECT_EQ(out.rows(), 1u);
  EXPECT_DOUBLE_EQ(out(0, 0), 2.0);
}

TEST(Conv1d, RejectsNonPositiveWidth) {
  Tensor2 x(2, 2), w(1, 0);
  std::vector<double> b{0.0};
  EXPECT_THROW(conv1d_same(x, w, b, 0), std::invalid_argument);
}

TEST(Conv1d, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  const std::size_t n = 4, de = 3, df = 2;
  const int k = 3;
  Tensor2 x = random_tensor(n, de, rng);
  Tensor2 upstream = random_tensor(n, df, rng);
  ParamSet p;
  p.add("w", random_tensor(df, k * de, rng));
  p.add("b", random_tensor(1, df, rng));
  p.add("x", x);
  auto loss = [&](const ParamSet& ps, ParamSet* grad) {
    auto out = conv1d_same(ps["x"], ps["w"], ps["b"].row(0), k);
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += out.values()[i] * upstream.values()[i];
    if (grad) {
      grad->set_zero();
      conv1d_same_backward(ps["x"], ps["w"], k, out, upstream, (*grad)["w"], (*grad)["b"].row(0),
                           &(*grad)["x"]);
    }
    return l;
  };
  auto res = grad_check(loss, p);
  EXPECT_LT(res.max_relative_error, 1e-7) << res.worst_group << "[" << res.worst_index << "]";
}

TEST(Softmax, UniformOnZeros) {
  std::vector<double> z(4, 0.0);
  auto p = softmax(z);
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, ShiftInvariant) {
  std::vector<double> v{0.3, -1.2, 2.5, 0.0};
  auto a = softmax(v);
  for (double& x : v) x += 123.0;
  auto b = softmax(v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Softmax, MatchesDirectFormula) {
  std::vector<double> v{1, 2, 3};
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  auto p = softmax(v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], std::exp(v[i]) / z, 1e-12);
}

TEST(Softmax, MaskedPositionsAreExactlyZero) {
  std::vector<double> v{5, 1, 2, 9};
  bool mask[] = {false, true, false, true};
  auto p = softmax(v, mask);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(p[3], 0.0);
  EXPECT_NEAR(p[0] + p[2], 1.0, 1e-15);
  EXPECT_GT(p[0], 0.0);
}

TEST(Softmax, AllMaskedThrows) {
  std::vector<double> v{1, 2};
  bool mask[] = {true, true};
  EXPECT_THROW(softmax(v, mask), std::invalid_argument);
}

TEST(Softmax, LargeInputsStayFinite) {
  std::vector<double> v{1000, 1001, -1000};
  auto p = softmax(v);
  for (double x : p) EXPECT_TRUE(std::isfinite(x));
}

TEST(Bce, HalfIsLog2) { EXPECT_NEAR(bce(0.5, 1.0), std::log(2.0), 1e-15); }

TEST(Bce, PerfectPredictionIsEpsilonLevel) {
  EXPECT_LT(bce(1.0, 1.0), 2e-7);
  EXPECT_LT(bce(0.0, 0.0), 2e-7);
  EXPECT_TRUE(std::isfinite(bce(0.0, 1.0)));
}

TEST(Bce, RandomPairsMatchFormula) {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform(0.01, 0.99);
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    EXPECT_NEAR(bce(p, y), -(y * std::log(p) + (1 - y) * std::log(1 - p)), 1e-12);
  }
}

TEST(Bce, LogitFormAgreesWithProbabilityForm) {
  for (double s : {-8.0, -1.5, 0.0, 0.7, 6.0})
    for (double y : {0.0, 1.0}) EXPECT_NEAR(bce_with_logits(s, y), bce(sigmoid(s), y), 1e-12);
}

TEST(Dropout, EvalIsIdentityTrainMatchesExpectation) {
  Rng rng(23);
  const double p = 0.3;
  const std::size_t n = 200000;
  auto mask = dropout_mask(n, p, rng);
  std::size_t zeros = 0;
  double sum = 0.0;
  for (double m : mask) {
    if (m == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(m, 1.0 / (1.0 - p));
    sum += m;
  }
  const double sigma_rate = std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(static_cast<double>(zeros) / n, p, 3 * sigma_rate);
  // Mean of the scaled mask estimates 1; its std is sqrt(p/(1-p)/n).
  EXPECT_NEAR(sum / n, 1.0, 3 * std::sqrt(p / (1 - p) / static_cast<double>(n)));
  auto none = dropout_mask(10, 0.0, rng);
  for (double m : none) EXPECT_EQ(m, 1.0);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParamSet p;
  p.add("w", Tensor2{{1.5, -2.0}});
  const ParamSet before = p;
  AdamState st(p, AdamConfig{});
  for (int i = 0; i < 5; ++i) adam_step(p, p.zeros_like(), st);
  EXPECT_TRUE(p == before);
}

TEST(Adam, FirstStepIsMinusRate) {
  ParamSet p;
  p.add("w", Tensor2{{0.0}});
  ParamSet g;
  g.add("w", Tensor2{{1.0}});
  AdamState st(p, AdamConfig{});
  adam_step(p, g, st);
  EXPECT_NEAR(p["w"](0, 0), -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, QuadraticTrajectoryMatchesIndependentRecurrence) {
  // minimize 0.5 * a * (x - c)^2 from x0 in two coordinates
  const double a[2] = {3.0, 0.5}, c[2] = {1.0, -2.0};
  ParamSet p;
  p.add("x", Tensor2{{4.0, 5.0}});
  AdamState st(p, AdamConfig{0.05, 0.9, 0.999, 1e-8});
  double x[2] = {4.0, 5.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 200; ++t) {
    ParamSet g;
    g.add("x", Tensor2{{a[0] * (p["x"](0, 0) - c[0]), a[1] * (p["x"](0, 1) - c[1])}});
    adam_step(p, g, st);
    for (int i = 0; i < 2; ++i) {
      const double gi = a[i] * (x[i] - c[i]);
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_NEAR(p["x"](0, 0), x[0], 1e-10);
  EXPECT_NEAR(p["x"](0, 1), x[1], 1e-10);
}

TEST(Adam, NonFiniteGradientNamesGroup) {
  ParamSet p;
  p.add("head.w", Tensor2{{0.0}});
  ParamSet g;
  g.add("head.w", Tensor2{{std::nan("")}});
  AdamState st(p, AdamConfig{});
  try {
    adam_step(p, g, st);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("head.w"), std::string::npos);
  }
}

TEST(Adam, SkippedGroupsKeepMoments) {
  ParamSet p;
  p.add("a", Tensor2{{1.0}});
  p.add("b", Tensor2{{1.0}});
  ParamSet g = p;
  AdamState st(p, AdamConfig{});
  adam_step(p, g, st, [](const std::string& name) { return name == "a"; });
  EXPECT_NE(p["a"](0, 0), 1.0);
  EXPECT_EQ(p["b"](0, 0), 1.0);
  EXPECT_EQ(st.second_moment["b"](0, 0), 0.0);
  EXPECT_EQ(st.steps[1], 0);
}

TEST(GradCheck, LinearSigmoidBceToy) {
  Rng rng(29);
  Tensor2 x = random_tensor(6, 3, rng);
  std::vector<double> y{1, 0, 0, 1, 1, 0};
  ParamSet p;
  p.add("w", random_tensor(1, 3, rng));
  p.add("b", Tensor2{{0.1}});
  auto loss = [&](const ParamSet& ps, ParamSet* grad) {
    if (grad) grad->set_zero();
    double l = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double s = dot(ps["w"].row(0), x.row(i)) + ps["b"](0, 0);
      l += bce(sigmoid(s), y[i]);
      if (grad) {
        const double g = sigmoid(s) - y[i];
        axpy(g, x.row(i), (*grad)["w"].row(0));
        (*grad)["b"](0, 0) += g;
      }
    }
    return l;
  };
  auto res = grad_check(loss, p);
  EXPECT_LT(res.max_relative_error, 1e-6);
  EXPECT_EQ(res.checked, 4u);
}

TEST(GradCheck, DetectsWrongGradient) {
  ParamSet p;
  p.add("w", Tensor2{{0.5}});
  auto loss = [](const ParamSet& ps, ParamSet* grad) {
    const double w = ps["w"](0, 0);
    if (grad) (*grad)["w"](0, 0) = 3.0 * w;  // true derivative is 2w
    return w * w;
  };
  EXPECT_GT(grad_check(loss, p).max_relative_error, 0.1);
}
