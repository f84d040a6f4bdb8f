#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "absa/errors.hpp"
#include "absa/rng.hpp"
#include "absa/tensor.hpp"

using namespace absa;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a.at(i, k)) * b.at(k, j);
      c.at(i, j) = static_cast<double>(s);
    }
  return c;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Tensor, EmptyRowsKeepColumnCount) {
  Tensor t({0, 4});
  EXPECT_EQ(t.rows(), 0u);
  EXPECT_EQ(t.cols(), 4u);
}

TEST(Matmul, IdentityAndScalar) {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(ops::matmul(eye, m), m);
  EXPECT_EQ(ops::matmul(Tensor::matrix(1, 1, {2}), Tensor::matrix(1, 1, {3}))[0], 6.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(3);
  const Tensor a = Tensor::uniform({5, 4}, -1, 1, rng);
  const Tensor b = Tensor::uniform({4, 3}, -1, 1, rng);
  const Tensor c = ops::matmul(a, b);
  const Tensor ref = naive_matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(4);
  auto transpose = [](const Tensor& m) {
    Tensor t({m.cols(), m.rows()});
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) t.at(j, i) = m.at(i, j);
    return t;
  };
  const Tensor a = Tensor::uniform({3, 5}, -1, 1, rng);
  const Tensor b = Tensor::uniform({3, 2}, -1, 1, rng);
  const Tensor c = Tensor::uniform({2, 5}, -1, 1, rng);
  const Tensor tn = ops::matmul_tn(a, b);
  const Tensor tn_ref = naive_matmul(transpose(a), b);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], tn_ref[i], 1e-12);
  const Tensor nt = ops::matmul_nt(a, c);
  const Tensor nt_ref = naive_matmul(a, transpose(c));
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt[i], nt_ref[i], 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Softmax, UniformOnZeros) {
  const Tensor p = ops::softmax(Tensor::vector({0, 0, 0, 0}));
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, OneHotLogitMatchesDirectEvaluation) {
  const Tensor p = ops::softmax(Tensor::vector({1, 0, 0, 0}));
  const long double e = std::exp(1.0L);
  const long double z = e + 3.0L;
  EXPECT_NEAR(p[0], static_cast<double>(e / z), 1e-15);
  EXPECT_NEAR(p[1], static_cast<double>(1.0L / z), 1e-15);
  EXPECT_NEAR(p[0], 0.47536, 1e-5);
  EXPECT_NEAR(p[3], 0.17488, 1e-5);
}

TEST(Softmax, ShiftInvariantAndNormalised) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = Tensor::uniform({4}, -20, 20, rng);
    const double c = rng.uniform(-50, 50);
    Tensor shifted = x;
    for (auto& v : shifted.data()) v += c;
    const Tensor p = ops::softmax(x);
    const Tensor q = ops::softmax(shifted);
    double sum = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GT(p[i], 0.0);
      EXPECT_NEAR(p[i], q[i], 1e-12);
      sum += p[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor p = ops::softmax(Tensor::vector({1000, 999, -1000, 0}));
  EXPECT_TRUE(p.all_finite());
}

TEST(CrossEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(ops::cross_entropy(1, std::vector<double>{0, 1, 0, 0}), 0.0);
  EXPECT_NEAR(ops::cross_entropy(2, std::vector<double>{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-15);
  EXPECT_NEAR(ops::cross_entropy(0, std::vector<double>{0.47536, 0.17488, 0.17488, 0.17488}), 0.74367, 2e-5);
  const Tensor p = ops::softmax(Tensor::vector({1, 0, 0, 0}));
  EXPECT_NEAR(ops::cross_entropy(0, p.data()), -std::log(std::exp(1.0) / (std::exp(1.0) + 3.0)), 1e-14);
}

TEST(CrossEntropy, ZeroAtGoldIsClamped) {
  const double v = ops::cross_entropy(0, std::vector<double>{0, 1, 0, 0});
  EXPECT_NEAR(v, -std::log(ops::kLogClamp), 1e-9);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(CrossEntropy, FullTargetForm) {
  const Tensor y = Tensor::vector({0, 0, 1, 0});
  const Tensor yhat = Tensor::vector({0.1, 0.2, 0.6, 0.1});
  EXPECT_NEAR(ops::cross_entropy(y, yhat), -std::log(0.6), 1e-15);
}

TEST(CrossEntropy, NonNegativeOnRandomDistributions) {
  Rng rng(12);
  for (int i = 0; i < 500; ++i) {
    const Tensor p = ops::softmax(Tensor::uniform({4}, -5, 5, rng));
    EXPECT_GE(ops::cross_entropy(rng.below(4), p.data()), 0.0);
  }
}

TEST(Relu, Examples) {
  EXPECT_EQ(ops::relu(Tensor::vector({-1, 0, 2})), Tensor::vector({0, 0, 2}));
  EXPECT_EQ(ops::relu(Tensor::vector({-3, -0.5})), Tensor::vector({0, 0}));
}

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  const Tensor x = Tensor::uniform({3, 7}, -1, 1, rng);
  EXPECT_EQ(ops::dropout(x, 0.0, Mode::train, rng), x);
  EXPECT_EQ(ops::dropout(x, 0.5, Mode::infer, rng), x);
  EXPECT_EQ(ops::dropout(x, 0.0, Mode::infer, rng), x);
}

TEST(Dropout, RateOutOfRangeRejected) {
  Rng rng(1);
  EXPECT_THROW(ops::dropout(Tensor({3}, 1.0), 1.0, Mode::train, rng), ConfigError);
  EXPECT_THROW(ops::dropout(Tensor({3}, 1.0), -0.1, Mode::train, rng), ConfigError);
}

TEST(Dropout, MonteCarloRateAndMean) {
  Rng rng(2024);
  const Tensor x({1000000}, 1.0);
  const Tensor y = ops::dropout(x, 0.5, Mode::train, rng);
  std::size_t zeros = 0;
  double sum = 0;
  for (double v : y.data()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 2.0);
    }
    sum += v;
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e6, 0.5, 0.002);
  EXPECT_NEAR(sum / 1e6, 1.0, 0.004);
}

TEST(Dropout, FixedSeedReproducesMask) {
  Rng a(7), b(7);
  const Tensor x({50}, 1.0);
  EXPECT_EQ(ops::dropout(x, 0.3, Mode::train, a), ops::dropout(x, 0.3, Mode::train, b));
}

TEST(Clip, BelowThresholdUnchanged) {
  std::vector<Tensor> g{Tensor::vector({3, 0}), Tensor::vector({0})};
  const auto before = g;
  EXPECT_NEAR(ops::clip_grad_norm(g, 5.0), 3.0, 1e-15);
  EXPECT_EQ(g, before);
}

TEST(Clip, ScalesToMaxNorm) {
  std::vector<Tensor> g{Tensor::vector({6, 8})};
  EXPECT_NEAR(ops::clip_grad_norm(g, 5.0), 10.0, 1e-15);
  EXPECT_NEAR(g[0][0], 3.0, 1e-15);
  EXPECT_NEAR(g[0][1], 4.0, 1e-15);
}

TEST(Clip, GlobalNormBoundAndIdempotence) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tensor> g;
    const std::size_t n = 1 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) g.push_back(Tensor::uniform({1 + rng.below(20)}, -10, 10, rng));
    ops::clip_grad_norm(g, 5.0);
    EXPECT_LE(ops::global_norm(g), 5.0 + 1e-9);
    const auto once = g;
    ops::clip_grad_norm(g, 5.0);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g[i].size(); ++j) EXPECT_NEAR(g[i][j], once[i][j], 1e-15);
  }
}

TEST(Sgd, Arithmetic) {
  EXPECT_DOUBLE_EQ(ops::sgd_step(Tensor::vector({1.0}), Tensor::vector({0.0}), 0.3)[0], 1.0);
  EXPECT_DOUBLE_EQ(ops::sgd_step(Tensor::vector({1.0}), Tensor::vector({2.0}), 0.01)[0], 0.98);
  EXPECT_THROW(ops::sgd_step(Tensor::vector({1.0}), Tensor::vector({1.0, 2.0}), 0.1), DimensionError);
}

TEST(Sgd, QuadraticDecreasesBelowCurvatureBound) {
  // f(w) = a/2 (w - c)^2 with curvature a; steps with lr < 2/a contract.
  const double a = 4.0, c = -1.5;
  Tensor w = Tensor::vector({3.0});
  double prev = 0.5 * a * (w[0] - c) * (w[0] - c);
  for (int i = 0; i < 20; ++i) {
    w = ops::sgd_step(w, Tensor::vector({a * (w[0] - c)}), 0.1);
    const double f = 0.5 * a * (w[0] - c) * (w[0] - c);
    EXPECT_LT(f, prev);
    prev = f;
  }
}

TEST(FiniteDiff, AnalyticExamples) {
  auto sq = [](std::span<const double> p) { return p[0] * p[0]; };
  EXPECT_NEAR(ops::finite_diff_gradient(sq, std::vector<double>{3.0}, 1e-5)[0], 6.0, 1e-8);
  auto lin = [](std::span<const double> p) { return 2.0 * p[0] - 3.0 * p[1]; };
  const auto g = ops::finite_diff_gradient(lin, std::vector<double>{0.7, -2.0}, 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-9);
  EXPECT_NEAR(g[1], -3.0, 1e-9);
}

TEST(FiniteDiff, NonFiniteLossRaises) {
  auto bad = [](std::span<const double> p) { return std::log(p[0]); };
  EXPECT_THROW(ops::finite_diff_gradient(bad, std::vector<double>{0.0}, 1e-5), NumericError);
}
