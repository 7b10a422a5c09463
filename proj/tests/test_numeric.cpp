#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "gpa/fenwick.hpp"
#include "gpa/numeric.hpp"
#include "gpa/rng.hpp"
#include "support.hpp"

using namespace gpa;

TEST(Fenwick, PrefixAndFindMatchNaiveScan) {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> w(0, 9);
  FenwickTree tree;
  std::vector<std::int64_t> naive;
  for (int round = 0; round < 400; ++round) {
    if (naive.empty() || round % 3 == 0) {
      const int v = w(gen);
      tree.push_back(v);
      naive.push_back(v);
    } else {
      const std::size_t i = gen() % naive.size();
      const int d = w(gen);
      tree.add(i, d);
      naive[i] += d;
    }
    std::int64_t acc = 0;
    for (std::size_t i = 0; i <= naive.size(); ++i) {
      ASSERT_EQ(tree.prefix(i), acc);
      if (i < naive.size()) acc += naive[i];
    }
    ASSERT_EQ(tree.total(), acc);
    for (std::int64_t target = 0; target < acc; ++target) {
      std::size_t expect = 0;
      std::int64_t run = 0;
      while (run + naive[expect] <= target) run += naive[expect++];
      ASSERT_EQ(tree.find(target), expect);
    }
  }
}

TEST(Fenwick, WeightRoundTrips) {
  FenwickTree t;
  for (int i = 0; i < 37; ++i) t.push_back(i % 5);
  for (int i = 0; i < 37; ++i) EXPECT_EQ(t.weight(i), i % 5);
}

TEST(Rng, DeterministicAndCounterBased) {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
  }
  EXPECT_EQ(a.consumed(), 100u);
}

TEST(Rng, UniformMomentsAndRange) {
  CounterRng r(1);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 5e-3);
  EXPECT_NEAR(s2 / n, 1.0 / 3.0, 5e-3);
}

TEST(Rng, BelowIsUnbiasedOnSmallRange) {
  CounterRng r(9);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);  // chi-square(6) 0.999 quantile
}

TEST(Sum, CompensatedSumRecoversCancellation) {
  std::vector<double> v{1.0, 1e-16, 1e-16, -1.0};
  EXPECT_DOUBLE_EQ(sum(v), 2e-16);
  std::vector<double> tenth(10, 0.1);
  EXPECT_EQ(sum(tenth), 1.0);
}

TEST(Quadrature, PolynomialAndTranscendental) {
  EXPECT_NEAR(integrate([](double x) { return x * x; }, 0.0, 3.0), 9.0, 1e-12);
  EXPECT_NEAR(integrate([](double x) { return std::exp(x); }, 0.0, 1.0), std::numbers::e - 1.0, 1e-11);
  EXPECT_NEAR(integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), 2.0, 1e-11);
  EXPECT_NEAR(integrate([](double x) { return x; }, 1.0, 0.0), -0.5, 1e-14);
  EXPECT_EQ(integrate([](double) { return 1.0; }, 2.0, 2.0), 0.0);
}

TEST(Quadrature, BreakpointsCatchNarrowFeatures) {
  auto box = [](double x) { return x >= 0.3001 && x <= 0.3002 ? 1.0 : 0.0; };
  const std::vector<double> breaks{0.3001, 0.3002};
  EXPECT_NEAR(integrate(box, 0.0, 1.0, {}, breaks), 1e-4, 1e-12);
}

TEST(Quadrature, KinkAtBreakpoint) {
  const std::vector<double> breaks{0.4};
  EXPECT_NEAR(integrate([](double x) { return std::abs(x - 0.4); }, 0.0, 1.0, {}, breaks), 0.08 + 0.18, 1e-13);
}

TEST(Quadrature, NonIntegrableSingularityFails) {
  EXPECT_GPA_ERROR(integrate([](double x) { return 1.0 / x; }, 0.0, 1.0, {.abs_tol = 1e-10, .initial_panels = 1}),
                   ErrorKind::QuadratureFailure);
}

TEST(Bisect, FindsRootAndRejectsBadBracket) {
  EXPECT_NEAR(bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0, 1e-15), std::numbers::sqrt2, 4e-16);
  EXPECT_GPA_ERROR(bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0, 1e-12), ErrorKind::NoSignChange);
}

TEST(LogGammaRatio, MatchesExtendedPrecisionLgamma) {
  for (double x : {0.5, 1.0, 2.0, 3.7, 9.9, 10.0, 25.0, 100.0, 1e4}) {
    for (double c : {0.1, 1.0, 2.0, 2.5, 7.0, 40.0}) {
      const auto oracle = static_cast<double>(lgammal(static_cast<long double>(x) + c) - lgammal(x));
      EXPECT_NEAR(log_gamma_ratio(x, c), oracle, 1e-12 * std::max(1.0, std::abs(oracle))) << x << " " << c;
    }
  }
}

TEST(LogGammaRatio, IntegerArgumentsAgainstFactorials) {
  // Gamma(n + k) / Gamma(n) = n (n+1) ... (n+k-1)
  for (int n = 1; n < 30; ++n) {
    for (int k = 1; k < 6; ++k) {
      double prod = 1.0;
      for (int j = 0; j < k; ++j) prod *= n + j;
      EXPECT_NEAR(log_gamma_ratio(n, k), std::log(prod), 1e-13 * std::log(prod) + 1e-15);
    }
  }
}

TEST(LogGammaRatio, StaysAccurateForHugeArguments) {
  // Gamma(x + c)/Gamma(x) ~ x^c (1 + c(c-1)/(2x)) for large x.
  const double x = 1e6, c = 2.5;
  const double expect = c * std::log(x) + std::log1p(c * (c - 1.0) / (2.0 * x));
  EXPECT_NEAR(log_gamma_ratio(x, c), expect, 1e-11);
}

TEST(Matrix, InitializerAndRows) {
  Matrix m{{1, 2}, {3, 4}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m(1, 0), 3.0);
  EXPECT_EQ(m.row(1)[1], 4.0);
  EXPECT_EQ(m.max(), 4.0);
  EXPECT_EQ(m.min(), 1.0);
  EXPECT_EQ(Matrix::from_rows({{1, 2}, {3, 4}}), m);
  EXPECT_GPA_ERROR(Matrix::from_rows({{1, 2}, {3}}), ErrorKind::DimensionMismatch);
}
