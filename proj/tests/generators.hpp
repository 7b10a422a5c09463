#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "gpa/numeric.hpp"
#include "gpa/space.hpp"

namespace gpa_test {

/// mu ~ Dirichlet(1, ..., 1), a_ij log-uniform on [lo, hi].
inline gpa::FiniteLocationSpace random_space(std::mt19937_64& gen, std::size_t n, double lo = 0.2, double hi = 5.0) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(std::log(lo), std::log(hi));
  std::vector<double> mu(n);
  double total = 0.0;
  for (double& m : mu) total += (m = expo(gen));
  for (double& m : mu) m /= total;
  mu.back() = 0.0;
  double rest = 0.0;
  for (double m : mu) rest += m;
  mu.back() = 1.0 - rest;
  gpa::Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = std::exp(unit(gen));
  return gpa::FiniteLocationSpace(std::move(mu), std::move(a));
}

/// Uniform point on the open simplex, bounded away from the faces.
inline std::vector<double> random_interior(std::mt19937_64& gen, std::size_t n) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> y(n);
  double total = 0.0;
  for (double& v : y) total += (v = expo(gen) + 0.05);
  for (double& v : y) v /= total;
  return y;
}

}  // namespace gpa_test
