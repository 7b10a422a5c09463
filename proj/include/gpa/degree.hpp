#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gpa/error.hpp"
#include "gpa/numeric.hpp"
#include "gpa/simulate.hpp"

namespace gpa {

struct DegreeLawParams {
  int m = 1;
  double phi = 1.0;
  double mu_weight = 1.0;

  double c() const { return 2.0 / phi; }
};

namespace detail {

inline void check_law(const DegreeLawParams& p) {
  require(p.m >= 1, ErrorKind::ParameterOutOfRange, "m must be positive");
  require(p.phi > 0.0 && p.phi < 2.0, ErrorKind::ParameterOutOfRange,
          "phi = " + std::to_string(p.phi) + " outside (0,2)");
  require(p.mu_weight > 0.0 && p.mu_weight <= 1.0, ErrorKind::ParameterOutOfRange, "mu_weight outside (0,1]");
}

inline void check_degree(const DegreeLawParams& p, std::int64_t d) {
  require(d >= p.m, ErrorKind::DegreeBelowM, "degree " + std::to_string(d) + " below m = " + std::to_string(p.m));
}

}  // namespace detail

/// q(d) = (2/phi) Gamma(m+c) Gamma(d) / (Gamma(m) Gamma(d+c+1)), c = 2/phi.
/// Multiply by mu_weight for the unnormalized per-location mass.
inline double theoretical_pmf(const DegreeLawParams& p, std::int64_t d) {
  detail::check_law(p);
  detail::check_degree(p, d);
  const double c = p.c();
  const double x = static_cast<double>(d);
  return (2.0 / p.phi) / (x + c) * std::exp(log_gamma_ratio(p.m, c) - log_gamma_ratio(x, c));
}

/// CDF(d) = 1 - Gamma(m+c) Gamma(d+1) / (Gamma(m) Gamma(d+1+c)).
inline double theoretical_cdf(const DegreeLawParams& p, std::int64_t d) {
  detail::check_law(p);
  detail::check_degree(p, d);
  const double c = p.c();
  return -std::expm1(log_gamma_ratio(p.m, c) - log_gamma_ratio(static_cast<double>(d) + 1.0, c));
}

/// 2m / (2 - phi).
inline double theoretical_mean(const DegreeLawParams& p) {
  detail::check_law(p);
  return 2.0 * p.m / (2.0 - p.phi);
}

/// sum_{d=m}^{D-1} d q(d) plus the exact remainder
///   (2/phi) Gamma(m+c)/Gamma(m) * Gamma(D+1) / ((c-1) Gamma(D+c)).
inline double mean_by_summation(const DegreeLawParams& p, std::int64_t cutoff) {
  detail::check_law(p);
  detail::check_degree(p, cutoff);
  const double c = p.c();
  std::vector<double> terms;
  for (std::int64_t d = p.m; d < cutoff; ++d) terms.push_back(static_cast<double>(d) * theoretical_pmf(p, d));
  terms.push_back((2.0 / p.phi) / (c - 1.0) *
                  std::exp(log_gamma_ratio(p.m, c) - log_gamma_ratio(static_cast<double>(cutoff) + 1.0, c - 1.0)));
  return sum(terms);
}

/// Exponent of the complementary CDF; the pmf decays like d^-(1 + 2/phi).
inline double tail_index(double phi) {
  require(phi > 0.0 && phi < 2.0, ErrorKind::ParameterOutOfRange, "phi outside (0,2)");
  return 2.0 / phi;
}

struct CdfBracket {
  double lower = 0.0;
  double upper = 0.0;
};

/// CDF bracket for vertices in a set where the fitness ranges over
/// [phi_inf, phi_sup]: a larger fitness gives a heavier tail, so the lower
/// end uses phi_sup + delta and the upper end phi_inf - delta.
inline CdfBracket theorem3_bracket(int m, double phi_sup, double phi_inf, std::int64_t d, double delta = 1e-9) {
  require(phi_inf > 0.0 && phi_inf <= phi_sup && phi_sup < 2.0, ErrorKind::ParameterOutOfRange,
          "need 0 < phi_inf <= phi_sup < 2");
  require(delta >= 0.0, ErrorKind::ParameterOutOfRange, "delta must be non-negative");
  const double hi = std::min(phi_sup + delta, std::nextafter(2.0, 0.0));
  const double lo = std::max(phi_inf - delta, std::numeric_limits<double>::min());
  return {theoretical_cdf({m, hi, 1.0}, d), theoretical_cdf({m, lo, 1.0}, d)};
}

// ---------------------------------------------------------------------------
// Empirical comparison

struct DegreeRow {
  std::int64_t d = 0;
  std::int64_t empirical_count = 0;
  double empirical_fraction = 0.0;
  double theoretical_mass = 0.0;
  double cum_empirical = 0.0;
  double cum_theoretical = 0.0;
};

struct DegreeTable {
  std::string location;
  std::vector<DegreeRow> rows;
  std::int64_t vertices = 0;        ///< vertices with degree >= m
  std::int64_t below_m = 0;         ///< vertices created by rejected edges (dustbin only)
  double theoretical_remainder = 0.0;  ///< theoretical mass beyond the last row
};

/// One row per degree from m to the largest observed degree.
inline DegreeTable make_degree_table(std::string location, const DegreeHistogram& h, const DegreeLawParams& p) {
  detail::check_law(p);
  DegreeTable t;
  t.location = std::move(location);
  std::int64_t d_max = p.m;
  for (const auto& [d, n] : h.counts) {
    if (d < p.m) {
      t.below_m += n;
    } else {
      t.vertices += n;
      d_max = std::max(d_max, d);
    }
  }
  require(t.vertices > 0, ErrorKind::EmptyHistogram, "no vertices with degree >= m at " + t.location);
  std::int64_t cum = 0;
  for (std::int64_t d = p.m; d <= d_max; ++d) {
    DegreeRow r;
    r.d = d;
    const auto it = h.counts.find(d);
    r.empirical_count = it == h.counts.end() ? 0 : it->second;
    cum += r.empirical_count;
    r.empirical_fraction = static_cast<double>(r.empirical_count) / static_cast<double>(t.vertices);
    r.cum_empirical = static_cast<double>(cum) / static_cast<double>(t.vertices);
    r.theoretical_mass = theoretical_pmf(p, d);
    r.cum_theoretical = theoretical_cdf(p, d);
    t.rows.push_back(r);
  }
  t.theoretical_remainder = 1.0 - t.rows.back().cum_theoretical;
  return t;
}

struct DegreeComparison {
  double total_variation = 0.0;    ///< both laws renormalized to [m, d_max]
  std::vector<double> residuals;   ///< empirical minus theoretical, index d - m
  double tail_slope = 0.0;         ///< NaN when fewer than three degrees qualify
  double theoretical_slope = 0.0;  ///< same fit applied to the theoretical masses
  int slope_points = 0;
  std::int64_t slope_min_count = 10;
  std::int64_t slope_min_degree = 0;
  std::int64_t observed = 0;       ///< vertices with degree in [m, d_max]
};

namespace detail {

/// Least-squares slope of log(mass) against log(d + c/2), where c = -slope - 1
/// is iterated to a fixed point. Since Gamma(d) / Gamma(d + c + 1) behaves
/// like (d + c/2)^-(c+1), the shift removes most of the small-d curvature of
/// the exact law.
inline double shifted_loglog_slope(const std::vector<double>& d, const std::vector<double>& log_mass) {
  const std::size_t n = d.size();
  double c = 0.0, slope = 0.0;
  std::vector<double> x(n);
  for (int iter = 0; iter < 50; ++iter) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::log(d[i] + 0.5 * c);
    const double mx = sum(x) / static_cast<double>(n), my = sum(log_mass) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (log_mass[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double next = sxy / sxx;
    const bool settled = std::abs(next - slope) < 1e-12;
    slope = next;
    c = std::max(0.0, -slope - 1.0);
    if (settled) break;
  }
  return slope;
}

}  // namespace detail

/// TV distance, per-degree residuals and a tail slope of the empirical pmf.
/// The slope uses the contiguous run of degrees from slope_min_degree whose
/// counts are all at least slope_min_count; stopping at the first sparse
/// degree avoids keeping only the upward fluctuations deep in the tail.
inline DegreeComparison compare(const DegreeHistogram& h, const DegreeLawParams& p, std::int64_t d_max,
                                std::int64_t slope_min_degree = 0, std::int64_t slope_min_count = 10) {
  detail::check_law(p);
  detail::check_degree(p, d_max);
  DegreeComparison out;
  out.slope_min_count = slope_min_count;
  out.slope_min_degree = std::max<std::int64_t>(slope_min_degree, p.m);
  for (const auto& [d, n] : h.counts)
    if (d >= p.m && d <= d_max) out.observed += n;
  require(out.observed > 0, ErrorKind::EmptyHistogram, "no vertices with degree in [m, d_max]");

  auto count_at = [&h](std::int64_t d) {
    const auto it = h.counts.find(d);
    return it == h.counts.end() ? std::int64_t{0} : it->second;
  };
  const double q_total = theoretical_cdf(p, d_max);
  std::vector<double> gaps;
  for (std::int64_t d = p.m; d <= d_max; ++d) {
    const double emp = static_cast<double>(count_at(d)) / static_cast<double>(out.observed);
    const double theo = theoretical_pmf(p, d) / q_total;
    out.residuals.push_back(emp - theo);
    gaps.push_back(std::abs(emp - theo));
  }
  out.total_variation = 0.5 * sum(gaps);

  std::vector<double> ds, ly, ty;
  for (std::int64_t d = out.slope_min_degree; count_at(d) >= slope_min_count; ++d) {
    ds.push_back(static_cast<double>(d));
    ly.push_back(std::log(static_cast<double>(count_at(d))));
    ty.push_back(std::log(theoretical_pmf(p, d)));
  }
  out.slope_points = static_cast<int>(ds.size());
  if (ds.size() >= 3) {
    out.tail_slope = detail::shifted_loglog_slope(ds, ly);
    out.theoretical_slope = detail::shifted_loglog_slope(ds, ty);
  } else {
    out.tail_slope = out.theoretical_slope = std::nan("");
  }
  return out;
}

}  // namespace gpa
