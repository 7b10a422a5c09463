#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gpa/equilibrium.hpp"
#include "gpa/error.hpp"
#include "gpa/numeric.hpp"
#include "gpa/space.hpp"

namespace gpa {

/// Fitness density g on [support_floor, h]. `floor_near_h`, when set, is a
/// positive lower bound of g on a left neighbourhood of h; it lets the phase
/// be decided without numerics. `below_h` maps s to g(h - s) without forming
/// h - s, which keeps densities like (h - x)^beta accurate next to h.
struct FitnessDistribution {
  Density density;
  double h = 1.0;
  double support_floor = 0.0;
  std::optional<double> floor_near_h;
  std::function<double(double)> below_h;

  double at_gap(double s) const { return below_h ? below_h(s) : density(h - s); }

  static FitnessDistribution uniform(double h = 1.0) {
    return {Density::uniform(Domain::interval(0.0, h)), h, 0.0, 1.0 / h, [h](double) { return 1.0 / h; }};
  }
  /// g(x) = 2x / h^2
  static FitnessDistribution linear(double h = 1.0) {
    return {Density::linear(Domain::interval(0.0, h)), h, 0.0, 1.0 / h,
            [h](double s) { return 2.0 * (h - s) / (h * h); }};
  }
  /// g(x) = (beta + 1)(h - x)^beta / h^(beta + 1); vanishes at h for beta > 0.
  static FitnessDistribution power(double beta, double h = 1.0) {
    const double norm = (beta + 1.0) / std::pow(h, beta + 1.0);
    FitnessDistribution f{Density::power(Domain::interval(0.0, h), beta), h, 0.0, std::nullopt,
                          [norm, beta](double s) { return norm * std::pow(s, beta); }};
    if (beta <= 0.0) f.floor_near_h = (beta + 1.0) / h;
    return f;
  }
  /// Uniform on [a, b] with 0 <= a < b <= h.
  static FitnessDistribution bump(double a, double b, double h = 1.0) {
    require(0.0 <= a && b <= h, ErrorKind::ParameterOutOfRange, "bump must lie inside [0, h]");
    FitnessDistribution f{Density::bump(a, b), h, 0.0, std::nullopt, {}};
    if (b == h) f.floor_near_h = 1.0 / (b - a);
    return f;
  }
};

inline void validate(const FitnessDistribution& dist) {
  require(dist.h > 0.0 && std::isfinite(dist.h), ErrorKind::ParameterOutOfRange, "h must be positive");
  require(dist.support_floor >= 0.0 && dist.support_floor < dist.h, ErrorKind::ParameterOutOfRange,
          "support floor must lie in [0, h)");
  require(!dist.floor_near_h || *dist.floor_near_h > 0.0, ErrorKind::ParameterOutOfRange,
          "floor near h must be positive");
  constexpr int probe = 1000;
  for (int k = 0; k <= probe; ++k) {
    const double x = dist.support_floor + (dist.h - dist.support_floor) * k / probe;
    require(dist.density(x) >= 0.0, ErrorKind::ParameterOutOfRange,
            "density '" + dist.density.name + "' negative at " + std::to_string(x));
  }
  const double mass = integrate(dist.density.pdf, dist.support_floor, dist.h, {.abs_tol = 1e-12}, dist.density.breakpoints);
  require(std::abs(mass - 1.0) <= 1e-9, ErrorKind::NotAProbabilityVector,
          "density '" + dist.density.name + "' integrates to " + std::to_string(mass));
}

namespace detail {

inline constexpr double kSmallestGap = 1e-300;

/// int_a^b w(x) g(x) / (lambda - x) dx for lambda >= h > b or lambda > h.
/// With s = h - x = e^v the integrand becomes w g s / (lambda - h + s) dv,
/// bounded and free of cancellation; gaps below kSmallestGap are dropped.
inline double resolvent_integral(const FitnessDistribution& dist, const std::function<double(double)>& w,
                                 double lambda, double a, double b, double tol) {
  if (b <= a) return 0.0;
  const double h = dist.h, delta = lambda - h;
  const double va = std::log(std::max(h - b, kSmallestGap)), vb = std::log(h - a);
  // Half-unit initial panels below vb and around s = lambda - h, where the
  // integrand changes shape; further down it decays like a power of s.
  std::vector<double> vbreaks;
  for (double x : dist.density.breakpoints)
    if (x > a && x < b) vbreaks.push_back(std::log(h - x));
  auto cut_around = [&](double lo, double hi) {
    for (double v = std::max(lo, va); v < std::min(hi, vb); v += 0.5) vbreaks.push_back(v);
  };
  cut_around(vb - 40.0, vb);
  if (delta > 0.0) cut_around(std::log(delta) - 20.0, std::log(delta) + 20.0);
  auto integrand = [&](double v) {
    const double s = std::exp(v);
    return w(h - s) * dist.at_gap(s) * (s / (delta + s));
  };
  return integrate(integrand, va, vb, {.abs_tol = tol, .initial_panels = 1}, vbreaks);
}

}  // namespace detail

/// F(lambda) = int x g(x) / (lambda - x) dx over the support, lambda > h.
inline double fitness_F(const FitnessDistribution& dist, double lambda) {
  require(lambda > dist.h, ErrorKind::ParameterOutOfRange, "F needs lambda > h");
  return detail::resolvent_integral(dist, [](double x) { return x; }, lambda, dist.support_floor, dist.h, 1e-13);
}

enum class Phase { FitGetRicher, InnovationPaysOff };

inline std::string to_string(Phase p) { return p == Phase::FitGetRicher ? "fit_get_richer" : "innovation_pays_off"; }

struct PhaseResult {
  Phase phase = Phase::InnovationPaysOff;
  std::optional<double> lambda0;
  double F_near_h = 0.0;    ///< F(h + near_h_offset)
  bool divergent = false;  ///< F(h+) judged infinite
  std::string decided_by;  ///< "lower_bound_near_h", "cutoff" or "quadrature"
};

inline constexpr double kNearHOffset = 1e-8;
inline constexpr double kDivergenceCutoff = 1e3;

/// Phase from the limit of F at h from the right; in the fit-get-richer phase
/// lambda0 solves F(lambda0) = 1.
inline PhaseResult detect_phase(const FitnessDistribution& dist) {
  validate(dist);
  PhaseResult r;
  const double h = dist.h;
  r.F_near_h = fitness_F(dist, h + kNearHOffset * std::max(h, 1.0));
  if (dist.floor_near_h) {
    r.divergent = true;
    r.decided_by = "lower_bound_near_h";
  } else if (r.F_near_h > kDivergenceCutoff) {
    r.divergent = true;
    r.decided_by = "cutoff";
  } else {
    r.decided_by = "quadrature";
  }
  if (!r.divergent && r.F_near_h < 1.0) {
    r.phase = Phase::InnovationPaysOff;
    return r;
  }
  r.phase = Phase::FitGetRicher;
  auto f = [&dist](double lambda) { return fitness_F(dist, lambda) - 1.0; };
  double lo = h + 1e-12 * std::max(h, 1.0);
  if (f(lo) <= 0.0) {
    r.lambda0 = h;
    return r;
  }
  double hi = 2.0 * h;
  while (f(hi) >= 0.0) hi *= 2.0;
  r.lambda0 = bisect(f, lo, hi, 1e-14 * hi);
  return r;
}

namespace detail {

inline double nu_mass(double lambda0, const FitnessDistribution& dist, double a, double b) {
  return 0.5 * lambda0 * resolvent_integral(dist, [](double) { return 1.0; }, lambda0, a, b, 1e-12);
}

}  // namespace detail

/// nu([a, b]) = (lambda0 / 2) int_a^b g(x) / (lambda0 - x) dx.
inline double nu_interval(const PhaseResult& phase, const FitnessDistribution& dist, double a, double b) {
  require(phase.phase == Phase::FitGetRicher && phase.lambda0, ErrorKind::WrongPhase,
          "limit measure is only available in the fit_get_richer phase");
  require(dist.support_floor <= a && a <= b && b < dist.h, ErrorKind::IntervalOutOfRange,
          "[" + std::to_string(a) + ", " + std::to_string(b) + "] must satisfy floor <= a <= b < h");
  return detail::nu_mass(*phase.lambda0, dist, a, b);
}

/// The distribution restricted to [c, h] and renormalized.
inline FitnessDistribution truncate(const FitnessDistribution& dist, double c) {
  require(c > dist.support_floor && c < dist.h, ErrorKind::ParameterOutOfRange, "truncation must lie inside the support");
  const double mass = integrate(dist.density.pdf, c, dist.h, {.abs_tol = 1e-13}, dist.density.breakpoints);
  require(mass > 0.0, ErrorKind::ParameterOutOfRange, "no mass above the truncation point");
  auto g = dist.density.pdf;
  std::vector<double> breaks;
  for (double x : dist.density.breakpoints)
    if (x > c && x < dist.h) breaks.push_back(x);
  FitnessDistribution out{{dist.density.name + "_truncated", [g, mass](double x) { return g(x) / mass; }, breaks},
                          dist.h, c, std::nullopt, {}};
  if (dist.below_h) out.below_h = [tail = dist.below_h, mass](double s) { return tail(s) / mass; };
  if (dist.floor_near_h) out.floor_near_h = *dist.floor_near_h / mass;
  return out;
}

struct CrossCheckReport {
  PhaseResult phase;
  int n_cells = 0;
  double truncation = 0.0;
  double max_discrepancy = 0.0;
  double worst_lo = 0.0;
  double worst_hi = 0.0;
  int intervals = 0;
  double solver_residual = 0.0;
  double bracket_slack = 0.0;  ///< (1 - gamma)(1 + t) / (2t) of the partition
};

inline constexpr int kCrossCheckGrid = 10;

/// Compares the explicit limit measure of the truncated distribution with the
/// finite equilibrium of its cell discretization (kernel alpha(x, y) = x at
/// cell midpoints), over all intervals with endpoints on a uniform grid of
/// kCrossCheckGrid + 1 points.
inline CrossCheckReport cross_check(const FitnessDistribution& dist, int n_cells, double c) {
  require(c > 0.0, ErrorKind::ParameterOutOfRange, "truncation must be positive");
  const FitnessDistribution trunc = truncate(dist, c);
  CrossCheckReport rep;
  rep.n_cells = n_cells;
  rep.truncation = c;
  rep.phase = detect_phase(trunc);
  require(rep.phase.phase == Phase::FitGetRicher, ErrorKind::WrongPhase,
          "truncated distribution is in the innovation_pays_off phase");

  const ContinuousSpaceSpec spec = make_continuous_spec(Domain::interval(c, dist.h), trunc.density, Kernel::fitness());
  const DiscretizedSpace ds = discretize(spec, n_cells);
  const EquilibriumResult eq = solve_nu(midpoint_space(spec, ds));
  rep.solver_residual = eq.residual;
  rep.bracket_slack = (1.0 - ds.gamma) * (1.0 + ds.t) / (2.0 * ds.t);

  const double lambda0 = *rep.phase.lambda0;
  const double step = (dist.h - c) / kCrossCheckGrid;
  const double eps = 1e-9 * step;
  for (int i = 0; i < kCrossCheckGrid; ++i) {
    for (int j = i + 1; j <= kCrossCheckGrid; ++j) {
      const double a = c + step * i, b = j == kCrossCheckGrid ? dist.h : c + step * j;
      double discrete = 0.0;
      for (std::size_t k = 0; k < ds.size(); ++k)
        if (ds.cells[k].lo >= a - eps && ds.cells[k].hi <= b + eps) discrete += eq.nu[k];
      const double gap = std::abs(discrete - detail::nu_mass(lambda0, trunc, a, b));
      ++rep.intervals;
      if (gap > rep.max_discrepancy) {
        rep.max_discrepancy = gap;
        rep.worst_lo = a;
        rep.worst_hi = b;
      }
    }
  }
  return rep;
}

}  // namespace gpa
