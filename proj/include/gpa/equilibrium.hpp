#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpa/checks.hpp"
#include "gpa/error.hpp"
#include "gpa/numeric.hpp"
#include "gpa/space.hpp"

namespace gpa {

struct SolverOptions {
  double tol = 1e-12;
  long max_iterations = 1'000'000;
  bool record_trace = false;
};

struct EquilibriumResult {
  std::vector<double> nu;
  std::vector<double> phi;
  double lyapunov_value = 0.0;
  double residual = 0.0;  ///< max_i |G_i(nu)|
  long iterations = 0;
  std::vector<double> lyapunov_trace;  ///< V after every accepted step (record_trace)
  std::vector<double> descent_trace;   ///< V(y_new) - V(y_old), evaluated without cancellation
};

namespace detail {

/// Drift of the edge-end proportions on the simplex:
///   G_i(y) = 1/2 s_i + 1/2 gamma y_i sum_j mu_j a_ij / D_j(y) - y_i,
///   D_j(y) = sum_k y_k a_kj,
/// with Lyapunov function
///   V(y) = sum_k y_k - 1/2 [ sum_i s_i log y_i + gamma sum_j mu_j log D_j(y) ],
/// which satisfies G_i = -y_i dV/dy_i. The finite process has s = mu and
/// gamma = 1; the dustbin process has s = (1 - gamma, mu_1..mu_N).
struct DriftSystem {
  std::vector<double> source;
  std::vector<double> mu;  // newcomer law over columns
  Matrix kernel;
  double gamma = 1.0;

  std::size_t size() const { return source.size(); }

  void denominators(std::span<const double> y, std::vector<double>& d) const {
    const std::size_t n = size();
    d.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto row = kernel.row(k);
      for (std::size_t j = 0; j < n; ++j) d[j] += y[k] * row[j];
    }
  }

  /// c_i = sum_j mu_j a_ij / D_j
  void pull(std::span<const double> d, std::vector<double>& c) const {
    const std::size_t n = size();
    c.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = kernel.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (mu[j] > 0.0) acc += mu[j] * row[j] / d[j];
      c[i] = acc;
    }
  }

  void field(std::span<const double> y, std::vector<double>& g) const {
    std::vector<double> d, c;
    denominators(y, d);
    pull(d, c);
    g.resize(size());
    for (std::size_t i = 0; i < size(); ++i) g[i] = 0.5 * source[i] + 0.5 * gamma * y[i] * c[i] - y[i];
  }

  double lyapunov(std::span<const double> y) const {
    std::vector<double> d;
    denominators(y, d);
    double logs = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      if (source[i] > 0.0) logs += source[i] * std::log(y[i]);
    for (std::size_t j = 0; j < size(); ++j)
      if (mu[j] > 0.0) logs += gamma * mu[j] * std::log(d[j]);
    return sum(y) - 0.5 * logs;
  }

  /// V(y + delta) - V(y) through log1p of relative increments, accurate even
  /// when the difference is far below the rounding level of V itself.
  double lyapunov_change(std::span<const double> y, std::span<const double> d, std::span<const double> delta) const {
    const std::size_t n = size();
    double change = sum(delta);
    double logs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (source[i] > 0.0) logs += source[i] * std::log1p(delta[i] / y[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (mu[j] <= 0.0) continue;
      double dd = 0.0;
      for (std::size_t k = 0; k < n; ++k) dd += delta[k] * kernel(k, j);
      logs += gamma * mu[j] * std::log1p(dd / d[j]);
    }
    return change - 0.5 * logs;
  }
};

/// Damped Euler iteration y <- y + eta G(y) with Armijo backtracking on V.
/// The step size grows after accepted steps and halves on rejection or when
/// a coordinate would drop below its floor. Converged when both max|G_i| and
/// max|G_i| / y_i are within tol.
inline EquilibriumResult solve_drift(const DriftSystem& sys, std::vector<double> y, const SolverOptions& opt) {
  const std::size_t n = sys.size();
  std::vector<double> floor(n);
  for (std::size_t i = 0; i < n; ++i) {
    // nu_i >= s_i / 2 at the fixed point, so these floors never bind there.
    floor[i] = std::min(1e-14, 0.25 * sys.source[i]);
  }
  EquilibriumResult res;
  std::vector<double> g, d, trial(n), delta(n);
  double eta = 1.0;
  long stalls = 0;
  for (long it = 0;; ++it) {
    sys.field(y, g);
    double abs_res = 0.0, rel_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      abs_res = std::max(abs_res, std::abs(g[i]));
      rel_res = std::max(rel_res, std::abs(g[i]) / y[i]);
    }
    if (abs_res <= opt.tol && rel_res <= opt.tol) {
      res.iterations = it;
      res.residual = abs_res;
      break;
    }
    if (it >= opt.max_iterations) {
      fail(ErrorKind::NonConvergence, "drift residual " + std::to_string(abs_res) + " after " + std::to_string(it) +
                                          " iterations");
    }
    sys.denominators(y, d);
    double decrease = 0.0;  // sum_i G_i^2 / y_i = -dV/d(eta) at eta = 0
    for (std::size_t i = 0; i < n; ++i) decrease += g[i] * g[i] / y[i];

    bool accepted = false;
    while (!accepted) {
      const double drift = sum(g) / static_cast<double>(n);
      bool inside = true;
      for (std::size_t i = 0; i < n; ++i) {
        delta[i] = eta * (g[i] - drift);
        trial[i] = y[i] + delta[i];
        inside = inside && trial[i] >= floor[i];
      }
      double change = 0.0;
      if (inside) {
        change = sys.lyapunov_change(y, d, delta);
        accepted = change <= -1e-4 * eta * decrease;
      }
      if (!accepted) {
        eta *= 0.5;
        if (eta < 1e-30) {
          // Descent is no longer measurable; accept the rounding-level residual.
          if (++stalls > 8 || abs_res > 1e3 * opt.tol) {
            fail(ErrorKind::NonConvergence, "line search stalled at residual " + std::to_string(abs_res));
          }
          res.iterations = it;
          res.residual = abs_res;
          goto done;
        }
      } else if (opt.record_trace) {
        res.descent_trace.push_back(change);
      }
    }
    {
      const double total = sum(trial);
      for (std::size_t i = 0; i < n; ++i) y[i] = trial[i] / total;
    }
    if (opt.record_trace) res.lyapunov_trace.push_back(sys.lyapunov(y));
    eta = std::min(eta * 2.0, 1e6);
  }
done:
  res.nu = std::move(y);
  res.lyapunov_value = sys.lyapunov(res.nu);
  return res;
}

inline void require_interior(std::span<const double> y, std::size_t n) {
  require(y.size() == n, ErrorKind::DimensionMismatch, "point has " + std::to_string(y.size()) + " coordinates, expected " +
                                                         std::to_string(n));
  for (double v : y) require(v > 0.0, ErrorKind::BoundaryPoint, "coordinate " + std::to_string(v) + " <= 0");
}

}  // namespace detail

/// V(y) = 1 - 1/2 sum_j mu_j (log y_j + log sum_k y_k a_kj), y interior.
inline double lyapunov_V(std::span<const double> y, const FiniteLocationSpace& space) {
  detail::require_interior(y, space.size());
  const std::size_t n = space.size();
  double logs = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (space.mu(j) <= 0.0) continue;
    double dj = 0.0;
    for (std::size_t k = 0; k < n; ++k) dj += y[k] * space.a(k, j);
    logs += space.mu(j) * (std::log(y[j]) + std::log(dj));
  }
  return 1.0 - 0.5 * logs;
}

/// G_i(y) = 1/2 mu_i + 1/2 sum_j mu_j a_ij y_i / sum_k y_k a_kj - y_i.
inline std::vector<double> vector_field_G(std::span<const double> y, const FiniteLocationSpace& space) {
  detail::require_interior(y, space.size());
  detail::DriftSystem sys{space.mu(), space.mu(), space.kernel(), 1.0};
  std::vector<double> g;
  sys.field(y, g);
  return g;
}

/// phi_i = sum_j mu_j a_ij / sum_k a_kj nu_k.
inline std::vector<double> compute_phi(const FiniteLocationSpace& space, std::span<const double> nu) {
  require(nu.size() == space.size(), ErrorKind::DimensionMismatch, "nu has wrong length");
  const std::size_t n = space.size();
  std::vector<double> d(n, 0.0), phi(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) d[j] += nu[k] * space.a(k, j);
  for (std::size_t j = 0; j < n; ++j)
    require(space.mu(j) <= 0.0 || d[j] > 0.0, ErrorKind::BoundaryPoint, "sum_k a_kj nu_k vanishes");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (space.mu(j) > 0.0) phi[i] += space.mu(j) * space.a(i, j) / d[j];
  return phi;
}

/// Limiting edge-end measure: the interior minimizer of V, found by damped
/// Euler on G from y = mu. Locations with mu_i = 0 are removed when their
/// kernel row is zero (they can never gain edge ends, nu_i = 0) and rejected
/// otherwise.
inline EquilibriumResult solve_nu(const FiniteLocationSpace& space, SolverOptions opt = {}) {
  const std::size_t n = space.size();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (space.mu(i) > 0.0) {
      keep.push_back(i);
      continue;
    }
    bool row_zero = true;
    for (std::size_t j = 0; j < n; ++j) row_zero = row_zero && (space.mu(j) <= 0.0 || space.a(i, j) == 0.0);
    require(row_zero, ErrorKind::DegenerateMass,
            "location " + std::to_string(i) + " has mu = 0 but can attract edges; its limit is not covered");
  }
  const std::size_t r = keep.size();
  detail::DriftSystem sys;
  sys.source.resize(r);
  sys.kernel = Matrix(r, r);
  for (std::size_t a = 0; a < r; ++a) {
    sys.source[a] = space.mu(keep[a]);
    for (std::size_t b = 0; b < r; ++b) {
      const double v = space.a(keep[a], keep[b]);
      require(v > 0.0, ErrorKind::ZeroKernelRow,
              "kernel entry a(" + std::to_string(keep[a]) + "," + std::to_string(keep[b]) + ") is not positive");
      sys.kernel(a, b) = v;
    }
  }
  sys.mu = sys.source;
  EquilibriumResult reduced = detail::solve_drift(sys, sys.source, opt);

  EquilibriumResult out = std::move(reduced);
  std::vector<double> nu(n, 0.0);
  for (std::size_t a = 0; a < r; ++a) nu[keep[a]] = out.nu[a];
  out.nu = std::move(nu);
  out.phi = compute_phi(space, out.nu);
  return out;
}

/// Fitness at an arbitrary point x of a continuous space, from an equilibrium
/// of its midpoint discretization: sum_j mu_j alpha(x, x_j) / sum_k nu_k alpha(x_k, x_j).
inline double midpoint_phi(const ContinuousSpaceSpec& spec, const DiscretizedSpace& ds, std::span<const double> nu,
                           double x) {
  require(nu.size() == ds.size(), ErrorKind::DimensionMismatch, "nu has wrong length");
  const std::size_t n = ds.size();
  std::vector<double> terms(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double xj = ds.cells[j].midpoint();
    double dj = 0.0;
    for (std::size_t k = 0; k < n; ++k) dj += nu[k] * spec.alpha(ds.cells[k].midpoint(), xj);
    terms[j] = ds.mu[j] * spec.alpha(x, xj) / dj;
  }
  return sum(terms);
}

/// Named identity checks for a finite equilibrium.
inline std::vector<Check> check_identities(const FiniteLocationSpace& space, const EquilibriumResult& r, double tol) {
  double phi_gap = 0.0, nui_gap = 0.0, sum_nu_phi = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    sum_nu_phi += r.nu[i] * r.phi[i];
    nui_gap = std::max(nui_gap, std::abs(r.nu[i] - 0.5 * (space.mu(i) + r.nu[i] * r.phi[i])));
    if (r.nu[i] > 0.0) phi_gap = std::max(phi_gap, std::abs(r.phi[i] - (2.0 - space.mu(i) / r.nu[i])));
  }
  return {make_check("residual", r.residual, tol), make_check("phi_identity", phi_gap, 1e-8),
          make_check("sum_nu_phi", std::abs(sum_nu_phi - 1.0), 1e-10), make_check("nu_identity", nui_gap, 1e-10)};
}

/// Root in (0, 1) of
///   p (1/y + (1-a)/(y + a(1-y))) = (1-p) (1/(1-y) + (1-a)/(1-y+ay)),
/// the first coordinate of nu on the two-point space.
inline double solve_two_point(double p, double a) {
  require(p > 0.0 && p < 1.0, ErrorKind::ParameterOutOfRange, "p must lie in (0,1)");
  require(a > 0.0, ErrorKind::ParameterOutOfRange, "a must be positive");
  auto f = [p, a](double y) {
    return p * (1.0 / y + (1.0 - a) / (y + a * (1.0 - y))) - (1.0 - p) * (1.0 / (1.0 - y) + (1.0 - a) / (1.0 - y + a * y));
  };
  return bisect(f, 1e-15, 1.0 - 1e-15, 1e-14);
}

/// phi(0) and phi(1) on the two-point space at nu = (y0, 1 - y0).
inline std::pair<double, double> two_point_phi(double p, double a, double y0) {
  const double phi0 = p / (y0 + (1.0 - y0) * a) + (1.0 - p) * a / (1.0 - y0 + y0 * a);
  const double phi1 = (1.0 - p) / (1.0 - y0 + y0 * a) + p * a / (y0 + (1.0 - y0) * a);
  return {phi0, phi1};
}

// ---------------------------------------------------------------------------
// Dustbin equilibrium

struct DustbinEquilibrium {
  std::vector<double> nu;   ///< index 0 is the dustbin, cell c is index c + 1
  std::vector<double> phi;
  double gamma = 1.0;
  double h = 0.0;
  double t = 1.0;
  double residual = 0.0;
  double lyapunov_value = 0.0;
  long iterations = 0;
  std::vector<double> lyapunov_trace;
  std::vector<double> descent_trace;
};

namespace detail {

inline DriftSystem dustbin_system(const DiscretizedSpace& ds) {
  const FiniteLocationSpace ext = ds.dustbin_space();
  DriftSystem sys;
  sys.mu = ext.mu();
  sys.source = ext.mu();
  sys.source[0] = 1.0 - ds.gamma;
  sys.kernel = ext.kernel();
  sys.gamma = ds.gamma;
  return sys;
}

}  // namespace detail

/// Dustbin drift G^S over locations 0..N:
///   G_0 = 1/2 (1 - gamma) + 1/2 gamma y_0 sum_j mu_j h / D_j - y_0,
///   G_i = 1/2 mu_i + 1/2 gamma y_i sum_j mu_j a_ij / D_j - y_i,
/// with D_j = sum_{k=0..N} a_kj y_k.
inline std::vector<double> dustbin_field(std::span<const double> y, const DiscretizedSpace& ds) {
  detail::require_interior(y, ds.size() + 1);
  std::vector<double> g;
  detail::dustbin_system(ds).field(y, g);
  return g;
}

/// V^S(y) = sum_k y_k - 1/2 [(1 - gamma) log y_0 + sum_j mu_j log y_j
///                           + gamma sum_j mu_j log sum_k a_kj y_k].
inline double dustbin_lyapunov(std::span<const double> y, const DiscretizedSpace& ds) {
  detail::require_interior(y, ds.size() + 1);
  return detail::dustbin_system(ds).lyapunov(y);
}

/// phi^S_i = gamma sum_j mu_j a_ij / sum_{k=0..N} a_kj nu_k (a_0j = h).
inline std::vector<double> dustbin_phi(const DiscretizedSpace& ds, std::span<const double> nu) {
  const FiniteLocationSpace ext = ds.dustbin_space();
  std::vector<double> phi = compute_phi(ext, nu);
  for (double& p : phi) p *= ds.gamma;
  return phi;
}

inline DustbinEquilibrium solve_dustbin(const DiscretizedSpace& ds, SolverOptions opt = {}) {
  const std::size_t n = ds.size();
  require(ds.b_inf.min() > 0.0 && ds.gamma > 0.0, ErrorKind::ParameterOutOfRange, "dustbin needs b_ij > 0");
  for (std::size_t i = 0; i < n; ++i)
    require(ds.mu[i] > 0.0, ErrorKind::DegenerateMass, "cell " + std::to_string(i) + " has zero mass");

  DustbinEquilibrium out;
  out.gamma = ds.gamma;
  out.h = ds.h;
  out.t = ds.t;
  if (ds.gamma >= 1.0) {
    // No rejections: the dustbin never receives mass.
    const EquilibriumResult inner = solve_nu(ds.sup_space(), opt);
    out.nu.assign(n + 1, 0.0);
    std::copy(inner.nu.begin(), inner.nu.end(), out.nu.begin() + 1);
    out.residual = inner.residual;
    out.iterations = inner.iterations;
    out.lyapunov_trace = inner.lyapunov_trace;
    out.descent_trace = inner.descent_trace;
    out.lyapunov_value = inner.lyapunov_value;
  } else {
    const detail::DriftSystem sys = detail::dustbin_system(ds);
    std::vector<double> start(n + 1);
    start[0] = 0.5 * (1.0 - ds.gamma);
    for (std::size_t i = 0; i < n; ++i) start[i + 1] = ds.mu[i] * (1.0 - start[0]);
    EquilibriumResult r = detail::solve_drift(sys, std::move(start), opt);
    out.nu = std::move(r.nu);
    out.residual = r.residual;
    out.iterations = r.iterations;
    out.lyapunov_trace = std::move(r.lyapunov_trace);
    out.descent_trace = std::move(r.descent_trace);
    out.lyapunov_value = r.lyapunov_value;
  }
  out.phi = dustbin_phi(ds, out.nu);
  return out;
}

/// Bound and identity checks on a dustbin equilibrium.
inline std::vector<Check> check_dustbin_bounds(const DustbinEquilibrium& e) {
  const double nu0 = e.nu[0], phi0 = e.phi[0];
  double phi_ratio_gap = 0.0;  // max_i (t phi_0 - phi_i)
  for (std::size_t i = 1; i < e.phi.size(); ++i) phi_ratio_gap = std::max(phi_ratio_gap, e.t * phi0 - e.phi[i]);
  double sum_nu_phi = 0.0;
  for (std::size_t i = 0; i < e.nu.size(); ++i) sum_nu_phi += e.nu[i] * e.phi[i];
  return {
      make_check("nu0_identity", std::abs(nu0 - (1.0 - e.gamma) / (2.0 - phi0)), 1e-8),
      make_check("phi0_bound", phi0 - 2.0 / (1.0 + e.t), 1e-10),
      make_check("nu0_bound", nu0 - (1.0 - e.gamma) * (1.0 + e.t) / (2.0 * e.t), 1e-10),
      make_check("phi_ratio_bound", phi_ratio_gap, 1e-10),
      make_check("nu0_half", nu0 - 0.5, 1e-10),
      make_check("sum_nu_phi", std::abs(sum_nu_phi - e.gamma), 1e-10),
  };
}

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;
};

/// lower = sum of nu^S over the chosen cells (0-based cell indices),
/// upper = lower + (1 - gamma)(1 + t) / (2t).
inline Bracket borel_bracket(const DustbinEquilibrium& e, std::span<const std::size_t> cells) {
  const std::size_t n = e.nu.size() - 1;
  double lower = 0.0;
  std::vector<bool> used(n, false);
  for (std::size_t c : cells) {
    require(c < n, ErrorKind::DimensionMismatch, "cell index " + std::to_string(c) + " out of range");
    require(!used[c], ErrorKind::ParameterOutOfRange, "cell " + std::to_string(c) + " listed twice");
    used[c] = true;
    lower += e.nu[c + 1];
  }
  const double slack = (1.0 - e.gamma) * (1.0 + e.t) / (2.0 * e.t);
  return {lower, lower + slack};
}

inline Bracket borel_bracket(const DiscretizedSpace& ds, std::span<const std::size_t> cells) {
  return borel_bracket(solve_dustbin(ds), cells);
}

}  // namespace gpa
