#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "gpa/error.hpp"
#include "gpa/numeric.hpp"

namespace gpa {

inline constexpr double kSimplexTol = 1e-12;

/// N locations z_1..z_N with weights mu_i and kernel a(i, j) = alpha(z_i, z_j):
/// the attractiveness of an existing vertex at z_i to a newcomer at z_j.
class FiniteLocationSpace {
 public:
  FiniteLocationSpace(std::vector<double> mu, Matrix kernel) : mu_(std::move(mu)), kernel_(std::move(kernel)) {
    const std::size_t n = mu_.size();
    require(n >= 1, ErrorKind::DimensionMismatch, "space needs at least one location");
    require(kernel_.rows() == n && kernel_.cols() == n, ErrorKind::DimensionMismatch,
            "kernel is " + std::to_string(kernel_.rows()) + "x" + std::to_string(kernel_.cols()) + ", mu has " +
                std::to_string(n) + " entries");
    for (double m : mu_) {
      require(std::isfinite(m) && m >= 0.0, ErrorKind::NotAProbabilityVector, "mu entries must be finite and >= 0");
    }
    const double total = sum(mu_);
    require(std::abs(total - 1.0) <= kSimplexTol, ErrorKind::NotAProbabilityVector,
            "mu sums to " + std::to_string(total));
    for (double a : kernel_.values()) {
      require(std::isfinite(a), ErrorKind::DimensionMismatch, "kernel entries must be finite");
      require(a >= 0.0, ErrorKind::NegativeKernelEntry, "kernel entry " + std::to_string(a) + " < 0");
    }
  }

  std::size_t size() const { return mu_.size(); }
  const std::vector<double>& mu() const { return mu_; }
  double mu(std::size_t i) const { return mu_[i]; }
  const Matrix& kernel() const { return kernel_; }
  double a(std::size_t i, std::size_t j) const { return kernel_(i, j); }

  /// Smallest kernel entry; positive iff the space satisfies the kernel-floor hypothesis.
  double kernel_floor() const { return kernel_.min(); }
  bool theorem1_compliant() const { return kernel_floor() > 0.0; }

 private:
  std::vector<double> mu_;
  Matrix kernel_;
};

inline FiniteLocationSpace build_finite_space(std::vector<double> mu, Matrix kernel) {
  return FiniteLocationSpace(std::move(mu), std::move(kernel));
}

/// S = {0, 1}, mu = (p, 1 - p), alpha(0,0) = alpha(1,1) = 1, alpha(0,1) = alpha(1,0) = a.
inline FiniteLocationSpace two_point_space(double p, double a) {
  require(p > 0.0 && p < 1.0, ErrorKind::ParameterOutOfRange, "p must lie in (0,1), got " + std::to_string(p));
  require(a > 0.0 && std::isfinite(a), ErrorKind::ParameterOutOfRange, "a must be positive, got " + std::to_string(a));
  return FiniteLocationSpace({p, 1.0 - p}, Matrix{{1.0, a}, {a, 1.0}});
}

// ---------------------------------------------------------------------------
// Continuous spaces

struct Domain {
  enum class Kind { Interval, Circle };
  Kind kind = Kind::Interval;
  double lo = 0.0;
  double hi = 1.0;

  static Domain interval(double lo, double hi) {
    require(hi > lo, ErrorKind::ParameterOutOfRange, "interval needs lo < hi");
    return {Kind::Interval, lo, hi};
  }
  static Domain circle(double circumference) {
    require(circumference > 0.0, ErrorKind::ParameterOutOfRange, "circle circumference must be positive");
    return {Kind::Circle, 0.0, circumference};
  }

  double length() const { return hi - lo; }
  double diameter() const { return kind == Kind::Circle ? 0.5 * length() : length(); }
  double distance(double x, double y) const {
    const double d = std::abs(x - y);
    return kind == Kind::Circle ? std::min(d, length() - d) : d;
  }
  std::string describe() const {
    return kind == Kind::Circle ? "circle(L=" + std::to_string(length()) + ")"
                                : "interval[" + std::to_string(lo) + "," + std::to_string(hi) + "]";
  }
};

/// Catalogue of attractiveness kernels. Each entry knows the Lipschitz
/// constant K of log(alpha) (per component, in the domain metric) and exact
/// global floor/ceiling on a given domain.
class Kernel {
 public:
  enum class Kind { Constant, ExpDecay, ShiftedPower, Fitness, Custom };

  static Kernel constant(double c) {
    require(c > 0.0, ErrorKind::ParameterOutOfRange, "constant kernel needs c > 0");
    Kernel k(Kind::Constant, "constant(" + fmt(c) + ")");
    k.p1_ = c;
    return k;
  }
  /// alpha(x, y) = exp(-c * rho(x, y))
  static Kernel exp_decay(double c) {
    require(c >= 0.0, ErrorKind::ParameterOutOfRange, "exp_decay needs c >= 0");
    Kernel k(Kind::ExpDecay, "exp_decay(" + fmt(c) + ")");
    k.p1_ = c;
    return k;
  }
  /// alpha(x, y) = (s + rho(x, y))^(-beta), s > 0
  static Kernel shifted_power(double s, double beta) {
    require(s > 0.0, ErrorKind::ParameterOutOfRange, "shifted_power needs s > 0");
    require(beta >= 0.0, ErrorKind::ParameterOutOfRange, "shifted_power needs beta >= 0");
    Kernel k(Kind::ShiftedPower, "shifted_power(" + fmt(s) + "," + fmt(beta) + ")");
    k.p1_ = s;
    k.p2_ = beta;
    return k;
  }
  /// alpha(x, y) = x; the location of a vertex is its fitness.
  static Kernel fitness() { return Kernel(Kind::Fitness, "fitness"); }
  static Kernel custom(std::string name, std::function<double(double, double)> fn, double log_lipschitz,
                       double floor, double ceiling) {
    require(floor > 0.0 && floor <= ceiling, ErrorKind::ParameterOutOfRange, "custom kernel needs 0 < floor <= ceiling");
    Kernel k(Kind::Custom, std::move(name));
    k.fn_ = std::move(fn);
    k.p1_ = log_lipschitz;
    k.floor_ = floor;
    k.ceiling_ = ceiling;
    return k;
  }

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }

  double operator()(const Domain& d, double x, double y) const {
    switch (kind_) {
      case Kind::Constant: return p1_;
      case Kind::ExpDecay: return std::exp(-p1_ * d.distance(x, y));
      case Kind::ShiftedPower: return std::pow(p1_ + d.distance(x, y), -p2_);
      case Kind::Fitness: return x;
      case Kind::Custom: return fn_(x, y);
    }
    return 0.0;
  }

  double log_lipschitz(const Domain& d) const {
    switch (kind_) {
      case Kind::Constant: return 0.0;
      case Kind::ExpDecay: return p1_;
      case Kind::ShiftedPower: return p2_ / p1_;
      case Kind::Fitness: check_fitness_domain(d); return 1.0 / d.lo;
      case Kind::Custom: return p1_;
    }
    return 0.0;
  }
  double floor(const Domain& d) const {
    switch (kind_) {
      case Kind::Constant: return p1_;
      case Kind::ExpDecay: return std::exp(-p1_ * d.diameter());
      case Kind::ShiftedPower: return std::pow(p1_ + d.diameter(), -p2_);
      case Kind::Fitness: check_fitness_domain(d); return d.lo;
      case Kind::Custom: return floor_;
    }
    return 0.0;
  }
  double ceiling(const Domain& d) const {
    switch (kind_) {
      case Kind::Constant: return p1_;
      case Kind::ExpDecay: return 1.0;
      case Kind::ShiftedPower: return std::pow(p1_, -p2_);
      case Kind::Fitness: check_fitness_domain(d); return d.hi;
      case Kind::Custom: return ceiling_;
    }
    return 0.0;
  }

 private:
  Kernel(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  static std::string fmt(double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }
  static void check_fitness_domain(const Domain& d) {
    require(d.kind == Domain::Kind::Interval && d.lo > 0.0, ErrorKind::ParameterOutOfRange,
            "fitness kernel needs an interval bounded away from zero");
  }

  Kind kind_;
  std::string name_;
  double p1_ = 0.0;
  double p2_ = 0.0;
  double floor_ = 0.0;
  double ceiling_ = 0.0;
  std::function<double(double, double)> fn_;
};

/// Probability density on a domain, with the points where it may be
/// non-smooth so quadrature can split there.
struct Density {
  std::string name;
  std::function<double(double)> pdf;
  std::vector<double> breakpoints;

  double operator()(double x) const { return pdf(x); }

  static Density uniform(const Domain& d) {
    const double v = 1.0 / d.length();
    return {"uniform", [v](double) { return v; }, {}};
  }
  /// Proportional to (x - lo): the "2x on [0,1]" family.
  static Density linear(const Domain& d) {
    const double lo = d.lo, norm = 2.0 / (d.length() * d.length());
    return {"linear", [lo, norm](double x) { return norm * (x - lo); }, {}};
  }
  /// (1 + amplitude * cos(2 pi (x - lo) / length)) / length, |amplitude| <= 1.
  static Density cosine(const Domain& d, double amplitude) {
    require(std::abs(amplitude) <= 1.0, ErrorKind::ParameterOutOfRange, "cosine density needs |amplitude| <= 1");
    const double lo = d.lo, len = d.length();
    return {"cosine", [=](double x) { return (1.0 + amplitude * std::cos(2.0 * std::numbers::pi * (x - lo) / len)) / len; }, {}};
  }
  /// (beta + 1) (hi - x)^beta / length^(beta + 1), beta > -1.
  static Density power(const Domain& d, double beta) {
    require(beta > -1.0, ErrorKind::ParameterOutOfRange, "power density needs beta > -1");
    const double hi = d.hi, len = d.length();
    const double norm = (beta + 1.0) / std::pow(len, beta + 1.0);
    return {"power", [=](double x) { return norm * std::pow(std::max(hi - x, 0.0), beta); }, {}};
  }
  /// Uniform on [a, b] inside the domain, zero elsewhere.
  static Density bump(double a, double b) {
    require(b > a, ErrorKind::ParameterOutOfRange, "bump density needs a < b");
    const double v = 1.0 / (b - a);
    return {"bump", [=](double x) { return x >= a && x <= b ? v : 0.0; }, {a, b}};
  }
};

struct ContinuousSpaceSpec {
  Domain domain;
  Density density;
  Kernel kernel;
  double log_kernel_lipschitz = 0.0;
  double kernel_floor = 0.0;
  double kernel_ceiling = 0.0;

  double alpha(double x, double y) const { return kernel(domain, x, y); }
};

/// Validates the density normalization by quadrature and samples the kernel on
/// a grid against the catalogue floor/ceiling.
inline ContinuousSpaceSpec make_continuous_spec(Domain domain, Density density, Kernel kernel) {
  const double mass = integrate(density.pdf, domain.lo, domain.hi, {.abs_tol = 1e-12}, density.breakpoints);
  require(std::abs(mass - 1.0) <= 1e-9, ErrorKind::NotAProbabilityVector,
          "density '" + density.name + "' integrates to " + std::to_string(mass));
  ContinuousSpaceSpec spec{domain, std::move(density), std::move(kernel)};
  spec.log_kernel_lipschitz = spec.kernel.log_lipschitz(domain);
  spec.kernel_floor = spec.kernel.floor(domain);
  spec.kernel_ceiling = spec.kernel.ceiling(domain);
  require(spec.kernel_floor > 0.0 && spec.kernel_floor <= spec.kernel_ceiling, ErrorKind::ParameterOutOfRange,
          "kernel floor/ceiling inconsistent");
  constexpr int probe = 48;
  for (int i = 0; i < probe; ++i) {
    for (int j = 0; j < probe; ++j) {
      const double x = domain.lo + domain.length() * (i + 0.5) / probe;
      const double y = domain.lo + domain.length() * (j + 0.5) / probe;
      const double v = spec.alpha(x, y);
      require(v >= spec.kernel_floor * (1 - 1e-12) && v <= spec.kernel_ceiling * (1 + 1e-12),
              ErrorKind::ParameterOutOfRange,
              "kernel " + spec.kernel.name() + " leaves [floor, ceiling] at (" + std::to_string(x) + ", " +
                  std::to_string(y) + ")");
    }
  }
  return spec;
}

struct Cell {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

struct KernelBounds {
  double sup = 0.0;   ///< >= sup of alpha over the cell pair
  double inf = 0.0;   ///< <= inf of alpha over the cell pair
  double mesh = 0.0;  ///< Lipschitz correction radius used for inflation
};

inline constexpr int kDefaultKernelGrid = 16;

/// Certified kernel bounds over cell_i x cell_j. alpha is evaluated at the
/// midpoints of a g x g sub-grid; every point of the pair is within
/// length/(2g) of a grid point in each coordinate, so log(alpha) differs from
/// a grid value by at most K * mesh with mesh = (len_i + len_j) / (2g).
/// The estimates are then clamped to the kernel's exact floor and ceiling.
inline KernelBounds kernel_bounds(const ContinuousSpaceSpec& spec, const Cell& ci, const Cell& cj,
                                  int grid = kDefaultKernelGrid) {
  require(grid >= 1, ErrorKind::ParameterOutOfRange, "kernel grid must be >= 1");
  double lo = INFINITY, hi = 0.0;
  for (int u = 0; u < grid; ++u) {
    const double x = ci.lo + ci.length() * (u + 0.5) / grid;
    for (int w = 0; w < grid; ++w) {
      const double y = cj.lo + cj.length() * (w + 0.5) / grid;
      const double v = spec.alpha(x, y);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double mesh = (ci.length() + cj.length()) / (2.0 * grid);
  const double inflate = std::exp(spec.log_kernel_lipschitz * mesh);
  // 1e-14 outward rounding covers the evaluation error of exp/pow.
  KernelBounds b;
  b.mesh = mesh;
  b.sup = std::min(spec.kernel_ceiling, hi * inflate * (1.0 + 1e-14));
  b.inf = std::max(spec.kernel_floor, lo / inflate * (1.0 - 1e-14));
  return b;
}

/// Equal-length partition of a continuous space with the sup/inf kernel
/// matrices of the coupling construction.
struct DiscretizedSpace {
  Domain domain;
  std::vector<Cell> cells;
  std::vector<double> mu;
  Matrix a_sup;
  Matrix b_inf;
  double gamma = 1.0;  ///< min_{i,j} b_ij / a_ij
  double h = 0.0;      ///< max_{i,j} a_ij
  double t = 1.0;      ///< min_{i,j} b_ij / h
  double epsilon = 0.0;
  double log_lipschitz = 0.0;
  int grid = kDefaultKernelGrid;

  std::size_t size() const { return cells.size(); }

  std::size_t cell_of(double x) const {
    const double rel = (x - domain.lo) / domain.length();
    const auto n = static_cast<double>(cells.size());
    const auto idx = static_cast<long>(std::floor(rel * n));
    return static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(cells.size()) - 1));
  }

  /// The N-location space with kernel a_sup.
  FiniteLocationSpace sup_space() const { return FiniteLocationSpace(mu, a_sup); }

  /// Locations {0, 1, ..., N}: location 0 is the dustbin with mu_0 = 0 and
  /// attractiveness h in both directions; cell c is location c + 1.
  FiniteLocationSpace dustbin_space() const {
    const std::size_t n = cells.size();
    std::vector<double> ext_mu(n + 1, 0.0);
    std::copy(mu.begin(), mu.end(), ext_mu.begin() + 1);
    Matrix k(n + 1, n + 1, h);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) k(i + 1, j + 1) = a_sup(i, j);
    return FiniteLocationSpace(std::move(ext_mu), std::move(k));
  }
};

/// Recomputes gamma, h and t from the stored matrices.
inline void refresh_coupling_constants(DiscretizedSpace& ds) {
  const std::size_t n = ds.size();
  ds.h = ds.a_sup.max();
  double gamma = INFINITY, bmin = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      gamma = std::min(gamma, ds.b_inf(i, j) / ds.a_sup(i, j));
      bmin = std::min(bmin, ds.b_inf(i, j));
    }
  }
  ds.gamma = std::min(gamma, 1.0);
  ds.t = std::min(bmin / ds.h, 1.0);
}

inline DiscretizedSpace discretize(const ContinuousSpaceSpec& spec, int n_cells, int grid = kDefaultKernelGrid) {
  require(n_cells >= 1, ErrorKind::ParameterOutOfRange, "n_cells must be >= 1");
  const auto n = static_cast<std::size_t>(n_cells);
  DiscretizedSpace ds;
  ds.domain = spec.domain;
  ds.grid = grid;
  ds.log_lipschitz = spec.log_kernel_lipschitz;
  const double len = spec.domain.length() / n_cells;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = spec.domain.lo + len * static_cast<double>(i);
    const double hi = i + 1 == n ? spec.domain.hi : spec.domain.lo + len * static_cast<double>(i + 1);
    ds.cells.push_back({lo, hi});
  }
  ds.epsilon = spec.domain.kind == Domain::Kind::Circle ? std::min(len, 0.5 * spec.domain.length()) : len;

  ds.mu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.mu[i] = integrate(spec.density.pdf, ds.cells[i].lo, ds.cells[i].hi, {.abs_tol = 1e-10},
                         spec.density.breakpoints);
    ds.mu[i] = std::max(ds.mu[i], 0.0);
  }
  // Redistribute the quadrature residual proportionally, then pin the largest
  // entry so the stored vector sums to one.
  const double total = sum(ds.mu);
  require(total > 0.0, ErrorKind::QuadratureFailure, "density has no mass on the cells");
  for (double& m : ds.mu) m /= total;
  const auto big = static_cast<std::size_t>(std::max_element(ds.mu.begin(), ds.mu.end()) - ds.mu.begin());
  ds.mu[big] = 0.0;
  ds.mu[big] = 1.0 - sum(ds.mu);

  ds.a_sup = Matrix(n, n);
  ds.b_inf = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const KernelBounds kb = kernel_bounds(spec, ds.cells[i], ds.cells[j], grid);
      ds.a_sup(i, j) = kb.sup;
      ds.b_inf(i, j) = kb.inf;
    }
  }
  refresh_coupling_constants(ds);
  require(ds.gamma >= std::exp(-2.0 * ds.log_lipschitz * ds.epsilon) * (1.0 - 1e-12), ErrorKind::ParameterOutOfRange,
          "acceptance ratio below exp(-2 K eps); kernel Lipschitz constant understated");
  return ds;
}

/// Finite space on the cells with the kernel evaluated at cell midpoints.
inline FiniteLocationSpace midpoint_space(const ContinuousSpaceSpec& spec, const DiscretizedSpace& ds) {
  const std::size_t n = ds.size();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = spec.alpha(ds.cells[i].midpoint(), ds.cells[j].midpoint());
  return FiniteLocationSpace(ds.mu, std::move(k));
}

}  // namespace gpa
