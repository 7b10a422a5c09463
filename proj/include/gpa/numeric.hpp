#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpa/error.hpp"

namespace gpa {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      require(row.size() == cols_, ErrorKind::DimensionMismatch, "ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix out(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      require(rows[i].size() == out.cols_, ErrorKind::DimensionMismatch, "ragged matrix rows");
      std::copy(rows[i].begin(), rows[i].end(), out.data_.begin() + static_cast<std::ptrdiff_t>(i * out.cols_));
    }
    return out;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> values() const { return data_; }

  double max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }
  double min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double sum(std::span<const double> v) {
  // Neumaier summation; simplex checks compare sums against 1 at 1e-12.
  double s = 0.0, c = 0.0;
  for (double x : v) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  }
  return s + c;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct QuadratureOptions {
  double abs_tol = 1e-10;
  int initial_panels = 8;
  int max_depth = 52;
  long max_evaluations = 4'000'000;
};

namespace detail {

struct SimpsonState {
  const std::function<double(double)>& f;
  const QuadratureOptions& opt;
  long evaluations = 0;
  bool failed = false;
  double unresolved = 0.0;  ///< error estimates of panels cut off by max_depth

  double eval(double x) {
    ++evaluations;
    return f(x);
  }

  double recurse(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = eval(lm), frm = eval(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(left) + std::abs(right));
    if (std::abs(delta) <= std::max(15.0 * tol, roundoff) || !(b - a > 0.0) || m <= a || m >= b) {
      return left + right + delta / 15.0;
    }
    if (evaluations > opt.max_evaluations || !std::isfinite(delta)) {
      failed = true;
      return left + right + delta / 15.0;
    }
    if (depth >= opt.max_depth) {
      unresolved += std::abs(delta) / 15.0;
      return left + right + delta / 15.0;
    }
    return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
           recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
  }
};

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b]. The interval is first cut at
/// every breakpoint inside (a, b) and then into `initial_panels` equal panels,
/// so narrow features between breakpoints are not skipped by the first
/// sampling. Panels that reach max_depth are kept, and their error estimates
/// are summed; QuadratureFailure is thrown when that sum exceeds abs_tol or the
/// evaluation budget runs out.
inline double integrate(const std::function<double(double)>& f, double a, double b, QuadratureOptions opt = {},
                        std::span<const double> breakpoints = {}) {
  if (a == b) return 0.0;
  if (a > b) return -integrate(f, b, a, opt, breakpoints);
  std::vector<double> cuts{a};
  for (double x : breakpoints)
    if (x > a && x < b) cuts.push_back(x);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  detail::SimpsonState state{f, opt};
  const int panels_per_piece = std::max(1, opt.initial_panels);
  const double panel_tol = opt.abs_tol / static_cast<double>((cuts.size() - 1) * panels_per_piece);
  double total = 0.0;
  for (std::size_t piece = 0; piece + 1 < cuts.size(); ++piece) {
    const double lo = cuts[piece], hi = cuts[piece + 1];
    for (int p = 0; p < panels_per_piece; ++p) {
      const double pa = lo + (hi - lo) * p / panels_per_piece;
      const double pb = p + 1 == panels_per_piece ? hi : lo + (hi - lo) * (p + 1) / panels_per_piece;
      const double fa = state.eval(pa), fb = state.eval(pb), fm = state.eval(0.5 * (pa + pb));
      const double whole = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
      total += state.recurse(pa, pb, fa, fm, fb, whole, panel_tol, 0);
    }
  }
  if (state.failed || state.unresolved > opt.abs_tol || !std::isfinite(total)) {
    fail(ErrorKind::QuadratureFailure,
         "adaptive Simpson did not reach tolerance " + std::to_string(opt.abs_tol) + " on [" + std::to_string(a) +
             ", " + std::to_string(b) + "]");
  }
  return total;
}

/// Bisection for a sign change of f on [lo, hi]. Stops when the bracket is
/// narrower than x_tol or f vanishes exactly at the midpoint.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double x_tol,
                     int max_iterations = 400) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0)) {
    fail(ErrorKind::NoSignChange, "f(" + std::to_string(lo) + ")=" + std::to_string(flo) + " and f(" +
                                      std::to_string(hi) + ")=" + std::to_string(fhi) + " share a sign");
  }
  for (int it = 0; it < max_iterations && hi - lo > x_tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// log(Gamma(x + c) / Gamma(x)) for x > 0, x + c > 0, evaluated without
/// forming the two large log-Gamma values: arguments are shifted above 10 by
/// the recurrence and the Stirling series is differenced term by term.
inline double log_gamma_ratio(double x, double c) {
  double shift = 0.0;
  while (x < 10.0 || x + c < 10.0) {
    shift -= std::log1p(c / x);
    x += 1.0;
  }
  auto series = [](double z) {
    const double r = 1.0 / z, r2 = r * r;
    return r * (1.0 / 12.0 -
                r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * 691.0 / 360360.0)))));
  };
  const double main = (x - 0.5) * std::log1p(c / x) + c * std::log(x + c) - c;
  return shift + main + (series(x + c) - series(x));
}

}  // namespace gpa
