// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gpa/gpa.hpp"
#include "generators.hpp"

using namespace gpa;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void info(const std::string& line) { std::printf("      %s\n", line.c_str()); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
}

// phi_i = sum_j mu_j a_ij / sum_k nu_k a_kj, computed here rather than by the library.
std::vector<double> phi_direct(const FiniteLocationSpace& s, const std::vector<double>& nu) {
  const std::size_t n = s.size();
  std::vector<double> phi(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double dj = 0.0;
    for (std::size_t k = 0; k < n; ++k) dj += nu[k] * s.a(k, j);
    for (std::size_t i = 0; i < n; ++i) phi[i] += s.mu()[j] * s.a(i, j) / dj;
  }
  return phi;
}

template <class F>
double tangent_fd_error(F f, const std::vector<double>& y, const std::vector<double>& grad, double step) {
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (i == j) continue;
      std::vector<double> up = y, down = y;
      up[i] += step, up[j] -= step;
      down[i] -= step, down[j] += step;
      const double fd = (f(up) - f(down)) / (2.0 * step);
      worst = std::max(worst, std::abs(fd - (grad[i] - grad[j])));
      scale = std::max(scale, std::abs(grad[i] - grad[j]));
    }
  }
  return worst / scale;
}

template <class F>
bool convex_on_segments(F f, std::mt19937_64& gen, std::size_t n, int trials) {
  for (int t = 0; t < trials; ++t) {
    const auto x = gpa_test::random_interior(gen, n), y = gpa_test::random_interior(gen, n);
    for (double lam : {0.25, 0.5, 0.75}) {
      std::vector<double> z(n);
      for (std::size_t i = 0; i < n; ++i) z[i] = lam * x[i] + (1 - lam) * y[i];
      if (f(z) > lam * f(x) + (1 - lam) * f(y) + 1e-12) return false;
    }
  }
  return true;
}

// Positive root of lambda log(lambda / (lambda - 1)) = 2 by bisection.
double uniform_lambda0() {
  double lo = 1.0 + 1e-12, hi = 4.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (mid * std::log(mid / (mid - 1.0)) > 2.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct RandomSpec {
  std::string label;
  ContinuousSpaceSpec spec;
  DiscretizedSpace ds;
};

std::vector<RandomSpec> coupling_specs() {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<RandomSpec> out;
  for (int k = 0; k < 10; ++k) {
    const bool circle = k % 2 == 0;
    const Domain d = circle ? Domain::circle(1.0) : Domain::interval(0.0, 1.0);
    const double c = 0.5 + 2.5 * unit(gen);
    const int cells = 8 + static_cast<int>(gen() % 25);
    const double amp = 1.6 * unit(gen) - 0.8;
    Density dens = k % 3 == 0 ? Density::uniform(d) : (k % 3 == 1 || circle ? Density::cosine(d, amp) : Density::linear(d));
    const std::string label = fmt("%s/%s/exp_decay(%.3f)/%d cells", circle ? "circle" : "interval", dens.name.c_str(), c, cells);
    auto spec = make_continuous_spec(d, std::move(dens), Kernel::exp_decay(c));
    auto ds = discretize(spec, cells);
    out.push_back({label, std::move(spec), std::move(ds)});
  }
  return out;
}

}  // namespace

int main() {
  criterion(1, "equilibrium identities on 200 random spaces", [] {
    std::mt19937_64 gen(1);
    double res = 0, phi_gap = 0, sum_gap = 0, nu_gap = 0;
    const auto t0 = Clock::now();
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + gen() % 9;
      const auto s = gpa_test::random_space(gen, n);
      const auto r = solve_nu(s);
      const auto phi = phi_direct(s, r.nu);
      res = std::max(res, r.residual);
      double snp = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        phi_gap = std::max(phi_gap, std::abs(phi[i] - (2.0 - s.mu()[i] / r.nu[i])));
        nu_gap = std::max(nu_gap, std::abs(r.nu[i] - 0.5 * (s.mu()[i] + r.nu[i] * phi[i])));
        snp += r.nu[i] * phi[i];
      }
      sum_gap = std::max(sum_gap, std::abs(snp - 1.0));
    }
    const double secs = seconds_since(t0);
    return Outcome{res <= 1e-12 && phi_gap <= 1e-8 && sum_gap <= 1e-10 && nu_gap <= 1e-10 && secs <= 30.0,
                   fmt("residual %.2e, phi gap %.2e, |sum nu phi - 1| %.2e, nu gap %.2e, %.2fs", res, phi_gap, sum_gap,
                       nu_gap, secs)};
  });

  criterion(2, "constant-kernel and m=1 reductions", [] {
    std::mt19937_64 gen(2);
    double nu_gap = 0, phi_gap = 0, pmf_gap = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 2 + gen() % 9;
      const auto rs = gpa_test::random_space(gen, n);
      const FiniteLocationSpace s(rs.mu(), Matrix(n, n, 1.0));
      const auto r = solve_nu(s);
      for (std::size_t i = 0; i < n; ++i) {
        nu_gap = std::max(nu_gap, std::abs(r.nu[i] - s.mu()[i]));
        phi_gap = std::max(phi_gap, std::abs(r.phi[i] - 1.0));
      }
    }
    for (int d = 1; d <= 100; ++d) {
      const double x = d;
      pmf_gap = std::max(pmf_gap, std::abs(theoretical_pmf({1, 1.0}, d) - 4.0 / (x * (x + 1) * (x + 2))));
    }
    return Outcome{nu_gap <= 1e-12 && phi_gap <= 1e-12 && pmf_gap <= 1e-12,
                   fmt("|nu - mu| %.2e, |phi - 1| %.2e, pmf gap %.2e", nu_gap, phi_gap, pmf_gap)};
  });

  criterion(3, "two-point closed forms on the 9x4 grid", [] {
    double y_gap = 0, phi_gap = 0;
    for (int ip = 1; ip <= 9; ++ip) {
      for (double a : {0.25, 0.5, 2.0, 4.0}) {
        const double p = ip / 10.0;
        const auto s = two_point_space(p, a);
        const auto r = solve_nu(s);
        const double y0 = solve_two_point(p, a);
        const auto [phi0, phi1] = two_point_phi(p, a, y0);
        const auto phi = compute_phi(s, r.nu);
        y_gap = std::max(y_gap, std::abs(y0 - r.nu[0]));
        phi_gap = std::max({phi_gap, std::abs(phi0 - phi[0]), std::abs(phi1 - phi[1])});
      }
    }
    return Outcome{y_gap <= 1e-9 && phi_gap <= 1e-9, fmt("|y0 - nu0| %.2e, phi gap %.2e", y_gap, phi_gap)};
  });

  // Criteria 4 and 5 share the runs.
  const auto two_point = two_point_space(0.7, 0.5);
  const auto tp_eq = solve_nu(two_point);
  struct TwoPointRun {
    double y_gap = 0, seconds = 0;
    std::vector<double> tv;
  };
  std::vector<TwoPointRun> tp_runs;
  std::string tp_error;
  try {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto t0 = Clock::now();
      SimConfig cfg;
      cfg.m = 2;
      cfg.seed = seed;
      CounterRng rng(seed);
      GraphState g = make_graph_state(two_point, cfg, rng);
      grow(g, two_point, 200'000, rng);
      TwoPointRun run;
      run.seconds = seconds_since(t0);
      const auto y = empirical_measure(g);
      for (std::size_t l = 0; l < 2; ++l) {
        run.y_gap = std::max(run.y_gap, std::abs(y[l] - tp_eq.nu[l]));
        run.tv.push_back(compare(degree_histogram(g, l), {2, tp_eq.phi[l], 1.0}, 50).total_variation);
      }
      tp_runs.push_back(run);
    }
  } catch (const std::exception& e) {
    tp_error = e.what();
  }

  criterion(4, "two-point (0.7, 0.5) convergence, 5 seeds x 2e5 steps", [&] {
    if (!tp_error.empty()) return Outcome{false, "exception: " + tp_error};
    bool ok = true;
    double worst = 0, slowest = 0;
    for (std::size_t k = 0; k < tp_runs.size(); ++k) {
      info(fmt("seed %zu: max |y - nu| %.4f, %.2fs", k + 1, tp_runs[k].y_gap, tp_runs[k].seconds));
      ok = ok && tp_runs[k].y_gap <= 0.02 && tp_runs[k].seconds <= 30.0;
      worst = std::max(worst, tp_runs[k].y_gap);
      slowest = std::max(slowest, tp_runs[k].seconds);
    }
    return Outcome{ok, fmt("worst max |y - nu| %.4f (<= 0.02), slowest seed %.2fs", worst, slowest)};
  });

  criterion(5, "two-point degree law and stationarity recursion", [&] {
    if (!tp_error.empty()) return Outcome{false, "exception: " + tp_error};
    double worst_tv = 0;
    for (std::size_t k = 0; k < tp_runs.size(); ++k) {
      info(fmt("seed %zu: TV location 0 %.4f, location 1 %.4f", k + 1, tp_runs[k].tv[0], tp_runs[k].tv[1]));
      for (double tv : tp_runs[k].tv) worst_tv = std::max(worst_tv, tv);
    }
    double rec_gap = 0;
    std::vector<double> phis{tp_eq.phi[0], tp_eq.phi[1]};
    for (int k = 1; k < 20; ++k) phis.push_back(0.1 * k);
    for (double phi : phis) {
      for (int m : {1, 2, 5}) {
        for (int d = m + 1; d <= 1000; ++d) {
          const DegreeLawParams p{m, phi, 1.0};
          rec_gap = std::max(rec_gap, std::abs(theoretical_pmf(p, d) * (1.0 + phi * d / 2.0) -
                                               theoretical_pmf(p, d - 1) * phi * (d - 1) / 2.0));
        }
      }
    }
    return Outcome{worst_tv <= 0.05 && rec_gap <= 1e-12, fmt("worst TV %.4f (<= 0.05), recursion gap %.2e", worst_tv, rec_gap)};
  });

  criterion(6, "mean degree 2m/(2-phi) for 50 random (m, phi)", [] {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> phi_dist(0.2, 1.9);
    double worst = 0;
    for (int k = 0; k < 50; ++k) {
      const DegreeLawParams p{1 + static_cast<int>(gen() % 10), phi_dist(gen), 1.0};
      worst = std::max(worst, std::abs(mean_by_summation(p, 2000) / theoretical_mean(p) - 1.0));
    }
    return Outcome{worst <= 1e-6, fmt("worst relative gap %.2e", worst)};
  });

  const std::vector<RandomSpec> specs = coupling_specs();

  criterion(7, "coupling domination on 10 random specs, 3 seeds x 1e4 steps", [&] {
    int violations = 0, caught = 0;
    for (const auto& rs : specs) {
      const LocationSampler sampler(rs.spec.domain, rs.spec.density);
      long long rejections = 0;
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SimConfig cfg;
        cfg.m = 2;
        cfg.seed = seed;
        CounterRng rng(seed);
        ContinuousGraphState g = make_continuous_state(rs.spec, sampler, cfg, rng);
        DustbinState d = make_dustbin_state(g, rs.ds);
        const CouplingReport rep = grow_coupled(g, d, rs.ds, rs.spec, sampler, 10'000, rng);
        if (!rep.domination_ok) {
          ++violations;
          info(rs.label + ": " + rep.diagnostic());
        }
        rejections += d.rejections;
      }
      DiscretizedSpace broken = rs.ds;
      for (std::size_t i = 0; i < broken.size(); ++i)
        for (std::size_t j = 0; j < broken.size(); ++j) broken.a_sup(i, j) *= 0.5;
      refresh_coupling_constants(broken);
      SimConfig cfg;
      cfg.m = 2;
      cfg.seed = 1;
      CounterRng rng(1);
      ContinuousGraphState g = make_continuous_state(rs.spec, sampler, cfg, rng);
      DustbinState d = make_dustbin_state(g, broken);
      const CouplingReport rep = grow_coupled(g, d, broken, rs.spec, sampler, 10'000, rng);
      bool thrown = false;
      try {
        rep.throw_if_violated();
      } catch (const CouplingViolation&) {
        thrown = true;
      }
      if (thrown) ++caught;
      info(fmt("%s: gamma %.4f, rejections %lld; fault injection %s", rs.label.c_str(), rs.ds.gamma, rejections,
               thrown ? rep.diagnostic().c_str() : "NOT detected"));
    }
    return Outcome{violations == 0 && caught == static_cast<int>(specs.size()),
                   fmt("%d violations in 30 runs, fault injection caught in %d/%zu specs", violations, caught, specs.size())};
  });

  criterion(8, "dustbin bounds on the same discretizations", [&] {
    bool ok = true;
    double worst_identity = 0, worst_phi_margin = INFINITY, worst_nu_margin = INFINITY, max_nu0 = 0;
    for (const auto& rs : specs) {
      const auto e = solve_dustbin(rs.ds);
      const double g = rs.ds.gamma, t = rs.ds.t;
      const double nu0 = e.nu[0], phi0 = e.phi[0];
      const double phi_margin = 2.0 / (1.0 + t) - phi0;
      const double nu_margin = (1.0 - g) * (1.0 + t) / (2.0 * t) - nu0;
      const double identity = std::abs(nu0 - (1.0 - g) / (2.0 - phi0));
      ok = ok && phi_margin >= 0 && nu_margin >= 0 && identity <= 1e-8 && nu0 <= 0.5;
      worst_identity = std::max(worst_identity, identity);
      worst_phi_margin = std::min(worst_phi_margin, phi_margin);
      worst_nu_margin = std::min(worst_nu_margin, nu_margin);
      max_nu0 = std::max(max_nu0, nu0);
    }
    return Outcome{ok, fmt("min phi0 slack %.4f, min nu0 slack %.4f, identity gap %.2e, max nu0 %.4f", worst_phi_margin,
                           worst_nu_margin, worst_identity, max_nu0)};
  });

  criterion(9, "Borel bracket and degree CDF bracket, 8-cell circle, 5 seeds x 1e4 steps", [] {
    const Domain dom = Domain::circle(1.0);
    const auto spec = make_continuous_spec(dom, Density::cosine(dom, 0.5), Kernel::exp_decay(1.0));
    const auto ds = discretize(spec, 8);
    const auto e = solve_dustbin(ds);
    const LocationSampler sampler(spec.domain, spec.density);

    // Cell-level phi range from a 256-cell midpoint equilibrium sampled on 65 points per cell.
    const auto fine = discretize(spec, 256);
    const auto fine_eq = solve_nu(midpoint_space(spec, fine));
    std::vector<double> phi_lo(8, INFINITY), phi_hi(8, -INFINITY);
    for (std::size_t c = 0; c < 8; ++c) {
      for (int k = 0; k <= 64; ++k) {
        const double x = ds.cells[c].lo + ds.cells[c].length() * k / 64.0;
        const double ph = midpoint_phi(spec, fine, fine_eq.nu, x);
        phi_lo[c] = std::min(phi_lo[c], ph);
        phi_hi[c] = std::max(phi_hi[c], ph);
      }
    }

    const int m = 2;
    bool borel_ok = true, cdf_ok = true;
    double worst_borel = -INFINITY, worst_cdf = INFINITY;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SimConfig cfg;
      cfg.m = m;
      cfg.seed = seed;
      CounterRng rng(seed);
      ContinuousGraphState g = make_continuous_state(spec, sampler, cfg, rng);
      grow_continuous(g, spec, sampler, 10'000, rng);
      const auto y = empirical_measure(g, ds);
      for (std::size_t start = 0; start < 8; ++start) {
        std::vector<std::size_t> half;
        double emp = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          half.push_back((start + k) % 8);
          emp += y[(start + k) % 8];
        }
        const Bracket b = borel_bracket(e, half);
        const double excess = std::max(b.lower - emp, emp - b.upper);
        worst_borel = std::max(worst_borel, excess);
        borel_ok = borel_ok && excess <= 0.0;
      }

      std::size_t cell = 0;
      std::int64_t best = -1;
      for (std::size_t c = 0; c < 8; ++c) {
        const auto h = degree_histogram(g, ds, c);
        if (h.vertices > best) best = h.vertices, cell = c;
      }
      const auto h = degree_histogram(g, ds, cell);
      if (h.vertices < 500) {
        cdf_ok = false;
        info(fmt("seed %llu: most populated cell has only %lld vertices", (unsigned long long)seed, (long long)h.vertices));
        continue;
      }
      std::int64_t cum = 0;
      double margin = INFINITY;
      std::int64_t at = m;
      for (std::int64_t d = m; d <= 30; ++d) {
        const auto it = h.counts.find(d);
        cum += it == h.counts.end() ? 0 : it->second;
        const double F = static_cast<double>(cum) / static_cast<double>(h.vertices);
        const CdfBracket b = theorem3_bracket(m, phi_hi[cell] + 0.05, phi_lo[cell] - 0.05, d);
        const double mrg = std::min(F - b.lower, b.upper - F);
        if (mrg < margin) margin = mrg, at = d;
      }
      worst_cdf = std::min(worst_cdf, margin);
      cdf_ok = cdf_ok && margin >= 0.0;
      info(fmt("seed %llu: cell %zu (%lld vertices, phi in [%.4f, %.4f]) smallest CDF margin %+.4f at d=%lld",
               (unsigned long long)seed, cell, (long long)h.vertices, phi_lo[cell], phi_hi[cell], margin, (long long)at));
    }
    return Outcome{borel_ok && cdf_ok, fmt("semicircles %s (largest excess %+.4f); degree CDF %s (smallest margin %+.4f)",
                                           borel_ok ? "inside" : "OUTSIDE", worst_borel, cdf_ok ? "inside" : "OUTSIDE",
                                           worst_cdf)};
  });

  criterion(10, "fitness phase, lambda0 and truncated cross-check", [] {
    const auto r = detect_phase(FitnessDistribution::uniform());
    const double oracle = uniform_lambda0();
    const double gap = r.lambda0 ? std::abs(*r.lambda0 - oracle) : INFINITY;
    const auto cc = cross_check(FitnessDistribution::uniform(), 100, 0.2);
    const bool ok = r.phase == Phase::FitGetRicher && gap <= 1e-8 && cc.max_discrepancy <= 0.02;
    return Outcome{ok, fmt("%s, lambda0 %.12f (gap %.2e), cross-check discrepancy %.2e", to_string(r.phase).c_str(),
                           r.lambda0.value_or(NAN), gap, cc.max_discrepancy)};
  });

  criterion(11, "gradient, convexity and CDF summation checks", [] {
    std::mt19937_64 gen(11);
    double fd_v = 0, fd_dust = 0, cdf_gap = 0;
    bool convex = true;
    for (int k = 0; k < 100; ++k) {
      const std::size_t n = 2 + k % 9;
      const auto s = gpa_test::random_space(gen, n);
      const auto y = gpa_test::random_interior(gen, n);
      const auto G = vector_field_G(y, s);
      std::vector<double> grad(n);
      for (std::size_t i = 0; i < n; ++i) grad[i] = -G[i] / y[i];
      fd_v = std::max(fd_v, tangent_fd_error([&](const std::vector<double>& z) { return lyapunov_V(z, s); }, y, grad, 1e-6));
      convex = convex && convex_on_segments([&](const std::vector<double>& z) { return lyapunov_V(z, s); }, gen, n, 1);
    }
    for (int k = 0; k < 100; ++k) {
      const Domain d = Domain::circle(1.0);
      const auto ds = discretize(make_continuous_spec(d, Density::cosine(d, 0.3), Kernel::exp_decay(1.0 + k % 4)), 1 + k % 7);
      const std::size_t n = ds.size() + 1;
      const auto y = gpa_test::random_interior(gen, n);
      const auto G = dustbin_field(y, ds);
      std::vector<double> grad(n);
      for (std::size_t i = 0; i < n; ++i) grad[i] = -G[i] / y[i];
      fd_dust = std::max(fd_dust,
                         tangent_fd_error([&](const std::vector<double>& z) { return dustbin_lyapunov(z, ds); }, y, grad, 1e-6));
      convex = convex && convex_on_segments([&](const std::vector<double>& z) { return dustbin_lyapunov(z, ds); }, gen, n, 1);
    }
    std::uniform_real_distribution<double> phi_dist(0.2, 1.9);
    for (int k = 0; k < 30; ++k) {
      const DegreeLawParams p{1 + static_cast<int>(gen() % 6), phi_dist(gen), 1.0};
      std::vector<double> terms;
      for (int d = p.m; d <= 1000; ++d) {
        terms.push_back(theoretical_pmf(p, d));
        cdf_gap = std::max(cdf_gap, std::abs(theoretical_cdf(p, d) - sum(terms)));
      }
    }
    return Outcome{fd_v <= 1e-6 && fd_dust <= 1e-6 && convex && cdf_gap <= 1e-12,
                   fmt("FD rel. error V %.2e, dustbin V %.2e; convexity %s; CDF vs summation %.2e", fd_v, fd_dust,
                       convex ? "holds" : "VIOLATED", cdf_gap)};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
