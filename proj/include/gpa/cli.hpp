#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "gpa/gpa.hpp"
#include "gpa/io.hpp"

#ifndef GPA_VERSION
#define GPA_VERSION "unknown"
#endif

namespace gpa::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigError = 2,
  kNonConvergence = 3,
  kCouplingViolation = 4,
  kCheckFailed = 5,
};

inline std::string version() { return std::string("gpa ") + GPA_VERSION; }

// ---------------------------------------------------------------------------
// Strict config reading

/// View of one JSON object in the config. Keys read through has(), the getters
/// or child() count as known; finish() rejects everything else.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), ErrorKind::ConfigError, where() + "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Node child(const std::string& key) {
    need(key);
    return Node(j_.at(key), sub(key));
  }
  std::optional<Node> optional_child(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return Node(j_.at(key), sub(key));
  }

  template <class T>
  T get(const std::string& key) {
    need(key);
    return convert<T>(j_.at(key), sub(key));
  }
  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(j_.at(key), sub(key));
  }
  template <class T>
  std::optional<T> maybe(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return convert<T>(j_.at(key), sub(key));
  }
  const json& raw(const std::string& key) {
    need(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      require(seen_.count(key) > 0, ErrorKind::ConfigError, sub(key) + ": unknown key");
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        require(v.is_number(), ErrorKind::ConfigError, path + ": expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        require(v.is_number_integer() || (v.is_number() && std::floor(v.get<double>()) == v.get<double>()),
                ErrorKind::ConfigError, path + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          require(v.get<double>() >= 0, ErrorKind::ConfigError, path + ": expected a non-negative integer");
        if (v.is_number_float()) return static_cast<T>(v.get<double>());
      } else if constexpr (std::is_same_v<T, bool>) {
        require(v.is_boolean(), ErrorKind::ConfigError, path + ": expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        require(v.is_string(), ErrorKind::ConfigError, path + ": expected a string");
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ConfigError, path + ": " + e.what());
    }
  }

 private:
  void need(const std::string& key) {
    require(has(key), ErrorKind::ConfigError, sub(key) + ": missing required key");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
std::vector<T> number_list(const json& v, const std::string& path) {
  require(v.is_array(), ErrorKind::ConfigError, path + ": expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Node::convert<T>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// ---------------------------------------------------------------------------
// Experiment config

struct SpaceConfig {
  enum class Kind { Finite, TwoPoint, Continuous };
  Kind kind = Kind::Finite;
  std::optional<FiniteLocationSpace> finite;
  double p = 0.0, a = 0.0;
  std::optional<ContinuousSpaceSpec> continuous;
  int n_cells = 0;
  int kernel_grid = kDefaultKernelGrid;
};

struct SimSection {
  int m = 1;
  long long steps = 0;
  std::vector<std::uint64_t> seeds{1};
  long long trajectory_stride = 0;
  bool edges = false;
  std::optional<SeedGraph> seed_graph;
  std::optional<std::vector<std::size_t>> seed_locations;
};

struct AnalysisSection {
  std::int64_t d_max = 50;
  std::int64_t slope_min_degree = 0;
  std::vector<std::vector<std::size_t>> cell_subsets;
  std::optional<double> tv_tolerance;
  std::optional<double> y_tolerance;
  double bracket_tolerance = 0.0;
};

struct CrossCheckSection {
  int n_cells = 100;
  double truncation = 0.2;
  double tolerance = 0.02;
};

struct FitnessSection {
  FitnessDistribution dist;
  std::optional<CrossCheckSection> cross_check;
};

struct ExperimentConfig {
  json raw;
  std::optional<SpaceConfig> space;
  std::optional<SimSection> sim;
  AnalysisSection analysis;
  std::optional<FitnessSection> fitness;
  SolverOptions solver;
  std::string out_dir = "gpa_out";
  bool write_csv = true;
};

inline Domain parse_domain(Node n) {
  const auto kind = n.get<std::string>("kind");
  Domain d;
  if (kind == "interval") {
    d = Domain::interval(n.get<double>("lo", 0.0), n.get<double>("hi", 1.0));
  } else if (kind == "circle") {
    d = Domain::circle(n.get<double>("length", 1.0));
  } else {
    fail(ErrorKind::ConfigError, n.sub("kind") + ": unknown domain '" + kind + "' (interval, circle)");
  }
  n.finish();
  return d;
}

inline Density parse_density(Node n, const Domain& d) {
  const auto name = n.get<std::string>("name");
  Density out;
  if (name == "uniform") {
    out = Density::uniform(d);
  } else if (name == "linear") {
    out = Density::linear(d);
  } else if (name == "cosine") {
    out = Density::cosine(d, n.get<double>("amplitude"));
  } else if (name == "power") {
    out = Density::power(d, n.get<double>("beta"));
  } else if (name == "bump") {
    out = Density::bump(n.get<double>("a"), n.get<double>("b"));
  } else {
    fail(ErrorKind::ConfigError, n.sub("name") + ": unknown density '" + name + "' (uniform, linear, cosine, power, bump)");
  }
  n.finish();
  return out;
}

inline Kernel parse_kernel(Node n) {
  const auto name = n.get<std::string>("name");
  Kernel k = Kernel::fitness();
  if (name == "constant") {
    k = Kernel::constant(n.get<double>("c", 1.0));
  } else if (name == "exp_decay") {
    k = Kernel::exp_decay(n.get<double>("c"));
  } else if (name == "shifted_power") {
    k = Kernel::shifted_power(n.get<double>("s"), n.get<double>("beta"));
  } else if (name != "fitness") {
    fail(ErrorKind::ConfigError, n.sub("name") + ": unknown kernel '" + name + "' (constant, exp_decay, shifted_power, fitness)");
  }
  n.finish();
  return k;
}

inline SpaceConfig parse_space(Node n) {
  SpaceConfig s;
  const auto type = n.get<std::string>("type");
  if (type == "finite") {
    s.kind = SpaceConfig::Kind::Finite;
    const auto mu = number_list<double>(n.raw("mu"), n.sub("mu"));
    const json& rows = n.raw("kernel");
    require(rows.is_array(), ErrorKind::ConfigError, n.sub("kernel") + ": expected an array of rows");
    std::vector<std::vector<double>> k;
    for (std::size_t i = 0; i < rows.size(); ++i)
      k.push_back(number_list<double>(rows[i], n.sub("kernel") + "[" + std::to_string(i) + "]"));
    s.finite = build_finite_space(mu, Matrix::from_rows(k));
  } else if (type == "two_point") {
    s.kind = SpaceConfig::Kind::TwoPoint;
    s.p = n.get<double>("p");
    s.a = n.get<double>("a");
    s.finite = two_point_space(s.p, s.a);
  } else if (type == "continuous") {
    s.kind = SpaceConfig::Kind::Continuous;
    const Domain d = parse_domain(n.child("domain"));
    Density dens = parse_density(n.child("density"), d);
    Kernel kern = parse_kernel(n.child("kernel"));
    s.continuous = make_continuous_spec(d, std::move(dens), std::move(kern));
    s.n_cells = n.get<int>("n_cells");
    require(s.n_cells >= 1, ErrorKind::ConfigError, n.sub("n_cells") + ": must be >= 1");
    s.kernel_grid = n.get<int>("kernel_grid", kDefaultKernelGrid);
    require(s.kernel_grid >= 1, ErrorKind::ConfigError, n.sub("kernel_grid") + ": must be >= 1");
  } else {
    fail(ErrorKind::ConfigError, n.sub("type") + ": unknown space type '" + type + "' (finite, two_point, continuous)");
  }
  n.finish();
  return s;
}

inline SimSection parse_sim(Node n) {
  SimSection s;
  s.m = n.get<int>("m");
  require(s.m >= 1, ErrorKind::ConfigError, n.sub("m") + ": must be >= 1");
  s.steps = n.get<long long>("steps");
  require(s.steps >= 0, ErrorKind::ConfigError, n.sub("steps") + ": must be >= 0");
  if (n.has("seeds")) s.seeds = number_list<std::uint64_t>(n.raw("seeds"), n.sub("seeds"));
  require(!s.seeds.empty(), ErrorKind::ConfigError, n.sub("seeds") + ": must not be empty");
  s.trajectory_stride = n.get<long long>("trajectory_stride", 0);
  require(s.trajectory_stride >= 0, ErrorKind::ConfigError, n.sub("trajectory_stride") + ": must be >= 0");
  s.edges = n.get<bool>("edges", false);
  if (auto g = n.optional_child("seed_graph")) {
    const auto n0 = g->get<std::size_t>("n0");
    if (g->has("edges")) {
      const json& e = g->raw("edges");
      require(e.is_array(), ErrorKind::ConfigError, g->sub("edges") + ": expected an array of pairs");
      std::vector<Edge> edges;
      for (std::size_t i = 0; i < e.size(); ++i) {
        const auto pair = number_list<std::size_t>(e[i], g->sub("edges") + "[" + std::to_string(i) + "]");
        require(pair.size() == 2, ErrorKind::ConfigError, g->sub("edges") + ": each edge is a pair");
        edges.push_back({pair[0], pair[1]});
      }
      s.seed_graph = SeedGraph::from_edges(n0, std::move(edges));
    } else {
      s.seed_graph = SeedGraph::complete(n0);
    }
    g->finish();
  }
  if (n.has("seed_locations")) s.seed_locations = number_list<std::size_t>(n.raw("seed_locations"), n.sub("seed_locations"));
  n.finish();
  return s;
}

inline AnalysisSection parse_analysis(Node n) {
  AnalysisSection a;
  a.d_max = n.get<std::int64_t>("d_max", 50);
  a.slope_min_degree = n.get<std::int64_t>("slope_min_degree", 0);
  if (n.has("cell_subsets")) {
    const json& subsets = n.raw("cell_subsets");
    require(subsets.is_array(), ErrorKind::ConfigError, n.sub("cell_subsets") + ": expected an array of arrays");
    for (std::size_t i = 0; i < subsets.size(); ++i)
      a.cell_subsets.push_back(number_list<std::size_t>(subsets[i], n.sub("cell_subsets") + "[" + std::to_string(i) + "]"));
  }
  a.tv_tolerance = n.maybe<double>("tv_tolerance");
  a.y_tolerance = n.maybe<double>("y_tolerance");
  a.bracket_tolerance = n.get<double>("bracket_tolerance", 0.0);
  n.finish();
  return a;
}

inline FitnessSection parse_fitness(Node n) {
  FitnessSection f;
  const double h = n.get<double>("h", 1.0);
  Node d = n.child("density");
  const auto name = d.get<std::string>("name");
  if (name == "uniform") {
    f.dist = FitnessDistribution::uniform(h);
  } else if (name == "linear") {
    f.dist = FitnessDistribution::linear(h);
  } else if (name == "power") {
    f.dist = FitnessDistribution::power(d.get<double>("beta"), h);
  } else if (name == "bump") {
    f.dist = FitnessDistribution::bump(d.get<double>("a"), d.get<double>("b"), h);
  } else {
    fail(ErrorKind::ConfigError, d.sub("name") + ": unknown fitness density '" + name + "' (uniform, linear, power, bump)");
  }
  d.finish();
  if (auto c = n.optional_child("cross_check")) {
    CrossCheckSection cc;
    cc.n_cells = c->get<int>("n_cells", cc.n_cells);
    cc.truncation = c->get<double>("truncation", cc.truncation);
    cc.tolerance = c->get<double>("tolerance", cc.tolerance);
    c->finish();
    f.cross_check = cc;
  }
  n.finish();
  return f;
}

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  cfg.raw = j;
  Node root(j, "");
  root.has("description");
  if (auto s = root.optional_child("space")) cfg.space = parse_space(*s);
  if (auto s = root.optional_child("sim")) cfg.sim = parse_sim(*s);
  if (auto s = root.optional_child("analysis")) cfg.analysis = parse_analysis(*s);
  if (auto s = root.optional_child("fitness")) cfg.fitness = parse_fitness(*s);
  if (auto s = root.optional_child("solver")) {
    cfg.solver.tol = s->get<double>("tol", cfg.solver.tol);
    cfg.solver.max_iterations = s->get<long>("max_iterations", cfg.solver.max_iterations);
    require(cfg.solver.tol > 0.0, ErrorKind::ConfigError, "solver.tol: must be positive");
    s->finish();
  }
  if (auto s = root.optional_child("output")) {
    cfg.out_dir = s->get<std::string>("directory", cfg.out_dir);
    if (s->has("formats")) {
      const json& f = s->raw("formats");
      require(f.is_array(), ErrorKind::ConfigError, "output.formats: expected an array");
      cfg.write_csv = false;
      for (const auto& v : f) {
        const auto name = Node::convert<std::string>(v, "output.formats[]");
        require(name == "csv" || name == "json", ErrorKind::ConfigError,
                "output.formats: unknown format '" + name + "' (csv, json)");
        cfg.write_csv = cfg.write_csv || name == "csv";
      }
    }
    s->finish();
  }
  root.finish();
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into a line number for the diagnostic.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    fail(ErrorKind::ConfigError, "config: JSON syntax error at line " + std::to_string(line) + ": " + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::ConfigError, "cannot read config file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  int jobs = 1;
  bool fault_inject = false;
};

struct RunResult {
  json report;
  int exit_code = kOk;
};

namespace detail {

inline std::filesystem::path prepare_out_dir(const ExperimentConfig& cfg, const RunOptions& opt) {
  const std::filesystem::path dir = opt.out_dir ? *opt.out_dir : cfg.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::ConfigError, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

inline json report_header(const std::string& command, const ExperimentConfig& cfg) {
  return {{"tool", "gpa"}, {"version", version()}, {"command", command}, {"config", cfg.raw}};
}

inline RunResult finish(json report, std::vector<Check> checks, const std::filesystem::path& dir, int failure_code = kOk) {
  report["checks"] = to_json(checks);
  const bool passed = all_passed(checks);
  report["passed"] = passed && failure_code == kOk;
  write_text_file((dir / "report.json").string(), report.dump(2) + "\n");
  return {std::move(report), failure_code != kOk ? failure_code : (passed ? kOk : kCheckFailed)};
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results are stored by
/// index, so the merged output does not depend on scheduling; the first
/// exception in index order is rethrown.
inline void fan_out(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<std::uint64_t> seeds_of(const SimSection& sim, const RunOptions& opt) {
  return opt.seeds ? *opt.seeds : sim.seeds;
}

inline void write_csv_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
  std::ostringstream os;
  fn(os);
  write_text_file(path.string(), os.str());
}

inline json seed_graph_json(const SeedGraph& g) {
  json edges = json::array();
  for (const Edge& e : g.edges) edges.push_back({e.u, e.v});
  return {{"n0", g.n0}, {"e0", g.e0()}, {"edges", edges}};
}

inline DiscretizedSpace discretize_config(const SpaceConfig& s) {
  return discretize(*s.continuous, s.n_cells, s.kernel_grid);
}

inline json discretization_json(const DiscretizedSpace& ds) {
  json cells = json::array();
  for (const Cell& c : ds.cells) cells.push_back({c.lo, c.hi});
  return {{"n_cells", ds.size()}, {"epsilon", ds.epsilon}, {"gamma", ds.gamma}, {"h", ds.h},
          {"t", ds.t},           {"log_lipschitz", ds.log_lipschitz}, {"grid", ds.grid},
          {"mu", ds.mu},         {"cells", cells}};
}

inline void check_subsets(const AnalysisSection& a, std::size_t n_cells) {
  for (const auto& subset : a.cell_subsets)
    for (std::size_t c : subset)
      require(c < n_cells, ErrorKind::ConfigError, "analysis.cell_subsets: cell " + std::to_string(c) + " out of range");
}

inline std::string subset_label(const std::vector<std::size_t>& subset) {
  std::string out;
  for (std::size_t c : subset) out += (out.empty() ? "" : "+") + std::to_string(c);
  return out.empty() ? "empty" : out;
}

}  // namespace detail

/// Limit measure and identity/bound checks for the configured space.
inline RunResult cmd_equilibrium(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  require(cfg.space.has_value(), ErrorKind::ConfigError, "space: missing required section");
  const auto dir = detail::prepare_out_dir(cfg, opt);
  json report = detail::report_header("equilibrium", cfg);
  std::vector<Check> checks;
  const SpaceConfig& s = *cfg.space;
  if (s.kind != SpaceConfig::Kind::Continuous) {
    const EquilibriumResult r = solve_nu(*s.finite, cfg.solver);
    report["equilibrium"] = to_json(*s.finite, r, cfg.solver.tol);
    checks = check_identities(*s.finite, r, cfg.solver.tol);
    if (s.kind == SpaceConfig::Kind::TwoPoint) {
      const double y0 = solve_two_point(s.p, s.a);
      const auto [phi0, phi1] = two_point_phi(s.p, s.a, y0);
      report["two_point"] = {{"y0", y0}, {"phi0", phi0}, {"phi1", phi1}};
      checks.push_back(make_check("two_point_y0_gap", std::abs(y0 - r.nu[0]), 1e-9));
      checks.push_back(make_check("two_point_phi_gap", std::max(std::abs(phi0 - r.phi[0]), std::abs(phi1 - r.phi[1])), 1e-9));
    }
  } else {
    const DiscretizedSpace ds = detail::discretize_config(s);
    detail::check_subsets(cfg.analysis, ds.size());
    report["discretization"] = detail::discretization_json(ds);
    checks.push_back(make_check("gamma_floor", std::exp(-2.0 * ds.log_lipschitz * ds.epsilon) - ds.gamma, 1e-12));
    const DustbinEquilibrium e = solve_dustbin(ds, cfg.solver);
    report["dustbin"] = to_json(e);
    for (const Check& c : check_dustbin_bounds(e)) checks.push_back(c);
    checks.push_back(make_check("dustbin_residual", e.residual, cfg.solver.tol));
    json brackets = json::array();
    for (const auto& subset : cfg.analysis.cell_subsets) {
      const Bracket b = borel_bracket(e, subset);
      brackets.push_back({{"cells", subset}, {"lower", b.lower}, {"upper", b.upper}});
    }
    report["brackets"] = brackets;
  }
  return detail::finish(std::move(report), std::move(checks), dir);
}

/// Grows one graph per seed; writes trajectories and degree tables and compares
/// them against the equilibrium of the space (the midpoint discretization for
/// continuous specs).
inline RunResult cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  require(cfg.space.has_value(), ErrorKind::ConfigError, "space: missing required section");
  require(cfg.sim.has_value(), ErrorKind::ConfigError, "sim: missing required section");
  const SpaceConfig& s = *cfg.space;
  const SimSection& sim = *cfg.sim;
  const AnalysisSection& an = cfg.analysis;
  const bool continuous = s.kind == SpaceConfig::Kind::Continuous;
  if (continuous) {
    require(sim.steps <= kContinuousStepCap, ErrorKind::ConfigError,
            "sim.steps: continuous simulation is capped at " + std::to_string(kContinuousStepCap) + " steps");
    require(!sim.seed_locations, ErrorKind::ConfigError, "sim.seed_locations: only valid for finite spaces");
  }
  require(an.d_max >= sim.m, ErrorKind::ConfigError, "analysis.d_max: must be >= sim.m");
  const auto dir = detail::prepare_out_dir(cfg, opt);
  const auto seeds = detail::seeds_of(sim, opt);

  std::optional<DiscretizedSpace> ds;
  FiniteLocationSpace reference = continuous ? FiniteLocationSpace({1.0}, Matrix{{1.0}}) : *s.finite;
  if (continuous) {
    ds = detail::discretize_config(s);
    reference = midpoint_space(*s.continuous, *ds);
  }
  const EquilibriumResult eq = solve_nu(reference, cfg.solver);
  const std::size_t n_loc = reference.size();
  std::optional<LocationSampler> sampler;
  if (continuous) sampler.emplace(s.continuous->domain, s.continuous->density);

  struct SeedOutcome {
    json summary;
    std::vector<Check> checks;
  };
  std::vector<SeedOutcome> outcomes(seeds.size());

  detail::fan_out(seeds.size(), opt.jobs, [&](std::size_t idx) {
    const std::uint64_t seed = seeds[idx];
    const std::string tag = std::to_string(seed);
    SimConfig sc;
    sc.m = sim.m;
    sc.steps = sim.steps;
    sc.seed = seed;
    sc.seed_graph = sim.seed_graph;
    sc.seed_locations = sim.seed_locations;
    sc.record_every = sim.trajectory_stride;
    sc.keep_edges = sim.edges;
    const SeedGraph seed_graph = sc.resolved_seed_graph();
    CounterRng rng(seed);

    std::vector<double> y;
    std::vector<std::pair<long long, std::vector<double>>> traj;
    std::vector<DegreeHistogram> hists(n_loc);
    std::int64_t total_ends = 0, vertex_count = 0;
    long long steps_done = 0, multi = 0;
    std::function<void(std::ostream&)> edge_writer, vertex_writer;
    std::optional<GraphState> fs;
    std::optional<ContinuousGraphState> cs;
    if (!continuous) {
      fs = make_graph_state(reference, sc, rng);
      TrajectoryRecorder rec{sim.trajectory_stride, {}};
      if (sim.trajectory_stride > 0) rec(*fs);
      grow(*fs, reference, sim.steps, rng, rec);
      traj = std::move(rec.rows);
      y = empirical_measure(*fs);
      for (std::size_t l = 0; l < n_loc; ++l) hists[l] = degree_histogram(*fs, l);
      total_ends = fs->total_edge_ends();
      vertex_count = static_cast<std::int64_t>(fs->num_vertices());
      steps_done = fs->step();
      multi = fs->multi_edge_steps();
      edge_writer = [&](std::ostream& os) { write_edge_list_csv(os, fs->edges()); };
      vertex_writer = [&](std::ostream& os) { write_vertex_table_csv(os, *fs); };
    } else {
      cs = make_continuous_state(*s.continuous, *sampler, sc, rng);
      CellTrajectoryRecorder rec{&*ds, sim.trajectory_stride, {}};
      if (sim.trajectory_stride > 0) rec(*cs);
      grow_continuous(*cs, *s.continuous, *sampler, sim.steps, rng, rec);
      traj = std::move(rec.rows);
      y = empirical_measure(*cs, *ds);
      for (std::size_t l = 0; l < n_loc; ++l) hists[l] = degree_histogram(*cs, *ds, l);
      total_ends = cs->total_edge_ends();
      vertex_count = static_cast<std::int64_t>(cs->num_vertices());
      steps_done = cs->step();
      multi = cs->multi_edge_steps();
      edge_writer = [&](std::ostream& os) { write_edge_list_csv(os, cs->edges()); };
      vertex_writer = [&](std::ostream& os) { write_vertex_table_csv(os, *cs); };
    }

    SeedOutcome& out = outcomes[idx];
    const std::int64_t expected_ends = 2 * (static_cast<std::int64_t>(sim.m) * steps_done + seed_graph.e0());
    out.checks.push_back(make_check("seed" + tag + "_edge_end_total",
                                    static_cast<double>(std::abs(total_ends - expected_ends)), 0.0));
    out.checks.push_back(make_check(
        "seed" + tag + "_vertex_count",
        static_cast<double>(std::abs(vertex_count - static_cast<std::int64_t>(steps_done + static_cast<long long>(seed_graph.n0)))),
        0.0));
    double y_gap = 0.0;
    for (std::size_t l = 0; l < n_loc; ++l) y_gap = std::max(y_gap, std::abs(y[l] - eq.nu[l]));
    if (an.y_tolerance) out.checks.push_back(make_check("seed" + tag + "_y_gap", y_gap, *an.y_tolerance));

    json locations = json::array();
    for (std::size_t l = 0; l < n_loc; ++l) {
      json loc{{"location", l}, {"vertices", hists[l].vertices}, {"phi", eq.phi[l]}};
      std::int64_t eligible = 0;
      for (const auto& [d, n] : hists[l].counts)
        if (d >= sim.m && d <= an.d_max) eligible += n;
      if (eligible > 0 && eq.phi[l] > 0.0 && eq.phi[l] < 2.0) {
        const DegreeLawParams params{sim.m, eq.phi[l], 1.0};
        const DegreeComparison cmp = compare(hists[l], params, an.d_max, an.slope_min_degree);
        loc["comparison"] = to_json(cmp);
        loc["expected_slope"] = -(1.0 + tail_index(eq.phi[l]));
        if (an.tv_tolerance)
          out.checks.push_back(make_check("seed" + tag + "_loc" + std::to_string(l) + "_tv", cmp.total_variation,
                                          *an.tv_tolerance));
        if (cfg.write_csv) {
          const DegreeTable table = make_degree_table(std::to_string(l), hists[l], params);
          detail::write_csv_file(dir / ("degrees_" + tag + "_" + std::to_string(l) + ".csv"),
                                 [&](std::ostream& os) { write_degree_table_csv(os, table); });
        }
      }
      locations.push_back(loc);
    }
    if (cfg.write_csv) {
      detail::write_csv_file(dir / ("trajectory_" + tag + ".csv"),
                             [&](std::ostream& os) { write_trajectory_csv(os, traj, n_loc); });
      if (sim.edges) {
        detail::write_csv_file(dir / ("edges_" + tag + ".csv"), edge_writer);
        detail::write_csv_file(dir / ("vertices_" + tag + ".csv"), vertex_writer);
      }
    }
    out.summary = {{"seed", seed},
                   {"steps", steps_done},
                   {"vertices", vertex_count},
                   {"total_edge_ends", total_ends},
                   {"multi_edge_steps", multi},
                   {"y", y},
                   {"max_abs_y_minus_nu", y_gap},
                   {"locations", locations}};
  });

  json report = detail::report_header("simulate", cfg);
  SimConfig echo;
  echo.m = sim.m;
  echo.seed_graph = sim.seed_graph;
  report["seed_graph"] = detail::seed_graph_json(echo.resolved_seed_graph());
  report["equilibrium"] = to_json(reference, eq, cfg.solver.tol);
  if (ds) report["discretization"] = detail::discretization_json(*ds);
  std::vector<Check> checks = check_identities(reference, eq, cfg.solver.tol);
  json runs = json::array();
  double worst_gap = 0.0, worst_tv = 0.0;
  for (auto& o : outcomes) {
    worst_gap = std::max(worst_gap, o.summary["max_abs_y_minus_nu"].get<double>());
    for (const auto& loc : o.summary["locations"])
      if (loc.contains("comparison")) worst_tv = std::max(worst_tv, loc["comparison"]["total_variation"].get<double>());
    runs.push_back(o.summary);
    for (Check& c : o.checks) checks.push_back(std::move(c));
  }
  report["runs"] = runs;
  report["aggregate"] = {{"seeds", seeds.size()}, {"max_abs_y_minus_nu", worst_gap}, {"max_total_variation", worst_tv}};
  return detail::finish(std::move(report), std::move(checks), dir);
}

/// Coupled continuous/dustbin runs: per-step domination and Borel bracket
/// containment for the configured cell subsets. With fault injection the
/// dustbin uses a_sup halved, which breaks the domination guarantee.
inline RunResult cmd_coupled_check(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  require(cfg.space && cfg.space->kind == SpaceConfig::Kind::Continuous, ErrorKind::ConfigError,
          "space: coupled-check needs a continuous space");
  require(cfg.sim.has_value(), ErrorKind::ConfigError, "sim: missing required section");
  const SpaceConfig& s = *cfg.space;
  const SimSection& sim = *cfg.sim;
  require(sim.steps <= kContinuousStepCap, ErrorKind::ConfigError,
          "sim.steps: continuous simulation is capped at " + std::to_string(kContinuousStepCap) + " steps");
  const auto dir = detail::prepare_out_dir(cfg, opt);
  const auto seeds = detail::seeds_of(sim, opt);
  const DiscretizedSpace ds = detail::discretize_config(s);
  detail::check_subsets(cfg.analysis, ds.size());
  DiscretizedSpace used = ds;
  if (opt.fault_inject) {
    for (std::size_t i = 0; i < used.size(); ++i)
      for (std::size_t j = 0; j < used.size(); ++j) used.a_sup(i, j) *= 0.5;
    refresh_coupling_constants(used);
  }
  const DustbinEquilibrium eq = solve_dustbin(ds, cfg.solver);
  const LocationSampler sampler(s.continuous->domain, s.continuous->density);

  struct SeedOutcome {
    json summary;
    std::vector<Check> checks;
    bool violated = false;
  };
  std::vector<SeedOutcome> outcomes(seeds.size());
  detail::fan_out(seeds.size(), opt.jobs, [&](std::size_t idx) {
    const std::uint64_t seed = seeds[idx];
    const std::string tag = std::to_string(seed);
    SimConfig sc;
    sc.m = sim.m;
    sc.seed = seed;
    sc.seed_graph = sim.seed_graph;
    CounterRng rng(seed);
    ContinuousGraphState g = make_continuous_state(*s.continuous, sampler, sc, rng);
    DustbinState d = make_dustbin_state(g, used);
    const CouplingReport rep = grow_coupled(g, d, used, *s.continuous, sampler, sim.steps, rng);
    SeedOutcome& out = outcomes[idx];
    out.violated = !rep.domination_ok;
    out.checks.push_back(make_check("seed" + tag + "_domination", rep.domination_ok ? 0.0 : 1.0, 0.0));
    const std::vector<double> y = empirical_measure(g, ds);
    const std::vector<std::int64_t> totals = g.cell_totals(ds);
    json brackets = json::array();
    if (rep.domination_ok) {
      for (const auto& subset : cfg.analysis.cell_subsets) {
        const Bracket b = borel_bracket(eq, subset);
        double emp = 0.0;
        for (std::size_t c : subset) emp += y[c];
        const double excess = std::max(b.lower - emp, emp - b.upper);
        out.checks.push_back(make_check("seed" + tag + "_bracket_" + detail::subset_label(subset), excess,
                                        cfg.analysis.bracket_tolerance));
        brackets.push_back({{"cells", subset}, {"empirical", emp}, {"lower", b.lower}, {"upper", b.upper}});
      }
    }
    std::vector<std::int64_t> dust_totals;
    for (std::size_t c = 0; c <= ds.size(); ++c) dust_totals.push_back(d.graph.total(c));
    out.summary = {{"seed", seed},
                   {"steps", rep.steps_run},
                   {"domination_ok", rep.domination_ok},
                   {"diagnostic", rep.domination_ok ? json(nullptr) : json(rep.diagnostic())},
                   {"rejections", d.rejections},
                   {"cell_totals", totals},
                   {"dustbin_totals", dust_totals},
                   {"brackets", brackets}};
  });

  json report = detail::report_header("coupled-check", cfg);
  report["fault_inject"] = opt.fault_inject;
  report["discretization"] = detail::discretization_json(ds);
  if (opt.fault_inject) report["corrupted"] = {{"gamma", used.gamma}, {"h", used.h}, {"t", used.t}};
  report["dustbin"] = to_json(eq);
  std::vector<Check> checks = check_dustbin_bounds(eq);
  json runs = json::array();
  bool violated = false;
  for (auto& o : outcomes) {
    runs.push_back(o.summary);
    violated = violated || o.violated;
    for (Check& c : o.checks) checks.push_back(std::move(c));
  }
  report["runs"] = runs;
  return detail::finish(std::move(report), std::move(checks), dir, violated ? kCouplingViolation : kOk);
}

/// Phase of the fitness distribution, lambda0 and the optional discretized
/// cross-check.
inline RunResult cmd_fitness(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  require(cfg.fitness.has_value(), ErrorKind::ConfigError, "fitness: missing required section");
  const auto dir = detail::prepare_out_dir(cfg, opt);
  const FitnessSection& f = *cfg.fitness;
  json report = detail::report_header("fitness", cfg);
  std::vector<Check> checks;
  const PhaseResult phase = detect_phase(f.dist);
  json fit{{"density", f.dist.density.name}, {"h", f.dist.h}, {"phase", to_json(phase)}};
  if (phase.lambda0 && *phase.lambda0 > f.dist.h) {
    const double gap = std::abs(fitness_F(f.dist, *phase.lambda0) - 1.0);
    fit["F_lambda0_gap"] = gap;
    checks.push_back(make_check("F_lambda0", gap, 1e-8));
  }
  if (f.cross_check) {
    const CrossCheckReport cc = cross_check(f.dist, f.cross_check->n_cells, f.cross_check->truncation);
    fit["cross_check"] = to_json(cc);
    checks.push_back(make_check("cross_check_discrepancy", cc.max_discrepancy, f.cross_check->tolerance));
  }
  report["fitness"] = fit;
  return detail::finish(std::move(report), std::move(checks), dir);
}

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::NonConvergence:
      return kNonConvergence;
    case ErrorKind::CouplingViolation:
      return kCouplingViolation;
    default:
      return kConfigError;
  }
}

/// Runs a command with error-to-exit-code translation; diagnostics go to `err`.
inline int run_command(const std::string& command, const std::string& config_path, const RunOptions& opt,
                       std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = load_config(config_path);
    RunResult r;
    if (command == "equilibrium") {
      r = cmd_equilibrium(cfg, opt);
    } else if (command == "simulate") {
      r = cmd_simulate(cfg, opt);
    } else if (command == "coupled-check") {
      r = cmd_coupled_check(cfg, opt);
    } else if (command == "fitness") {
      r = cmd_fitness(cfg, opt);
    } else {
      fail(ErrorKind::ConfigError, "unknown command " + command);
    }
    for (const auto& c : r.report["checks"])
      if (!c["passed"].get<bool>())
        err << "check failed: " << c["name"].get<std::string>() << " value " << format_double(c["value"].get<double>())
            << " > tolerance " << format_double(c["tolerance"].get<double>()) << '\n';
    out << command << ": " << (r.exit_code == kOk ? "ok" : "FAILED") << " (exit " << r.exit_code << ")\n";
    return r.exit_code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
}

}  // namespace gpa::cli
