#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpa/error.hpp"
#include "gpa/fenwick.hpp"
#include "gpa/numeric.hpp"
#include "gpa/rng.hpp"
#include "gpa/space.hpp"

namespace gpa {

/// Upper bound on steps for the exact continuous simulator (linear cost per step).
inline constexpr long long kContinuousStepCap = 50'000;

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Connected simple graph G_0 on n0 vertices.
struct SeedGraph {
  std::size_t n0 = 0;
  std::vector<Edge> edges;

  static SeedGraph complete(std::size_t n0) {
    SeedGraph g;
    g.n0 = n0;
    for (std::size_t u = 0; u < n0; ++u)
      for (std::size_t v = u + 1; v < n0; ++v) g.edges.push_back({u, v});
    g.validate();
    return g;
  }

  static SeedGraph from_edges(std::size_t n0, std::vector<Edge> edges) {
    SeedGraph g{n0, std::move(edges)};
    g.validate();
    return g;
  }

  std::size_t e0() const { return edges.size(); }

  void validate() const {
    require(n0 >= 2, ErrorKind::InvalidSeedGraph, "seed graph needs n0 >= 2");
    std::vector<std::vector<std::size_t>> adj(n0);
    std::vector<std::pair<std::size_t, std::size_t>> seen;
    for (const Edge& e : edges) {
      require(e.u < n0 && e.v < n0, ErrorKind::InvalidSeedGraph, "seed edge endpoint out of range");
      require(e.u != e.v, ErrorKind::InvalidSeedGraph, "seed graph has a self-loop");
      seen.emplace_back(std::min(e.u, e.v), std::max(e.u, e.v));
      adj[e.u].push_back(e.v);
      adj[e.v].push_back(e.u);
    }
    std::sort(seen.begin(), seen.end());
    require(std::adjacent_find(seen.begin(), seen.end()) == seen.end(), ErrorKind::InvalidSeedGraph,
            "seed graph has a multi-edge");
    std::vector<bool> reached(n0, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    reached[0] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t v : adj[u]) {
        if (!reached[v]) {
          reached[v] = true;
          ++count;
          frontier.push(v);
        }
      }
    }
    require(count == n0, ErrorKind::InvalidSeedGraph, "seed graph is not connected");
  }
};

struct SimConfig {
  int m = 1;
  long long steps = 0;
  std::uint64_t seed = 0;
  std::optional<SeedGraph> seed_graph;             ///< default: complete graph on m + 1 vertices
  std::optional<std::vector<std::size_t>> seed_locations;  ///< finite spaces; default i.i.d. from mu
  std::optional<std::vector<double>> seed_points;          ///< continuous spaces; default i.i.d. from the density
  long long record_every = 0;                      ///< trajectory stride, 0 disables
  bool keep_edges = false;

  SeedGraph resolved_seed_graph() const {
    require(m >= 1, ErrorKind::ParameterOutOfRange, "m must be >= 1");
    return seed_graph ? *seed_graph : SeedGraph::complete(static_cast<std::size_t>(m) + 1);
  }
};

namespace detail {

/// Index of the first cumulative weight exceeding u * total; zero-weight
/// entries are never returned.
inline std::size_t pick_weighted(std::span<const double> weights, double total, double u) {
  const double target = u * total;
  double acc = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;  // rounding at the top end
}

}  // namespace detail

struct Vertex {
  std::size_t location = 0;
  std::int64_t degree = 0;
  long long birth_step = 0;  ///< 0 for seed vertices, n for the vertex added at step n
};

/// Growing multigraph over a finite set of locations. Per location it keeps
/// the edge-end total Y_i and a Fenwick tree over member degrees, so a target
/// vertex is drawn by first choosing a location and then a member.
class GraphState {
 public:
  GraphState(std::size_t n_locations, int m, bool keep_edges)
      : m_(m), keep_edges_(keep_edges), totals_(n_locations, 0), members_(n_locations), trees_(n_locations) {
    require(m >= 1, ErrorKind::ParameterOutOfRange, "m must be >= 1");
  }

  /// Lays the seed graph down at the given locations.
  static GraphState seeded(std::size_t n_locations, int m, const SeedGraph& seed,
                           std::span<const std::size_t> locations, bool keep_edges) {
    require(locations.size() == seed.n0, ErrorKind::DimensionMismatch, "seed location count differs from n0");
    GraphState s(n_locations, m, keep_edges);
    for (std::size_t loc : locations) {
      require(loc < n_locations, ErrorKind::DimensionMismatch, "seed location index out of range");
      s.add_vertex(loc, 0);
    }
    for (const Edge& e : seed.edges) s.connect(e.u, e.v);
    s.e0_ = static_cast<std::int64_t>(seed.e0());
    s.n0_ = seed.n0;
    s.seed_edges_ = seed.edges;
    return s;
  }

  int m() const { return m_; }
  long long step() const { return step_; }
  std::int64_t e0() const { return e0_; }
  std::size_t n0() const { return n0_; }
  const std::vector<Edge>& seed_edges() const { return seed_edges_; }
  std::size_t num_locations() const { return totals_.size(); }
  std::size_t num_vertices() const { return vertices_.size(); }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const Vertex& vertex(std::size_t v) const { return vertices_[v]; }
  const std::vector<std::int64_t>& totals() const { return totals_; }
  std::int64_t total(std::size_t loc) const { return totals_[loc]; }
  std::int64_t total_edge_ends() const { return total_ends_; }
  const std::vector<std::size_t>& members(std::size_t loc) const { return members_[loc]; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool keeps_edges() const { return keep_edges_; }
  long long multi_edge_steps() const { return multi_edge_steps_; }

  std::size_t add_vertex(std::size_t loc, long long birth) {
    const std::size_t id = vertices_.size();
    vertices_.push_back({loc, 0, birth});
    slot_.push_back(members_[loc].size());
    members_[loc].push_back(id);
    trees_[loc].push_back(0);
    return id;
  }

  void connect(std::size_t u, std::size_t v) {
    bump(u);
    bump(v);
    if (keep_edges_) edges_.push_back({u, v});
  }

  /// Vertex at `loc` drawn proportionally to degree; Y_loc must be positive.
  std::size_t sample_member(std::size_t loc, CounterRng& rng) const {
    return member_at(loc, static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(trees_[loc].total()))));
  }

  /// Member owning the k-th edge end at `loc`, 0 <= k < Y_loc.
  std::size_t member_at(std::size_t loc, std::int64_t k) const { return members_[loc][trees_[loc].find(k)]; }

  void finish_step(bool had_multi_edge) {
    ++step_;
    if (had_multi_edge) ++multi_edge_steps_;
  }

 private:
  void bump(std::size_t v) {
    Vertex& vx = vertices_[v];
    ++vx.degree;
    ++totals_[vx.location];
    ++total_ends_;
    trees_[vx.location].add(slot_[v], 1);
  }

  int m_;
  bool keep_edges_;
  long long step_ = 0;
  std::int64_t e0_ = 0;
  std::size_t n0_ = 0;
  std::int64_t total_ends_ = 0;
  long long multi_edge_steps_ = 0;
  std::vector<Vertex> vertices_;
  std::vector<std::size_t> slot_;  // position of each vertex inside its location's member list
  std::vector<std::int64_t> totals_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<FenwickTree> trees_;
  std::vector<Edge> edges_;
  std::vector<Edge> seed_edges_;
};

/// Seeds a finite-space state: explicit locations when configured, otherwise
/// one mu-draw per seed vertex.
inline GraphState make_graph_state(const FiniteLocationSpace& space, const SimConfig& cfg, CounterRng& rng) {
  const SeedGraph seed = cfg.resolved_seed_graph();
  std::vector<std::size_t> locs;
  if (cfg.seed_locations) {
    locs = *cfg.seed_locations;
  } else {
    for (std::size_t v = 0; v < seed.n0; ++v) locs.push_back(detail::pick_weighted(space.mu(), 1.0, rng.uniform()));
  }
  return GraphState::seeded(space.size(), cfg.m, seed, locs, cfg.keep_edges);
}

struct NoObserver {
  template <class State>
  void operator()(const State&) const {}
};

namespace detail {

/// One step of the finite (gamma = 1) or dustbin (gamma < 1) process.
/// Variates: newcomer location; per edge a location draw and a member draw;
/// when gamma < 1, one acceptance draw per edge after all targets.
inline void finite_step(GraphState& s, const FiniteLocationSpace& space, double gamma, CounterRng& rng,
                        std::vector<double>& weights, long long* rejections) {
  const std::size_t n = space.size();
  const int m = s.m();
  const std::size_t j = pick_weighted(space.mu(), 1.0, rng.uniform());

  weights.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    weights[k] = static_cast<double>(s.total(k)) * space.a(k, j);
    total += weights[k];
  }
  if (!(total > 0.0)) {
    fail(ErrorKind::ZeroAttractiveness, "sum_k Y_k a(k," + std::to_string(j) + ") = 0 at step " +
                                            std::to_string(s.step() + 1));
  }

  std::vector<std::size_t> targets(static_cast<std::size_t>(m));
  for (auto& t : targets) {
    const std::size_t loc = pick_weighted(weights, total, rng.uniform());
    t = s.sample_member(loc, rng);
  }
  std::vector<bool> accepted(targets.size(), true);
  if (gamma < 1.0) {
    for (std::size_t e = 0; e < targets.size(); ++e) accepted[e] = rng.uniform() < gamma;
  }

  const long long birth = s.step() + 1;
  const std::size_t newcomer = s.add_vertex(j, birth);
  bool multi = false;
  for (std::size_t e = 0; e < targets.size(); ++e) {
    if (accepted[e]) {
      for (std::size_t f = 0; f < e; ++f) multi = multi || (accepted[f] && targets[f] == targets[e]);
      s.connect(newcomer, targets[e]);
    } else {
      const std::size_t bin_vertex = s.add_vertex(0, birth);
      s.connect(newcomer, bin_vertex);
      if (rejections) ++*rejections;
    }
  }
  s.finish_step(multi);
}

}  // namespace detail

/// Runs `steps` iterations of the finite-location process. Each newcomer is
/// placed at j ~ mu and attaches m edges to vertices drawn independently with
/// probability deg(v) a(loc(v), j) / sum_k Y_k a(k, j), all against the
/// pre-step state. Multi-edges are allowed; self-loops cannot occur.
template <class Observer = NoObserver>
void grow(GraphState& s, const FiniteLocationSpace& space, long long steps, CounterRng& rng, Observer&& observe = {}) {
  require(s.num_locations() == space.size(), ErrorKind::DimensionMismatch, "state and space disagree on N");
  std::vector<double> weights;
  for (long long k = 0; k < steps; ++k) {
    detail::finite_step(s, space, 1.0, rng, weights, nullptr);
    observe(s);
  }
}

/// Finite process over {0, 1, ..., N} where location 0 is the dustbin.
struct DustbinState {
  GraphState graph;
  double gamma = 1.0;
  double h = 0.0;
  long long rejections = 0;
};

/// Dustbin state whose cells mirror a cell-indexed state (cell c -> location c + 1).
inline DustbinState make_dustbin_state(const GraphState& cells_state, const DiscretizedSpace& ds) {
  require(cells_state.num_locations() == ds.size(), ErrorKind::DimensionMismatch, "state and discretization differ");
  require(cells_state.step() == 0, ErrorKind::ParameterOutOfRange, "dustbin state must mirror a seed-only state");
  std::vector<std::size_t> locs;
  for (const Vertex& v : cells_state.vertices()) locs.push_back(v.location + 1);
  const SeedGraph seed{cells_state.num_vertices(), cells_state.seed_edges()};
  return {GraphState::seeded(ds.size() + 1, cells_state.m(), seed, locs, cells_state.keeps_edges()), ds.gamma, ds.h, 0};
}

/// Each of the m edges targets v at location i with probability
/// gamma deg(v) a(i, j) / sum_{k=0..N} Y_k a(k, j); otherwise a new vertex is
/// created at location 0 and receives the edge.
template <class Observer = NoObserver>
void grow_dustbin(DustbinState& s, const DiscretizedSpace& ds, long long steps, CounterRng& rng,
                  Observer&& observe = {}) {
  require(s.gamma > 0.0 && s.gamma <= 1.0, ErrorKind::ParameterOutOfRange, "gamma must lie in (0, 1]");
  require(s.graph.num_locations() == ds.size() + 1, ErrorKind::DimensionMismatch, "dustbin state needs N + 1 locations");
  const FiniteLocationSpace space = ds.dustbin_space();
  std::vector<double> weights;
  for (long long k = 0; k < steps; ++k) {
    detail::finite_step(s.graph, space, s.gamma, rng, weights, &s.rejections);
    observe(s);
  }
}

// ---------------------------------------------------------------------------
// Continuous process

/// Inverse-CDF sampler for a density: the CDF is tabulated at 2^14 + 1 knots
/// by quadrature and inverted by monotone piecewise-linear interpolation.
class LocationSampler {
 public:
  static constexpr std::size_t kKnots = std::size_t{1} << 14;

  LocationSampler(const Domain& domain, const Density& density) : lo_(domain.lo), width_(domain.length() / kKnots) {
    cdf_.assign(kKnots + 1, 0.0);
    for (std::size_t k = 0; k < kKnots; ++k) {
      const double a = lo_ + width_ * static_cast<double>(k);
      const double b = k + 1 == kKnots ? domain.hi : lo_ + width_ * static_cast<double>(k + 1);
      double piece = 0.0;
      try {
        piece = integrate(density.pdf, a, b, {.abs_tol = 1e-14, .initial_panels = 1}, density.breakpoints);
      } catch (const Error& e) {
        fail(ErrorKind::DensitySamplingFailure, e.what());
      }
      cdf_[k + 1] = cdf_[k] + std::max(piece, 0.0);
    }
    const double total = cdf_.back();
    require(std::isfinite(total) && total > 0.0, ErrorKind::DensitySamplingFailure,
            "density '" + density.name + "' has no sampleable mass");
    for (double& c : cdf_) c /= total;
  }

  double operator()(double u) const {
    // First knot interval with positive mass whose upper CDF exceeds u.
    const auto it = std::upper_bound(cdf_.begin() + 1, cdf_.end(), u);
    const std::size_t k = it == cdf_.end() ? kKnots - 1 : static_cast<std::size_t>(it - cdf_.begin()) - 1;
    const double span = cdf_[k + 1] - cdf_[k];
    const double frac = span > 0.0 ? std::clamp((u - cdf_[k]) / span, 0.0, 1.0) : 0.5;
    return lo_ + width_ * (static_cast<double>(k) + frac);
  }

 private:
  double lo_;
  double width_;
  std::vector<double> cdf_;
};

struct PointVertex {
  double x = 0.0;
  std::int64_t degree = 0;
  long long birth_step = 0;
};

/// Growing multigraph whose vertices carry real locations.
class ContinuousGraphState {
 public:
  ContinuousGraphState(int m, bool keep_edges) : m_(m), keep_edges_(keep_edges) {
    require(m >= 1, ErrorKind::ParameterOutOfRange, "m must be >= 1");
  }

  static ContinuousGraphState seeded(int m, const SeedGraph& seed, std::span<const double> points, bool keep_edges) {
    require(points.size() == seed.n0, ErrorKind::DimensionMismatch, "seed point count differs from n0");
    ContinuousGraphState s(m, keep_edges);
    for (double x : points) s.add_vertex(x, 0);
    for (const Edge& e : seed.edges) s.connect(e.u, e.v);
    s.e0_ = static_cast<std::int64_t>(seed.e0());
    s.n0_ = seed.n0;
    // Seed edges are always retained: the coupled dustbin state mirrors them.
    s.seed_edges_ = seed.edges;
    return s;
  }

  int m() const { return m_; }
  long long step() const { return step_; }
  std::int64_t e0() const { return e0_; }
  std::size_t n0() const { return n0_; }
  std::size_t num_vertices() const { return vertices_.size(); }
  const std::vector<PointVertex>& vertices() const { return vertices_; }
  std::int64_t total_edge_ends() const { return total_ends_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Edge>& seed_edges() const { return seed_edges_; }
  bool keeps_edges() const { return keep_edges_; }
  long long multi_edge_steps() const { return multi_edge_steps_; }

  std::size_t add_vertex(double x, long long birth) {
    vertices_.push_back({x, 0, birth});
    return vertices_.size() - 1;
  }
  void connect(std::size_t u, std::size_t v) {
    ++vertices_[u].degree;
    ++vertices_[v].degree;
    total_ends_ += 2;
    if (keep_edges_) edges_.push_back({u, v});
  }
  void finish_step(bool had_multi_edge) {
    ++step_;
    if (had_multi_edge) ++multi_edge_steps_;
  }

  /// Edge-end totals aggregated over the cells of a discretization.
  std::vector<std::int64_t> cell_totals(const DiscretizedSpace& ds) const {
    std::vector<std::int64_t> out(ds.size(), 0);
    for (const PointVertex& v : vertices_) out[ds.cell_of(v.x)] += v.degree;
    return out;
  }

 private:
  int m_;
  bool keep_edges_;
  long long step_ = 0;
  std::int64_t e0_ = 0;
  std::size_t n0_ = 0;
  std::int64_t total_ends_ = 0;
  long long multi_edge_steps_ = 0;
  std::vector<PointVertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<Edge> seed_edges_;
};

inline ContinuousGraphState make_continuous_state(const ContinuousSpaceSpec& spec, const LocationSampler& sampler,
                                                  const SimConfig& cfg, CounterRng& rng) {
  const SeedGraph seed = cfg.resolved_seed_graph();
  std::vector<double> points;
  if (cfg.seed_points) {
    points = *cfg.seed_points;
    for (double x : points)
      require(x >= spec.domain.lo && x <= spec.domain.hi, ErrorKind::ParameterOutOfRange, "seed point outside domain");
  } else {
    for (std::size_t v = 0; v < seed.n0; ++v) points.push_back(sampler(rng.uniform()));
  }
  return ContinuousGraphState::seeded(cfg.m, seed, points, cfg.keep_edges);
}

/// Exact continuous process: newcomer x ~ density, each edge picks u with
/// probability deg(u) alpha(X_u, x) / D_n(x) using a full pass over vertices.
/// Variates: newcomer location, then one per edge.
template <class Observer = NoObserver>
void grow_continuous(ContinuousGraphState& s, const ContinuousSpaceSpec& spec, const LocationSampler& sampler,
                     long long steps, CounterRng& rng, Observer&& observe = {}) {
  require(spec.kernel_floor > 0.0, ErrorKind::ParameterOutOfRange, "continuous process needs a positive kernel floor");
  std::vector<double> cumulative;
  std::vector<std::size_t> targets(static_cast<std::size_t>(s.m()));
  for (long long k = 0; k < steps; ++k) {
    const double x = sampler(rng.uniform());
    const auto& verts = s.vertices();
    cumulative.resize(verts.size());
    double acc = 0.0;
    for (std::size_t v = 0; v < verts.size(); ++v) {
      acc += static_cast<double>(verts[v].degree) * spec.alpha(verts[v].x, x);
      cumulative[v] = acc;
    }
    require(acc > 0.0, ErrorKind::ZeroAttractiveness, "D_n(x) = 0");
    for (auto& t : targets) {
      const double target = rng.uniform() * acc;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
      if (it == cumulative.end()) --it;
      t = static_cast<std::size_t>(it - cumulative.begin());
    }
    const std::size_t newcomer = s.add_vertex(x, s.step() + 1);
    bool multi = false;
    for (std::size_t e = 0; e < targets.size(); ++e) {
      for (std::size_t f = 0; f < e; ++f) multi = multi || targets[f] == targets[e];
      s.connect(newcomer, targets[e]);
    }
    s.finish_step(multi);
    observe(s);
  }
}

template <class Observer = NoObserver>
void grow_continuous(ContinuousGraphState& s, const ContinuousSpaceSpec& spec, long long steps, CounterRng& rng,
                     Observer&& observe = {}) {
  const LocationSampler sampler(spec.domain, spec.density);
  grow_continuous(s, spec, sampler, steps, rng, std::forward<Observer>(observe));
}

// ---------------------------------------------------------------------------
// Coupling

/// Dustbin state mirroring a seed-only continuous state: every vertex sits at
/// location cell_of(x) + 1 with the same edges.
inline DustbinState make_dustbin_state(const ContinuousGraphState& g, const DiscretizedSpace& ds) {
  require(g.step() == 0, ErrorKind::ParameterOutOfRange, "coupled runs start from the seed graph");
  std::vector<std::size_t> locs;
  for (const PointVertex& v : g.vertices()) locs.push_back(ds.cell_of(v.x) + 1);
  SeedGraph seed;
  seed.n0 = g.num_vertices();
  seed.edges = g.seed_edges();
  return {GraphState::seeded(ds.size() + 1, g.m(), seed, locs, g.keeps_edges()), ds.gamma, ds.h, 0};
}

struct CouplingReport {
  bool domination_ok = true;
  long long steps_run = 0;
  std::optional<long long> violation_step;
  std::optional<std::size_t> violation_cell;
  std::int64_t dustbin_total = 0;
  std::int64_t graph_total = 0;

  std::string diagnostic() const {
    if (domination_ok) return "domination held for " + std::to_string(steps_run) + " steps";
    return "violation at step " + std::to_string(*violation_step) + ", cell " + std::to_string(*violation_cell) +
           ": dustbin " + std::to_string(dustbin_total) + " > graph " + std::to_string(graph_total);
  }

  void throw_if_violated() const {
    if (!domination_ok) {
      throw CouplingViolation(*violation_step, static_cast<int>(*violation_cell), dustbin_total, graph_total);
    }
  }
};

/// Runs the continuous process and the dustbin process on shared randomness.
///
/// Per step: one variate places the continuous newcomer at x; the dustbin
/// newcomer goes to the cell of x. Per edge three variates are drawn:
///   1. a joint variate U. [0, 1) is split into the continuous cell
///      probabilities p_c; the first min(p_c, q_c) of cell c's slot maps to the
///      dustbin outcome "cell c" (q_c = dustbin probability of cell c). The
///      leftover pieces are concatenated and carry, in order, the excesses
///      max(0, q_c - p_c), the existing-dustbin-vertex mass, and rejection.
///   2. the continuous target inside its cell, proportional to deg * alpha.
///   3. the dustbin target inside its location, proportional to degree.
/// Both marginals are exact. When q_c <= p_c for every cell (which the sup/inf
/// construction guarantees) the dustbin can only hit cell c when the
/// continuous process does, so Y^dust_c <= Y_c is preserved. Domination is
/// checked after every step; the run stops at the first violation.
inline CouplingReport grow_coupled(ContinuousGraphState& g, DustbinState& d, const DiscretizedSpace& ds,
                                   const ContinuousSpaceSpec& spec, const LocationSampler& sampler, long long steps,
                                   CounterRng& rng) {
  const std::size_t n = ds.size();
  require(d.graph.num_locations() == n + 1, ErrorKind::DimensionMismatch, "dustbin state needs N + 1 locations");
  require(d.graph.total_edge_ends() == g.total_edge_ends(), ErrorKind::ParameterOutOfRange,
          "coupled states must start with equal total degree");
  const FiniteLocationSpace dspace = ds.dustbin_space();
  const double gamma = d.gamma;
  const int m = g.m();

  std::vector<std::size_t> cell(g.num_vertices());
  std::vector<std::vector<std::size_t>> cell_members(n);
  std::vector<std::int64_t> cell_totals(n, 0);
  for (std::size_t v = 0; v < g.num_vertices(); ++v) {
    cell[v] = ds.cell_of(g.vertices()[v].x);
    cell_members[cell[v]].push_back(v);
    cell_totals[cell[v]] += g.vertices()[v].degree;
  }

  CouplingReport report;
  auto check = [&](long long step) {
    for (std::size_t c = 0; c < n; ++c) {
      if (d.graph.total(c + 1) > cell_totals[c]) {
        report.domination_ok = false;
        report.violation_step = step;
        report.violation_cell = c;
        report.dustbin_total = d.graph.total(c + 1);
        report.graph_total = cell_totals[c];
        return false;
      }
    }
    return true;
  };
  if (!check(g.step())) return report;

  std::vector<double> w, p(n), q(n), matched(n), free_len(n), excess(n);
  for (long long k = 0; k < steps; ++k) {
    const double x = sampler(rng.uniform());
    const std::size_t j = ds.cell_of(x);

    const auto& verts = g.vertices();
    w.resize(verts.size());
    std::fill(p.begin(), p.end(), 0.0);
    double wsum = 0.0;
    for (std::size_t v = 0; v < verts.size(); ++v) {
      w[v] = static_cast<double>(verts[v].degree) * spec.alpha(verts[v].x, x);
      p[cell[v]] += w[v];
      wsum += w[v];
    }
    double dsum = 0.0;
    for (std::size_t loc = 0; loc <= n; ++loc) dsum += static_cast<double>(d.graph.total(loc)) * dspace.a(loc, j + 1);
    require(wsum > 0.0 && dsum > 0.0, ErrorKind::ZeroAttractiveness, "zero total attractiveness in coupled step");

    for (std::size_t c = 0; c < n; ++c) {
      p[c] /= wsum;
      q[c] = gamma * static_cast<double>(d.graph.total(c + 1)) * dspace.a(c + 1, j + 1) / dsum;
      matched[c] = std::min(p[c], q[c]);
      free_len[c] = p[c] - matched[c];
      excess[c] = q[c] - matched[c];
    }
    const double q_bin = gamma * static_cast<double>(d.graph.total(0)) * d.h / dsum;

    struct Draw {
      std::size_t cont = 0;
      std::size_t dust = 0;
      bool rejected = false;
    };
    std::vector<Draw> draws(static_cast<std::size_t>(m));
    for (auto& dr : draws) {
      const double u = rng.uniform();
      double start = 0.0, free_before = 0.0;
      std::size_t c = 0;
      for (; c + 1 < n; ++c) {
        if (p[c] > 0.0 && u < start + p[c]) break;
        start += p[c];
        free_before += free_len[c];
      }
      while (p[c] <= 0.0 && c > 0) --c;  // rounding at the top end
      const double offset = std::max(0.0, u - start);
      std::optional<std::size_t> dust_loc;
      if (offset < matched[c]) {
        dust_loc = c + 1;
      } else {
        double f = free_before + std::min(offset - matched[c], free_len[c]);
        for (std::size_t e = 0; e < n && !dust_loc; ++e) {
          if (excess[e] > 0.0 && f < excess[e]) dust_loc = e + 1;
          f -= excess[e];
        }
        if (!dust_loc && f < q_bin) dust_loc = 0;
      }

      const double u_cont = rng.uniform();
      const double u_dust = rng.uniform();
      {
        const auto& members = cell_members[c];
        const double target = u_cont * p[c] * wsum;
        double acc = 0.0;
        dr.cont = members.back();
        for (std::size_t v : members) {
          acc += w[v];
          if (target < acc) {
            dr.cont = v;
            break;
          }
        }
      }
      if (dust_loc) {
        const std::size_t loc = *dust_loc;
        const auto bucket = static_cast<std::uint64_t>(d.graph.total(loc));
        const auto idx = std::min<std::uint64_t>(static_cast<std::uint64_t>(u_dust * static_cast<double>(bucket)), bucket - 1);
        dr.dust = d.graph.member_at(loc, static_cast<std::int64_t>(idx));
      } else {
        dr.rejected = true;
      }
    }

    const long long birth = g.step() + 1;
    const std::size_t gnew = g.add_vertex(x, birth);
    cell.push_back(j);
    cell_members[j].push_back(gnew);
    const std::size_t dnew = d.graph.add_vertex(j + 1, birth);
    bool gmulti = false, dmulti = false;
    for (std::size_t e = 0; e < draws.size(); ++e) {
      for (std::size_t f = 0; f < e; ++f) {
        gmulti = gmulti || draws[f].cont == draws[e].cont;
        dmulti = dmulti || (!draws[f].rejected && !draws[e].rejected && draws[f].dust == draws[e].dust);
      }
      g.connect(gnew, draws[e].cont);
      cell_totals[j] += 1;
      cell_totals[cell[draws[e].cont]] += 1;
      if (draws[e].rejected) {
        d.graph.connect(dnew, d.graph.add_vertex(0, birth));
        ++d.rejections;
      } else {
        d.graph.connect(dnew, draws[e].dust);
      }
    }
    g.finish_step(gmulti);
    d.graph.finish_step(dmulti);
    ++report.steps_run;
    if (!check(g.step())) return report;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Measurements

/// y_i = Y_i / total edge ends.
inline std::vector<double> empirical_measure(const GraphState& s) {
  require(s.total_edge_ends() > 0, ErrorKind::EmptyGraph, "no edge ends");
  std::vector<double> y(s.num_locations());
  const auto total = static_cast<double>(s.total_edge_ends());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(s.total(i)) / total;
  return y;
}

inline std::vector<double> empirical_measure(const DustbinState& s) { return empirical_measure(s.graph); }

/// Cell-aggregated measure of a continuous state.
inline std::vector<double> empirical_measure(const ContinuousGraphState& s, const DiscretizedSpace& ds) {
  require(s.total_edge_ends() > 0, ErrorKind::EmptyGraph, "no edge ends");
  const auto totals = s.cell_totals(ds);
  std::vector<double> y(totals.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = static_cast<double>(totals[i]) / static_cast<double>(s.total_edge_ends());
  return y;
}

struct DegreeHistogram {
  std::map<std::int64_t, std::int64_t> counts;
  std::int64_t vertices = 0;
};

inline DegreeHistogram degree_histogram(const GraphState& s, std::size_t location) {
  require(location < s.num_locations(), ErrorKind::DimensionMismatch, "location out of range");
  DegreeHistogram h;
  for (std::size_t v : s.members(location)) {
    ++h.counts[s.vertex(v).degree];
    ++h.vertices;
  }
  return h;
}

template <class Pred>
DegreeHistogram degree_histogram_if(const ContinuousGraphState& s, Pred&& in_set) {
  DegreeHistogram h;
  for (const PointVertex& v : s.vertices()) {
    if (in_set(v.x)) {
      ++h.counts[v.degree];
      ++h.vertices;
    }
  }
  return h;
}

inline DegreeHistogram degree_histogram(const ContinuousGraphState& s, const DiscretizedSpace& ds, std::size_t cell) {
  require(cell < ds.size(), ErrorKind::DimensionMismatch, "cell out of range");
  return degree_histogram_if(s, [&](double x) { return ds.cell_of(x) == cell; });
}

/// Records (step, y_1..y_N) every `stride` steps.
struct TrajectoryRecorder {
  long long stride = 1;
  std::vector<std::pair<long long, std::vector<double>>> rows;

  void operator()(const GraphState& s) {
    if (stride > 0 && s.step() % stride == 0) rows.emplace_back(s.step(), empirical_measure(s));
  }
  void operator()(const DustbinState& s) { (*this)(s.graph); }
};

struct CellTrajectoryRecorder {
  const DiscretizedSpace* ds = nullptr;
  long long stride = 1;
  std::vector<std::pair<long long, std::vector<double>>> rows;

  void operator()(const ContinuousGraphState& s) {
    if (stride > 0 && s.step() % stride == 0) rows.emplace_back(s.step(), empirical_measure(s, *ds));
  }
};

}  // namespace gpa
