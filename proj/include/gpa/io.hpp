#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpa/checks.hpp"
#include "gpa/degree.hpp"
#include "gpa/equilibrium.hpp"
#include "gpa/error.hpp"
#include "gpa/fitness.hpp"
#include "gpa/simulate.hpp"

namespace gpa {

using json = nlohmann::ordered_json;

/// Shortest text of up to 17 significant digits, "." decimal, no locale.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Comma-separated rows with a header, LF line endings. Fields are numbers or
/// identifiers, so no quoting is needed.
class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os), width_(header.size()) {
    write(header);
  }

  template <class... Ts>
  void row(const Ts&... fields) {
    std::vector<std::string> cells{cell(fields)...};
    write(cells);
  }
  void row(const std::vector<std::string>& cells) { write(cells); }

  static std::string cell(double v) { return format_double(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class T>
    requires std::is_integral_v<T>
  static std::string cell(T v) {
    return std::to_string(v);
  }

 private:
  void write(const std::vector<std::string>& cells) {
    require(cells.size() == width_, ErrorKind::DimensionMismatch, "csv row width differs from header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << cells[i];
    }
    os_ << '\n';
  }

  std::ostream& os_;
  std::size_t width_;
};

/// step,y_<first>,...,y_<first + N - 1>
inline void write_trajectory_csv(std::ostream& os, const std::vector<std::pair<long long, std::vector<double>>>& rows,
                                 std::size_t n_locations, std::size_t first_label = 1) {
  std::vector<std::string> header{"step"};
  for (std::size_t i = 0; i < n_locations; ++i) header.push_back("y_" + std::to_string(first_label + i));
  CsvWriter w(os, header);
  for (const auto& [step, y] : rows) {
    std::vector<std::string> cells{std::to_string(step)};
    for (double v : y) cells.push_back(format_double(v));
    w.row(cells);
  }
}

inline void write_edge_list_csv(std::ostream& os, const std::vector<Edge>& edges) {
  CsvWriter w(os, {"vertex_u", "vertex_v"});
  for (const Edge& e : edges) w.row(e.u, e.v);
}

inline void write_vertex_table_csv(std::ostream& os, const GraphState& s) {
  CsvWriter w(os, {"id", "location", "birth_step"});
  for (std::size_t v = 0; v < s.num_vertices(); ++v) w.row(v, s.vertex(v).location, s.vertex(v).birth_step);
}

inline void write_vertex_table_csv(std::ostream& os, const ContinuousGraphState& s) {
  CsvWriter w(os, {"id", "location", "birth_step"});
  for (std::size_t v = 0; v < s.num_vertices(); ++v) w.row(v, s.vertices()[v].x, s.vertices()[v].birth_step);
}

inline void write_degree_table_csv(std::ostream& os, const DegreeTable& t) {
  CsvWriter w(os, {"location", "d", "empirical_count", "empirical_fraction", "theoretical_mass", "cum_empirical",
                   "cum_theoretical"});
  for (const DegreeRow& r : t.rows)
    w.row(t.location, r.d, r.empirical_count, r.empirical_fraction, r.theoretical_mass, r.cum_empirical,
          r.cum_theoretical);
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const Check& c) {
  return {{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed}};
}

inline json to_json(const std::vector<Check>& checks) {
  json out = json::array();
  for (const Check& c : checks) out.push_back(to_json(c));
  return out;
}

inline const Check* find_check(const std::vector<Check>& checks, const std::string& name) {
  for (const Check& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

inline json to_json(const FiniteLocationSpace& space, const EquilibriumResult& r, double tol) {
  const std::vector<Check> checks = check_identities(space, r, tol);
  double sum_nu_phi = 0.0;
  for (std::size_t i = 0; i < r.nu.size(); ++i) sum_nu_phi += r.nu[i] * r.phi[i];
  return {{"nu", r.nu},
          {"phi", r.phi},
          {"lyapunov_value", r.lyapunov_value},
          {"residual", r.residual},
          {"iterations", r.iterations},
          {"identities", {{"sum_nu_phi", sum_nu_phi}, {"max_phi_identity_gap", find_check(checks, "phi_identity")->value}}},
          {"checks", to_json(checks)}};
}

inline json to_json(const DustbinEquilibrium& e) {
  const std::vector<Check> checks = check_dustbin_bounds(e);
  json bounds = json::object();
  for (const Check& c : checks) bounds[c.name] = to_json(c);
  return {{"nu", e.nu},       {"phi", e.phi},           {"gamma", e.gamma}, {"h", e.h},
          {"t", e.t},         {"residual", e.residual}, {"iterations", e.iterations},
          {"bounds", bounds}, {"checks", to_json(checks)}};
}

inline json to_json(const PhaseResult& p) {
  json out{{"phase", to_string(p.phase)}, {"F_near_h", p.F_near_h}, {"divergent", p.divergent},
           {"decided_by", p.decided_by}};
  out["lambda0"] = p.lambda0 ? json(*p.lambda0) : json(nullptr);
  return out;
}

inline json to_json(const CrossCheckReport& r) {
  return {{"n_cells", r.n_cells},
          {"truncation", r.truncation},
          {"phase", to_json(r.phase)},
          {"intervals", r.intervals},
          {"max_discrepancy", r.max_discrepancy},
          {"worst_interval", {r.worst_lo, r.worst_hi}},
          {"solver_residual", r.solver_residual},
          {"bracket_slack", r.bracket_slack}};
}

inline json to_json(const DegreeComparison& c) {
  return {{"total_variation", c.total_variation}, {"tail_slope", std::isnan(c.tail_slope) ? json(nullptr) : json(c.tail_slope)},
          {"theoretical_slope", std::isnan(c.theoretical_slope) ? json(nullptr) : json(c.theoretical_slope)},
          {"slope_points", c.slope_points},       {"slope_min_count", c.slope_min_count},
          {"slope_min_degree", c.slope_min_degree}, {"observed", c.observed}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::ConfigError, "cannot open " + path + " for writing");
  f << text;
  require(static_cast<bool>(f), ErrorKind::ConfigError, "failed writing " + path);
}

}  // namespace gpa
