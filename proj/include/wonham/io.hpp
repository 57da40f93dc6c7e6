#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wonham/error.hpp"
#include "wonham/hjb.hpp"
#include "wonham/model.hpp"
#include "wonham/paths.hpp"
#include "wonham/smp.hpp"
#include "wonham/stats.hpp"

namespace wonham {

using json = nlohmann::ordered_json;

/// Parsed document plus its source text, kept so errors can name a line.
struct ConfigDocument {
  json root;
  std::string text;
  std::string source;
};

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n' ? 1 : 0;
  return line;
}

/// Line of the first occurrence of "key" in the text, or 0 when absent.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

[[noreturn]] inline void config_fail(const ConfigDocument& doc, const std::string& key,
                                     const std::string& message) {
  const std::size_t line = detail::line_of_key(doc.text, key);
  std::string where = doc.source;
  if (line > 0) where += ":" + std::to_string(line);
  throw Error(ErrorKind::config_error, where + ": '" + key + "': " + message);
}

inline ConfigDocument parse_config_text(const std::string& text, const std::string& source) {
  ConfigDocument doc{{}, text, source};
  try {
    doc.root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config_error,
                source + ":" + std::to_string(detail::line_of_offset(text, e.byte)) + ": " +
                    e.what());
  }
  if (!doc.root.is_object())
    throw Error(ErrorKind::config_error, source + ":1: top level must be a JSON object");
  return doc;
}

inline ConfigDocument read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config_error, path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// Typed lookup that reports the key and its line on failure.
template <class T>
T config_get(const ConfigDocument& doc, const json& node, const std::string& key) {
  if (!node.contains(key)) config_fail(doc, key, "missing required key");
  try {
    return node.at(key).get<T>();
  } catch (const json::exception& e) {
    config_fail(doc, key, std::string("wrong type (") + e.what() + ")");
  }
}

template <class T>
T config_get_or(const ConfigDocument& doc, const json& node, const std::string& key, T fallback) {
  if (!node.contains(key)) return fallback;
  return config_get<T>(doc, node, key);
}

/// Builds and validates a model from the JSON layout
///   q [control][knot][i][j], h [i][control][knot][k], f [i][control][knot], g [i].
/// Arrays are positional; states are numbered from 1 in every output file.
inline ControlModel load_model(const ConfigDocument& doc, const json& m) {
  ModelSpec s;
  s.n_states = config_get<std::size_t>(doc, m, "n_states");
  s.d_obs = config_get<std::size_t>(doc, m, "d_obs");
  s.controls = config_get<std::vector<std::string>>(doc, m, "controls");
  s.time_knots = config_get_or<std::vector<double>>(doc, m, "time_knots", {0.0});
  if (s.n_states < 2) config_fail(doc, "n_states", "need at least 2 states");
  if (s.d_obs < 1) config_fail(doc, "d_obs", "need at least 1 observation channel");
  if (s.controls.empty()) config_fail(doc, "controls", "control grid is empty");
  if (s.time_knots.empty()) config_fail(doc, "time_knots", "need at least one knot");
  const auto q = config_get<std::vector<std::vector<std::vector<std::vector<double>>>>>(doc, m, "q");
  const auto h = config_get<std::vector<std::vector<std::vector<std::vector<double>>>>>(doc, m, "h");
  const auto f = config_get<std::vector<std::vector<std::vector<double>>>>(doc, m, "f");
  const std::size_t n = s.n_states, na = s.controls.size(), nk = s.time_knots.size(), d = s.d_obs;
  auto shape_fail = [&](const char* key, const std::string& what) {
    config_fail(doc, key, "expected shape " + what);
  };
  const std::string qshape = "[" + std::to_string(na) + "][" + std::to_string(nk) + "][" +
                             std::to_string(n) + "][" + std::to_string(n) + "]";
  if (q.size() != na) shape_fail("q", qshape);
  for (const auto& qa : q) {
    if (qa.size() != nk) shape_fail("q", qshape);
    for (const auto& qk : qa) {
      if (qk.size() != n) shape_fail("q", qshape);
      for (const auto& row : qk)
        if (row.size() != n) shape_fail("q", qshape);
    }
  }
  const std::string hshape = "[" + std::to_string(n) + "][" + std::to_string(na) + "][" +
                             std::to_string(nk) + "][" + std::to_string(d) + "]";
  if (h.size() != n) shape_fail("h", hshape);
  for (const auto& hi : h) {
    if (hi.size() != na) shape_fail("h", hshape);
    for (const auto& ha : hi) {
      if (ha.size() != nk) shape_fail("h", hshape);
      for (const auto& hk : ha)
        if (hk.size() != d) shape_fail("h", hshape);
    }
  }
  const std::string fshape =
      "[" + std::to_string(n) + "][" + std::to_string(na) + "][" + std::to_string(nk) + "]";
  if (f.size() != n) shape_fail("f", fshape);
  for (const auto& fi : f) {
    if (fi.size() != na) shape_fail("f", fshape);
    for (const auto& fa : fi)
      if (fa.size() != nk) shape_fail("f", fshape);
  }
  s = ModelSpec::zeros(n, d, s.controls, s.time_knots);
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t k = 0; k < nk; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s.rates[s.rate_index(a, k, i, j)] = q[a][k][i][j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t k = 0; k < nk; ++k) {
        s.reward[s.reward_index(i, a, k)] = f[i][a][k];
        for (std::size_t c = 0; c < d; ++c) s.obs[s.obs_index(i, a, k, c)] = h[i][a][k][c];
      }
  s.terminal = config_get_or<std::vector<double>>(doc, m, "g", std::vector<double>(n, 0.0));
  if (s.terminal.size() != n) config_fail(doc, "g", "expected " + std::to_string(n) + " entries");
  if (m.contains("horizon")) s.horizon = config_get<double>(doc, m, "horizon");
  if (m.contains("discount")) s.discount = config_get<double>(doc, m, "discount");
  if (m.contains("k0")) s.k0 = config_get<double>(doc, m, "k0");
  if (m.contains("k_intensity")) s.k_intensity = config_get<double>(doc, m, "k_intensity");
  return validate_model(s);
}

inline std::string csv_header(const json& config, std::uint64_t seed) {
  return "# config: " + config.dump() + "\n# seed: " + std::to_string(seed) + "\n";
}

/// Path dump with a path-id column: (path, t, state, control, W_1..W_d).
/// States are 1-based; W is cumulative.
inline void append_path_csv(std::string& out, std::size_t path_id, const ChainPath& chain,
                            const ObservationPath& obs, const ControlPath& control,
                            const ControlModel& model) {
  std::vector<double> w(obs.d_obs, 0.0);
  for (std::size_t k = 0; k <= obs.grid.n_steps; ++k) {
    const double t = obs.grid.time(k);
    const std::size_t label = control.labels[std::min(k, control.labels.size() - 1)];
    out += std::to_string(path_id) + "," + detail::fmt(t) + "," +
           std::to_string(chain.state_at(t) + 1) + "," + model.controls()[label];
    for (double v : w) out += "," + detail::fmt(v);
    out += "\n";
    if (k < obs.grid.n_steps) {
      const auto dw = obs.increment(k);
      for (std::size_t c = 0; c < obs.d_obs; ++c) w[c] += dw[c];
    }
  }
}

inline std::string path_csv_columns(std::size_t d) {
  std::string s = "path,t,state,control";
  for (std::size_t c = 1; c <= d; ++c) s += ",W_" + std::to_string(c);
  return s + "\n";
}

/// Filter dump: (path, t, control, rho_1..rho_N, pi_1..pi_N, mass).
inline void append_filter_csv(std::string& out, std::size_t path_id, const FilterPath& filter,
                              const ControlPath& control, const ControlModel& model) {
  for (std::size_t k = 0; k <= filter.grid.n_steps; ++k) {
    const std::size_t label = control.labels[std::min(k, control.labels.size() - 1)];
    out += std::to_string(path_id) + "," + detail::fmt(filter.grid.time(k)) + "," +
           model.controls()[label];
    const double mass = filter.mass(k);
    for (double v : filter.at(k)) out += "," + detail::fmt(v);
    for (double v : filter.at(k)) out += "," + detail::fmt(mass > 0.0 ? v / mass : 0.0);
    out += "," + detail::fmt(mass) + "\n";
  }
}

inline std::string filter_csv_columns(std::size_t n) {
  std::string s = "path,t,control";
  for (std::size_t i = 1; i <= n; ++i) s += ",rho_" + std::to_string(i);
  for (std::size_t i = 1; i <= n; ++i) s += ",pi_" + std::to_string(i);
  return s + ",mass\n";
}

/// Value dump: (t, x_1..x_N, value, control). Parabolic grids list every kept
/// layer; the argmax of the final layer is empty.
inline std::string value_csv(const ValueGrid& v) {
  std::string s = "t";
  for (std::size_t i = 1; i <= v.grid.dim(); ++i) s += ",x_" + std::to_string(i);
  s += ",value,control\n";
  std::vector<double> x(v.grid.dim());
  for (std::size_t layer = 0; layer < v.values.size(); ++layer) {
    const double t = v.stationary ? 0.0 : v.time.time(v.values.size() == 1 ? 0 : layer);
    for (std::size_t node = 0; node < v.grid.size(); ++node) {
      v.grid.coords(node, x);
      s += detail::fmt(t);
      for (double c : x) s += "," + detail::fmt(c);
      s += "," + detail::fmt(v.values[layer][node]) + ",";
      if (layer < v.argmax.size()) s += v.labels[v.argmax[layer][node]];
      s += "\n";
    }
  }
  return s;
}

/// Policy dump on simplex nodes: (t, x_1..x_N, control).
inline std::string policy_csv(const FeedbackPolicy& p) {
  std::string s = "t";
  for (std::size_t i = 1; i <= p.grid.dim(); ++i) s += ",x_" + std::to_string(i);
  s += ",control\n";
  std::vector<double> x(p.grid.dim());
  for (std::size_t layer = 0; layer < p.argmax.size(); ++layer)
    for (std::size_t node = 0; node < p.grid.size(); ++node) {
      if (!p.grid.on_simplex(node)) continue;
      p.grid.coords(node, x);
      s += detail::fmt(p.stationary ? 0.0 : p.dt * static_cast<double>(layer));
      for (double c : x) s += "," + detail::fmt(c);
      s += "," + p.labels[p.argmax[layer][node]] + "\n";
    }
  return s;
}

/// Reloadable policy: grid geometry, step and the full argmax table.
inline json policy_json(const FeedbackPolicy& p) {
  return json{{"L", p.grid.length()},     {"dx", p.grid.dx()},         {"dim", p.grid.dim()},
              {"dt", p.dt},               {"stationary", p.stationary}, {"labels", p.labels},
              {"argmax", p.argmax}};
}

inline FeedbackPolicy policy_from_json(const ConfigDocument& doc, const json& j,
                                       const ControlModel& model) {
  FeedbackPolicy p;
  p.grid = SpatialGrid(config_get<std::size_t>(doc, j, "dim"), config_get<double>(doc, j, "L"),
                       config_get<double>(doc, j, "dx"));
  p.dt = config_get<double>(doc, j, "dt");
  p.stationary = config_get<bool>(doc, j, "stationary");
  p.labels = config_get<std::vector<std::string>>(doc, j, "labels");
  p.argmax = config_get<std::vector<std::vector<std::uint16_t>>>(doc, j, "argmax");
  if (p.labels != model.controls()) config_fail(doc, "labels", "policy labels differ from the model");
  if (p.grid.dim() != model.n_states()) config_fail(doc, "dim", "policy dimension differs");
  for (const auto& layer : p.argmax) {
    if (layer.size() != p.grid.size()) config_fail(doc, "argmax", "layer size differs from grid");
    for (auto a : layer)
      if (a >= p.labels.size()) config_fail(doc, "argmax", "label index out of range");
  }
  if (p.argmax.empty()) config_fail(doc, "argmax", "no layers");
  return p;
}

inline json to_json(const Estimate& e) {
  return json{{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n}};
}

inline json to_json(const SolverReport& r) {
  return json{{"dt", r.dt},
              {"dx", r.dx},
              {"cfl_bound", r.cfl_bound},
              {"iterations", r.iterations},
              {"residual", r.residual}};
}

inline json to_json(const SmpReport& r) {
  return json{{"n_samples", r.n_samples},
              {"n_steps", r.n_steps},
              {"tolerance", r.tolerance},
              {"violation_fraction", r.violation_fraction},
              {"gap_quantiles", {{"p50", r.p50}, {"p90", r.p90}, {"p99", r.p99}, {"max", r.max}}},
              {"pass", r.pass}};
}

inline json to_json(const VerificationReport& r, const std::vector<std::string>& challenger_names) {
  json ch = json::array();
  for (std::size_t c = 0; c < r.challengers.size(); ++c)
    ch.push_back({{"name", challenger_names.at(c)},
                  {"reward", to_json(r.challengers[c].reward)},
                  {"excess_over_closed_loop", to_json(r.challengers[c].excess)},
                  {"ok", r.challengers[c].ok}});
  return json{{"value", r.value},
              {"closed_loop", to_json(r.closed_loop)},
              {"scheme_budget", r.scheme_budget},
              {"z", r.z},
              {"value_ok", r.value_ok},
              {"challengers", ch},
              {"pass", r.pass}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::config_error, path + ": cannot write file");
  out << text;
}

}  // namespace wonham
