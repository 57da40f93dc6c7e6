// Command-line driver. Every artifact starts with the full config and seed so
// that a rerun with the same inputs reproduces it byte for byte.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wonham/estimators.hpp"
#include "wonham/filter_oracle.hpp"
#include "wonham/hjb.hpp"
#include "wonham/io.hpp"
#include "wonham/simulate.hpp"
#include "wonham/smp.hpp"

using namespace wonham;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalGuard = 3;
constexpr int kCheckFailed = 4;

struct Context {
  ConfigDocument doc;
  ControlModel model;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

const json& section(const Context& c, const std::string& key) {
  static const json empty = json::object();
  if (!c.doc.root.contains(key)) return empty;
  const json& s = c.doc.root.at(key);
  if (!s.is_object()) config_fail(c.doc, key, "expected an object");
  return s;
}

struct RunSettings {
  std::vector<double> x0;
  double horizon = 0.0;
  double dt = 0.0;
  std::size_t n_paths = 0;
  Scheme scheme = Scheme::robust;
};

RunSettings run_settings(const Context& c) {
  const json& r = section(c, "run");
  RunSettings s;
  s.x0 = config_get<std::vector<double>>(c.doc, r, "x0");
  if (s.x0.size() != c.model.n_states())
    config_fail(c.doc, "x0", "expected " + std::to_string(c.model.n_states()) + " entries");
  const double model_horizon = c.model.horizon() ? *c.model.horizon() : 0.0;
  s.horizon = config_get_or<double>(c.doc, r, "horizon", model_horizon);
  if (!(s.horizon > 0.0)) config_fail(c.doc, "horizon", "a positive run horizon is required");
  s.dt = config_get_or<double>(c.doc, r, "dt", 0.01);
  s.n_paths = config_get_or<std::size_t>(c.doc, r, "n_paths", 100);
  try {
    s.scheme = parse_scheme(config_get_or<std::string>(c.doc, r, "scheme", "robust"));
  } catch (const Error& e) {
    config_fail(c.doc, "scheme", e.what());
  }
  return s;
}

/// Open-loop control from "control": a single label or one label per step.
ControlPath open_loop_control(const Context& c, const TimeGrid& grid) {
  const json& r = section(c, "run");
  if (!r.contains("control")) return ControlPath::constant(0, grid);
  const json& v = r.at("control");
  auto index = [&](const std::string& label) {
    try {
      return c.model.control_index(label);
    } catch (const Error& e) {
      config_fail(c.doc, "control", e.what());
    }
  };
  if (v.is_string()) return ControlPath::constant(index(v.get<std::string>()), grid);
  const auto labels = config_get<std::vector<std::string>>(c.doc, r, "control");
  if (labels.size() != grid.n_steps)
    config_fail(c.doc, "control", "expected " + std::to_string(grid.n_steps) + " labels");
  ControlPath path{grid.dt, {}};
  for (const auto& l : labels) path.labels.push_back(index(l));
  return path;
}

struct SolverSettings {
  SpatialGrid grid;
  std::optional<double> dt;
  EllipticOptions elliptic;
};

SolverSettings solver_settings(const Context& c) {
  const json& s = section(c, "solver");
  SolverSettings out;
  const double L = config_get_or<double>(c.doc, s, "L", 2.0);
  const double dx = config_get_or<double>(c.doc, s, "dx", 0.05);
  try {
    out.grid = SpatialGrid(c.model.n_states(), L, dx);
  } catch (const Error& e) {
    config_fail(c.doc, "dx", e.what());
  }
  if (s.contains("dt")) out.dt = config_get<double>(c.doc, s, "dt");
  out.elliptic.tolerance = config_get_or<double>(c.doc, s, "tolerance", 1e-10);
  out.elliptic.max_iterations = config_get_or<std::size_t>(c.doc, s, "max_iterations", 1000000);
  if (c.model.discount()) out.elliptic.dt = out.dt;
  return out;
}

/// Parabolic solve with the requested dt rounded to divide the horizon, or
/// the admissible bound when none is given; elliptic for discounted models.
ValueGrid solve_value(const Context& c, const SolverSettings& s) {
  if (!c.model.finite_horizon()) return solve_elliptic(c.model, s.grid, s.elliptic);
  const double T = *c.model.horizon();
  const double dt = s.dt ? *s.dt : admissible_time_step(c.model, s.grid);
  const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double used = T / static_cast<double>(steps);
  if (s.dt && used < *s.dt * (1.0 - 1e-12)) {
    // A requested step that does not divide T is rounded down; say so.
    std::cerr << "note: dt " << *s.dt << " rounded to " << used << " to divide the horizon\n";
  }
  return solve_parabolic(c.model, s.grid, steps);
}

std::string stamp(const Context& c) { return csv_header(c.doc.root, c.seed); }

json report_envelope(const Context& c) {
  return json{{"config", c.doc.root}, {"seed", c.seed}};
}

void write_report(const Context& c, const std::string& name, json body) {
  json j = report_envelope(c);
  for (auto& [k, v] : body.items()) j[k] = v;
  write_text((c.out / name).string(), j.dump(2) + "\n");
}

int cmd_validate(const Context& c) {
  const auto& m = c.model;
  std::printf("states: %zu, observation channels: %zu, controls: %zu, knots: %zu\n", m.n_states(),
              m.d_obs(), m.n_controls(), m.n_knots());
  std::printf("K0 = %.17g\n", m.k0());
  std::printf("thinning intensity K = %.17g, N * max rate = %.17g\n", m.k_intensity(),
              static_cast<double>(m.n_states()) * m.max_rate());
  std::printf("max |f| = %.17g, max |h| = %.17g\n", m.max_abs_reward(), m.max_abs_obs());
  if (m.horizon()) std::printf("horizon T = %.17g\n", *m.horizon());
  if (m.discount()) std::printf("discount beta = %.17g\n", *m.discount());
  write_report(c, "validate.json",
               json{{"k0", m.k0()},
                    {"k_intensity", m.k_intensity()},
                    {"max_rate", m.max_rate()},
                    {"max_abs_reward", m.max_abs_reward()},
                    {"max_abs_obs", m.max_abs_obs()}});
  return kOk;
}

int cmd_simulate(const Context& c) {
  const auto run = run_settings(c);
  const TimeGrid grid = make_time_grid(run.horizon, run.dt);
  const ControlPath control = open_loop_control(c, grid);
  std::vector<PhysicalPath> paths(run.n_paths);
  parallel_for(run.n_paths, [&](std::size_t p) {
    paths[p] = simulate_physical(c.seed, p, c.model, control, run.x0, run.horizon, run.dt);
  });
  std::string out = stamp(c) + path_csv_columns(c.model.d_obs());
  for (std::size_t p = 0; p < paths.size(); ++p)
    append_path_csv(out, p, paths[p].chain, paths[p].obs, paths[p].control, c.model);
  write_text((c.out / "paths.csv").string(), out);
  return kOk;
}

int cmd_filter(const Context& c) {
  const auto run = run_settings(c);
  const TimeGrid grid = make_time_grid(run.horizon, run.dt);
  const ControlPath control = open_loop_control(c, grid);
  std::vector<PhysicalPath> paths(run.n_paths);
  std::vector<FilterPath> filters(run.n_paths);
  parallel_for(run.n_paths, [&](std::size_t p) {
    paths[p] = simulate_physical(c.seed, p, c.model, control, run.x0, run.horizon, run.dt);
    filters[p] = integrate_filter(paths[p].obs, control, run.x0, run.scheme, c.model);
  });
  std::string out = stamp(c) + filter_csv_columns(c.model.n_states());
  for (std::size_t p = 0; p < filters.size(); ++p)
    append_filter_csv(out, p, filters[p], control, c.model);
  write_text((c.out / "filter.csv").string(), out);

  const json& f = section(c, "filter");
  const auto chains = config_get_or<std::size_t>(c.doc, f, "oracle_chains", 0);
  if (chains == 0 || run.n_paths == 0) return kOk;
  // Oracle comparison on the first path at evenly spaced checkpoints.
  const auto checkpoints = config_get_or<std::size_t>(c.doc, f, "checkpoints", 10);
  const double z = config_get_or<double>(c.doc, f, "z", 3.0);
  const double budget = config_get_or<double>(c.doc, f, "scheme_budget", 0.0);
  const auto est = oracle_filter_openloop(paths[0].obs, control, run.x0, chains, c.seed + 1, c.model);
  json rows = json::array();
  bool pass = true;
  for (std::size_t m = 1; m <= checkpoints; ++m) {
    const std::size_t k = grid.n_steps * m / checkpoints;
    for (std::size_t i = 0; i < c.model.n_states(); ++i) {
      const double gap = std::abs(filters[0].at(k)[i] - est.at(k, i));
      const bool ok = gap <= z * est.se(k, i) + budget;
      pass = pass && ok;
      rows.push_back({{"t", grid.time(k)},
                      {"state", i + 1},
                      {"filter", filters[0].at(k)[i]},
                      {"oracle", est.at(k, i)},
                      {"oracle_se", est.se(k, i)},
                      {"ok", ok}});
    }
  }
  write_report(c, "filter_oracle.json",
               json{{"chains", chains}, {"scheme_budget", budget}, {"rows", rows}, {"pass", pass}});
  return pass ? kOk : kCheckFailed;
}

void write_solution(const Context& c, const ValueGrid& v, const FeedbackPolicy& policy) {
  write_text((c.out / "value.csv").string(), stamp(c) + value_csv(v));
  write_text((c.out / "policy.csv").string(), stamp(c) + policy_csv(policy));
  write_report(c, "policy.json", json{{"policy", policy_json(policy)}});
  json report = to_json(v.report);
  report["residual_history"] = v.report.history;
  write_report(c, "solver_report.json", json{{"solver", report}});
}

int cmd_solve(const Context& c) {
  const auto v = solve_value(c, solver_settings(c));
  write_solution(c, v, extract_policy(v));
  std::printf("solver: dt = %.6g, dx = %.6g, admissible dt = %.6g\n", v.report.dt, v.report.dx,
              v.report.cfl_bound);
  return kOk;
}

int cmd_verify(const Context& c) {
  const auto run = run_settings(c);
  const auto settings = solver_settings(c);
  const auto v = solve_value(c, settings);
  const auto policy = extract_policy(v);
  write_solution(c, v, policy);
  const json& s = section(c, "verify");
  VerifyOptions opt;
  opt.dt = run.dt;
  opt.horizon = run.horizon;
  opt.seed = c.seed;
  opt.scheme = run.scheme;
  opt.z = config_get_or<double>(c.doc, s, "z", 3.0);
  opt.scheme_budget = config_get_or<double>(c.doc, s, "scheme_budget", 0.0);
  const TimeGrid grid = make_time_grid(run.horizon, run.dt);
  std::vector<std::string> names =
      config_get_or<std::vector<std::string>>(c.doc, s, "challengers", {});
  std::vector<ControlPath> challengers;
  for (const auto& n : names) {
    try {
      challengers.push_back(ControlPath::constant(c.model.control_index(n), grid));
    } catch (const Error& e) {
      config_fail(c.doc, "challengers", e.what());
    }
  }
  const auto rep = verify_optimality(c.model, v, policy, run.x0, challengers, run.n_paths, opt);
  write_report(c, "verification.json", json{{"verification", to_json(rep, names)}});
  std::printf("v(0, x0) = %.6f, closed loop = %.6f +- %.6f: %s\n", rep.value, rep.closed_loop.mean,
              rep.closed_loop.std_error, rep.pass ? "PASS" : "FAIL");
  return rep.pass ? kOk : kCheckFailed;
}

int cmd_smp(const Context& c) {
  const auto run = run_settings(c);
  const json& s = section(c, "smp");
  const std::string which = config_get_or<std::string>(c.doc, s, "control", "policy");
  const TimeGrid grid = make_time_grid(run.horizon, run.dt);
  std::optional<FeedbackPolicy> policy;
  ControlSource source;
  if (which == "policy") {
    const auto v = solve_value(c, solver_settings(c));
    policy = extract_policy(v);
    write_solution(c, v, *policy);
    source = policy->as_feedback();
  } else {
    try {
      source = ControlPath::constant(c.model.control_index(which), grid);
    } catch (const Error& e) {
      config_fail(c.doc, "control", e.what());
    }
  }
  const auto batch = sample_batch(c.model, source, run.x0, run.horizon, run.dt, run.n_paths,
                                  c.seed, run.scheme);
  AdjointOptions aopt;
  aopt.basis_degree = config_get_or<std::size_t>(c.doc, s, "basis_degree", 2);
  const auto adjoint = solve_adjoint(c.model, batch, aopt);
  SmpOptions opt;
  opt.tolerance = config_get_or<double>(c.doc, s, "tolerance", 1e-2);
  opt.level = config_get_or<double>(c.doc, s, "level", 0.05);
  const auto rep = check_max_principle(adjoint, batch, c.model, opt);
  json body = to_json(rep);
  body["control"] = which;
  write_report(c, "smp_report.json", json{{"smp", body}});
  std::printf("violation fraction %.4f at tolerance %.4g (level %.3g): %s\n",
              rep.violation_fraction, rep.tolerance, rep.level, rep.pass ? "PASS" : "FAIL");
  return rep.pass ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal control of partially observed finite-state Markov chains"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  const char* names[] = {"validate", "simulate", "filter", "solve-hjb", "verify", "smp-check"};
  const char* help[] = {"check a model and print the intensity audit",
                        "simulate chain and observation paths",
                        "integrate the filter, optionally against the Monte Carlo oracle",
                        "solve the value function and dump value and policy",
                        "closed-loop verification of the solved policy",
                        "maximum principle check along a sample batch"};
  for (std::size_t i = 0; i < 6; ++i) {
    auto* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "64-bit seed, overrides the config");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto doc = read_config(config_path);
    if (!doc.root.contains("model")) config_fail(doc, "model", "missing required key");
    Context c{doc, load_model(doc, doc.root.at("model")), 0, out_dir};
    c.seed = seed ? *seed : config_get_or<std::uint64_t>(doc, doc.root, "seed", 1);
    std::filesystem::create_directories(c.out);
    if (command == "validate") return cmd_validate(c);
    if (command == "simulate") return cmd_simulate(c);
    if (command == "filter") return cmd_filter(c);
    if (command == "solve-hjb") return cmd_solve(c);
    if (command == "verify") return cmd_verify(c);
    return cmd_smp(c);
  } catch (const CflViolation& e) {
    std::cerr << e.what() << "\n"
              << json{{"error", "CflViolation"},
                      {"requested_dt", e.requested_dt()},
                      {"max_dt", e.max_dt()}}
                     .dump(2)
              << "\n";
    return kNumericalGuard;
  } catch (const NoConvergence& e) {
    std::cerr << e.what() << "\n"
              << json{{"error", "NoConvergence"},
                      {"iterations", e.iterations()},
                      {"residual_history", e.residual_history()}}
                     .dump(2)
              << "\n";
    return kNumericalGuard;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    if (e.is_numerical_guard()) return kNumericalGuard;
    if (e.kind() == ErrorKind::config_error) return kConfigError;
    // Model validation failures come from the config as well.
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  }
}
