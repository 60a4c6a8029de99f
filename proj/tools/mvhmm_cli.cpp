// mvhmm: command-line driver for the regime-switching mean-variance solver.
//
//   mvhmm check    --config run.json            CFL / consistency report
//   mvhmm solve    --config run.json --kappa 3  value and policy tables
//   mvhmm frontier --config run.json            efficient frontier sweep
//   mvhmm simulate --model m.json --policy out/policy.csv --paths 10000
//
// Exit status: 0 success, 1 error, 2 CFL failure (without --force).

#include <mvhmm/mvhmm.hpp>
#include <mvhmm/policy_io.hpp>
#include <mvhmm/run_config.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mvhmm;

namespace {

constexpr int kExitError = 1;
constexpr int kExitCfl = 2;

struct Flags {
  std::string config, model, out, p_mode, lambda_bracket, kappa_range, lambda_search, p0, policy;
  double h1 = 0, h2 = 0, x_min = 0, x_max = 0, lambda = 0, kappa = 0, u_min = 0, u_max = 0,
         x0 = 0;
  std::size_t u_points = 0, paths = 0, sample_paths = 0;
  std::uint64_t seed = 0;
  bool force = false;
  std::vector<std::pair<std::string, CLI::Option*>> opts;

  bool given(const std::string& name) const {
    for (const auto& [n, o] : opts)
      if (n == name) return o->count() > 0;
    return false;
  }
};

void add_flags(CLI::App* sub, Flags& f) {
  auto add = [&](const std::string& name, auto& dst, const std::string& help) {
    f.opts.emplace_back(name, sub->add_option("--" + name, dst, help));
  };
  add("config", f.config, "run configuration JSON");
  add("model", f.model, "model JSON");
  add("grid-h1", f.h1, "state and posterior spacing h1");
  add("grid-h2", f.h2, "time step h2");
  add("x-min", f.x_min, "lower end of the wealth grid");
  add("x-max", f.x_max, "upper end of the wealth grid");
  add("p-mode", f.p_mode, "posterior grid: auto, single, reduced, full");
  add("u-min", f.u_min, "smallest control value");
  add("u-max", f.u_max, "largest control value");
  add("u-points", f.u_points, "control values per risky node");
  add("x0", f.x0, "initial wealth");
  add("p0", f.p0, "initial posterior, comma separated");
  add("lambda", f.lambda, "fixed Lagrange multiplier");
  add("lambda-bracket", f.lambda_bracket, "multiplier search interval lo:hi");
  add("lambda-search", f.lambda_search, "golden or nelder-mead");
  add("kappa", f.kappa, "target terminal mean");
  add("kappa-range", f.kappa_range, "frontier targets start:stop:step");
  add("paths", f.paths, "Monte Carlo paths");
  add("seed", f.seed, "random seed");
  add("out", f.out, "output directory");
  add("policy", f.policy, "policy.csv written by solve");
  add("sample-paths", f.sample_paths, "write this many per-path CSV files");
  f.opts.emplace_back("force", sub->add_flag("--force", f.force, "run even if the CFL check fails"));
}

std::vector<double> split_numbers(const std::string& text, char sep, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": cannot parse '" + text + "'");
    }
  }
  return out;
}

RunConfig effective_config(const Flags& f) {
  RunConfig c = f.given("config") ? load_config(f.config) : RunConfig{};
  if (f.given("model")) c.model_path = f.model;
  if (f.given("grid-h1")) c.h1 = f.h1;
  if (f.given("grid-h2")) c.h2 = f.h2;
  if (f.given("x-min")) c.x_min = f.x_min;
  if (f.given("x-max")) c.x_max = f.x_max;
  if (f.given("p-mode")) c.p_mode = parse_pmode(f.p_mode);
  if (f.given("u-min")) c.u_min = f.u_min;
  if (f.given("u-max")) c.u_max = f.u_max;
  if (f.given("u-points")) c.u_points = f.u_points;
  if (f.given("x0")) c.x0 = f.x0;
  if (f.given("p0")) c.p0 = split_numbers(f.p0, ',', "--p0");
  if (f.given("lambda")) c.lambda = f.lambda;
  if (f.given("lambda-bracket")) {
    const auto v = split_numbers(f.lambda_bracket, ':', "--lambda-bracket");
    if (v.size() != 2) throw ConfigError("--lambda-bracket: expected lo:hi");
    c.lambda_lo = v[0];
    c.lambda_hi = v[1];
  }
  if (f.given("lambda-search")) {
    const auto m = parse_lambda_method(f.lambda_search);
    if (!m) throw ConfigError("--lambda-search: expected golden or nelder-mead");
    c.lambda_method = *m;
  }
  if (f.given("kappa")) c.kappa = f.kappa;
  if (f.given("kappa-range")) {
    const auto v = split_numbers(f.kappa_range, ':', "--kappa-range");
    if (v.size() != 3) throw ConfigError("--kappa-range: expected start:stop:step");
    c.kappa_range = KappaRange{v[0], v[1], v[2]};
  }
  if (f.given("paths")) c.paths = f.paths;
  if (f.given("seed")) c.seed = f.seed;
  if (f.given("out")) c.out = f.out;
  if (f.given("policy")) c.policy_path = f.policy;
  if (f.given("sample-paths")) c.sample_paths = f.sample_paths;
  if (f.force) c.force = true;
  return c;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json provenance(const RunConfig& c, const char* command) {
  json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config_hash"] = config_hash(c);
  j["generated_at"] = utc_timestamp();
  return j;
}

json grid_json(const GridSpec& g) {
  return {{"h1", g.h1()},       {"h2", g.h2()},   {"x_min", g.x_min()},
          {"x_max", g.x_max()}, {"s", g.s()},     {"T", g.T()},
          {"p_mode", std::string(to_string(g.mode()))},
          {"n_steps", g.n_steps()}, {"nx", g.nx()}, {"np", g.np()}};
}

json cfl_json(const CflReport& r) {
  json j;
  j["pass"] = r.pass;
  j["max_coefficient"] = r.max_coefficient;
  j["violation_count"] = r.violation_count;
  j["nodes_scanned"] = r.nodes_scanned;
  j["max_abs_p_diagonal"] = r.max_abs_diag;
  j["min_center_weight"] = r.min_center_weight;
  j["violations"] = json::array();
  for (const auto& v : r.violations) {
    j["violations"].push_back(
        {{"n", v.n}, {"x", v.x}, {"p", v.p}, {"u", v.u}, {"coefficient", v.coefficient}});
  }
  return j;
}

json mc_json(const McReport& r) {
  return {{"n_paths", r.n_paths},
          {"mean", r.mean},
          {"variance", r.variance},
          {"mean_ci95", r.mean_ci},
          {"variance_ci95", r.variance_ci},
          {"residual", r.residual},
          {"objective", r.objective},
          {"objective_se", r.objective_se},
          {"clipped_paths", r.clipped_paths},
          {"warnings", r.warnings}};
}

void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

struct Setup {
  RunConfig cfg;
  RegimeModel model;
  GridSpec grid;
  ControlSet controls;
  std::vector<double> p0;
};

/// Loads the model and validates everything before any compute; all
/// problems are reported together.
Setup prepare(const Flags& f, Command cmd) {
  Setup s;
  s.cfg = effective_config(f);
  std::vector<std::string> issues;
  const RegimeModel* model = nullptr;
  if (!s.cfg.model_path.empty()) {
    try {
      s.model = load_model(s.cfg.model_path);
      if (auto bad = validate_model(s.model); !bad.empty()) {
        for (auto& b : bad) issues.push_back("model " + s.cfg.model_path + ": " + b);
      } else {
        model = &s.model;
      }
    } catch (const ParseError& e) {
      issues.push_back(std::string("model: ") + e.what());
    }
  }
  auto more = validate_config(s.cfg, cmd, model);
  issues.insert(issues.end(), more.begin(), more.end());
  if (!issues.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(issues.size()) + " problem" +
                      (issues.size() == 1 ? "" : "s") + "):";
    for (const auto& i : issues) msg += "\n  - " + i;
    throw ConfigError(msg);
  }
  s.p0 = s.cfg.p0.empty() ? std::vector<double>(s.model.m, 1.0 / static_cast<double>(s.model.m))
                          : s.cfg.p0;
  if (cmd != Command::Simulate) {
    s.grid = GridSpec::make(s.model, s.cfg.h1, s.cfg.h2, s.cfg.x_min, s.cfg.x_max, s.cfg.p_mode);
    s.controls = ControlSet::uniform(s.model.d, s.cfg.u_min, s.cfg.u_max, s.cfg.u_points);
  }
  return s;
}

void print_cfl(const CflReport& r) {
  std::cout << "CFL " << (r.pass ? "pass" : "FAIL") << ": max |b|h2/h1 + a h2/h1^2 = "
            << io::format_double(r.max_coefficient) << " over " << r.nodes_scanned
            << " node/control pairs";
  if (!r.pass) std::cout << ", " << r.violation_count << " above 1";
  std::cout << "\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(r.violations.size(), 5); ++i) {
    const auto& v = r.violations[i];
    std::cout << "  n=" << v.n << " x=" << io::format_double(v.x)
              << " u=" << io::format_double(v.u[0])
              << " coefficient=" << io::format_double(v.coefficient) << "\n";
  }
}

/// Returns true when the run may continue.
bool cfl_gate(const Setup& s, CflReport& report) {
  report = check_cfl(s.model, s.grid, s.controls);
  print_cfl(report);
  if (!report.pass && !s.cfg.force) {
    std::cerr << "error: CFL check failed; refine h2, coarsen h1, or pass --force\n";
    return false;
  }
  return true;
}

int run_check(const Flags& f) {
  const auto s = prepare(f, Command::Check);
  const auto report = check_cfl(s.model, s.grid, s.controls);
  print_cfl(report);

  // worst local-consistency errors over the first time layer
  double mean_err = 0.0, var_err = 0.0, var_bound = 0.0;
  const double t = s.grid.time(0);
  for (std::size_t pi = 0; pi < s.grid.np(); ++pi) {
    const auto p = s.grid.p(pi);
    for (std::size_t k = 0; k < s.grid.nx(); ++k) {
      for (std::size_t ui = 0; ui < s.controls.size(); ++ui) {
        const auto st =
            local_consistency_stats(s.model, s.grid, t, s.grid.x(k), p, s.controls[ui]);
        mean_err = std::max(mean_err, std::abs(st.mean - st.mean_target));
        var_err = std::max(var_err, std::abs(st.variance - st.variance_target));
        const double bh = std::abs(st.b) * s.grid.h2();
        var_bound = std::max(var_bound, s.grid.h1() * bh + bh * bh);
      }
    }
  }
  std::cout << "local consistency at t=" << io::format_double(t)
            << ": max mean error " << io::format_double(mean_err) << ", max variance error "
            << io::format_double(var_err) << " (bound " << io::format_double(var_bound) << ")\n";

  json j = provenance(s.cfg, "check");
  j["grid"] = grid_json(s.grid);
  j["controls"] = s.controls.size();
  j["cfl"] = cfl_json(report);
  j["consistency"] = {{"time", t},
                      {"max_mean_error", mean_err},
                      {"max_variance_error", var_err},
                      {"variance_error_bound", var_bound}};
  const fs::path out = fs::path(s.cfg.out) / "check.json";
  write_json(out, j);
  std::cout << "wrote " << out.string() << "\n";
  return report.pass ? 0 : kExitCfl;
}

int run_solve(const Flags& f) {
  const auto s = prepare(f, Command::Solve);
  CflReport cfl;
  if (!cfl_gate(s, cfl)) return kExitCfl;
  const double kappa = *s.cfg.kappa;

  const Problem pb{s.model, s.grid, s.controls, s.cfg.x0, s.p0};
  double lambda = 0.0;
  json search = nullptr;
  if (s.cfg.lambda) {
    lambda = *s.cfg.lambda;
  } else {
    LambdaSearchOptions opts{s.cfg.lambda_lo, s.cfg.lambda_hi, s.cfg.lambda_tol,
                             s.cfg.lambda_method};
    const auto r = search_lambda([&](double l) { return dual_value(pb, kappa, l); }, opts);
    lambda = r.lambda;
    search = {{"method", to_string(s.cfg.lambda_method)},
              {"evaluations", r.evaluations},
              {"widened", r.widened}};
    std::cout << "lambda* = " << io::format_double(lambda) << " after " << r.evaluations
              << " dual evaluations\n";
  }

  const auto res = solve(s.model, s.grid, {lambda, kappa, s.controls, true}, {.skip_cfl = true});
  const auto moments = policy_moments(s.model, res.policy, s.cfg.x0, s.p0);
  const double v0 = res.value_at(s.cfg.x0, s.p0);
  std::cout << "V(s, x0, p0) = " << io::format_double(v0) << ", chain mean "
            << io::format_double(moments.mean) << ", chain variance "
            << io::format_double(moments.variance) << "\n";

  const fs::path dir = s.cfg.out;
  io::write_atomic(dir / "policy.csv", policy_csv(res.values, res.policy));

  json j = provenance(s.cfg, "solve");
  j["config"] = config_to_json(s.cfg);
  j["grid"] = grid_json(s.grid);
  j["lambda"] = lambda;
  j["kappa"] = kappa;
  j["lambda_search"] = search;
  j["x0"] = s.cfg.x0;
  j["p0"] = s.p0;
  j["value"] = v0;
  j["chain_mean"] = moments.mean;
  j["chain_variance"] = moments.variance;
  j["diagnostics"] = {{"min_value", res.diagnostics.min_value},
                      {"bound_violations", res.diagnostics.bound_violations},
                      {"boundary_hits", res.diagnostics.boundary_hits}};
  j["cfl"] = cfl_json(cfl);
  j["model_fingerprint"] = std::to_string(model_fingerprint(s.model));
  j["files"] = {"policy.csv"};
  write_json(dir / "solve_summary.json", j);
  std::cout << "wrote " << (dir / "policy.csv").string() << " and "
            << (dir / "solve_summary.json").string() << "\n";
  return 0;
}

int run_frontier(const Flags& f) {
  const auto s = prepare(f, Command::Frontier);
  CflReport cfl;
  if (!cfl_gate(s, cfl)) return kExitCfl;

  const Problem pb{s.model, s.grid, s.controls, s.cfg.x0, s.p0};
  FrontierOptions opts;
  opts.search = {s.cfg.lambda_lo, s.cfg.lambda_hi, s.cfg.lambda_tol, s.cfg.lambda_method};
  opts.mc_paths = s.cfg.paths;
  opts.seed = s.cfg.seed;

  std::vector<FrontierPoint> points;
  std::size_t failures = 0;
  for (double kappa : kappa_values(*s.cfg.kappa_range)) {
    auto batch = efficient_frontier(pb, {kappa}, opts);
    const auto& pt = batch.front();
    if (pt.ok()) {
      std::cout << "kappa " << io::format_double(kappa) << ": lambda* "
                << io::format_double(pt.lambda_star) << ", std " << io::format_double(pt.std_dev)
                << ", mc mean " << io::format_double(pt.mc.mean) << "\n";
    } else {
      ++failures;
      std::cout << "kappa " << io::format_double(kappa) << ": " << pt.error << "\n";
    }
    points.push_back(pt);
  }

  const fs::path dir = s.cfg.out;
  io::write_atomic(dir / "frontier.csv", frontier_csv(points));
  json j = provenance(s.cfg, "frontier");
  j["config"] = config_to_json(s.cfg);
  j["grid"] = grid_json(s.grid);
  j["cfl"] = cfl_json(cfl);
  j["points"] = json::array();
  for (const auto& pt : points) {
    json p = {{"kappa", pt.kappa}, {"ok", pt.ok()}};
    if (pt.ok()) {
      p["lambda_star"] = pt.lambda_star;
      p["dual_value"] = pt.dual_value;
      p["std_dev"] = pt.std_dev;
      p["chain_mean"] = pt.chain_mean;
      p["chain_variance"] = pt.chain_variance;
      p["evaluations"] = pt.evaluations;
      p["widened"] = pt.widened;
      p["mc"] = mc_json(pt.mc);
    } else {
      p["error"] = pt.error;
    }
    j["points"].push_back(p);
  }
  write_json(dir / "frontier_summary.json", j);
  std::cout << "wrote " << (dir / "frontier.csv").string() << " (" << points.size()
            << " rows)\n";
  if (failures > 0) {
    std::cerr << "error: " << failures << " of " << points.size() << " targets failed\n";
    return kExitError;
  }
  return 0;
}

int run_simulate(const Flags& f) {
  auto s = prepare(f, Command::Simulate);
  auto policy = read_policy_csv(s.cfg.policy_path, s.model);

  // multiplier and target default to the ones the policy was solved for
  std::optional<double> lambda = s.cfg.lambda, kappa = s.cfg.kappa;
  const auto summary = fs::path(s.cfg.policy_path).parent_path() / "solve_summary.json";
  if ((!lambda || !kappa) && fs::exists(summary)) {
    std::ifstream in(summary);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_discarded()) {
      if (!lambda && j.contains("lambda")) lambda = j["lambda"].get<double>();
      if (!kappa && j.contains("kappa")) kappa = j["kappa"].get<double>();
    }
  }
  if (!lambda || !kappa) {
    throw ConfigError("simulate needs --lambda and --kappa (no solve_summary.json beside " +
                      s.cfg.policy_path + ")");
  }
  policy.lambda = *lambda;
  policy.kappa = *kappa;
  if (!(policy.grid.x_min() <= s.cfg.x0 && s.cfg.x0 <= policy.grid.x_max())) {
    throw ConfigError("x0 lies outside the policy's x-range");
  }

  const auto rep = mc_estimate(s.model, policy, *lambda, *kappa, s.cfg.x0, s.p0, s.cfg.paths,
                               s.cfg.seed);
  std::cout << "mean " << io::format_double(rep.mean) << " +- " << io::format_double(rep.mean_ci)
            << ", variance " << io::format_double(rep.variance) << ", objective "
            << io::format_double(rep.objective) << " +- " << io::format_double(rep.objective_se)
            << "\n";
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path dir = s.cfg.out;
  json j = provenance(s.cfg, "simulate");
  j["policy"] = s.cfg.policy_path;
  j["model"] = s.cfg.model_path;
  j["seed"] = s.cfg.seed;
  j["lambda"] = *lambda;
  j["kappa"] = *kappa;
  j["x0"] = s.cfg.x0;
  j["p0"] = s.p0;
  j["report"] = mc_json(rep);
  write_json(dir / "mc_report.json", j);
  for (std::size_t i = 0; i < std::min(s.cfg.sample_paths, s.cfg.paths); ++i) {
    const auto path = simulate_closed_loop(s.model, policy, s.cfg.x0, s.p0, s.cfg.seed, i);
    char name[32];
    std::snprintf(name, sizeof name, "path_%04zu.csv", i);
    io::write_atomic(dir / "paths" / name, sim_path_csv(path));
  }
  std::cout << "wrote " << (dir / "mc_report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-variance control with a hidden Markov regime"};
  app.require_subcommand(1);
  Flags check_f, solve_f, frontier_f, simulate_f;
  auto* check = app.add_subcommand("check", "CFL and local-consistency report for a grid");
  auto* solve_cmd = app.add_subcommand("solve", "backward value iteration at one (lambda, kappa)");
  auto* frontier = app.add_subcommand("frontier", "efficient frontier over a range of targets");
  auto* simulate = app.add_subcommand("simulate", "closed-loop Monte Carlo of a solved policy");
  add_flags(check, check_f);
  add_flags(solve_cmd, solve_f);
  add_flags(frontier, frontier_f);
  add_flags(simulate, simulate_f);

  CLI11_PARSE(app, argc, argv);
  try {
    if (check->parsed()) return run_check(check_f);
    if (solve_cmd->parsed()) return run_solve(solve_f);
    if (frontier->parsed()) return run_frontier(frontier_f);
    if (simulate->parsed()) return run_simulate(simulate_f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
