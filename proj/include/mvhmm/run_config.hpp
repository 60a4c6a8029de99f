#pragma once

// Run configuration shared by the command-line subcommands.
//
// {
//   "model": "two_regime_model.json",          // relative to the config file
//   "grid": {"h1": 0.25, "h2": 0.001, "x_min": -4, "x_max": 10, "p_mode": "auto"},
//   "controls": {"u_min": -2, "u_max": 2, "points": 41},
//   "x0": 1, "p0": [0.5, 0.5],
//   "lambda": 0.5,                            // fixed multiplier (solve), optional
//   "lambda_bracket": [-10, 10], "lambda_search": "golden", "lambda_tol": 1e-4,
//   "kappa": 3,
//   "kappa_range": {"start": 1, "stop": 5.5, "step": 0.5},
//   "paths": 10000, "seed": 1,
//   "out": "out"
// }
//
// Every key is optional; command-line flags override file values.

#include <mvhmm/error.hpp>
#include <mvhmm/frontier.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/io.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/model_io.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace mvhmm {

inline constexpr const char* kVersion = "0.1.0";

struct KappaRange {
  double start = 1.0;
  double stop = 5.5;
  double step = 0.5;
};

struct RunConfig {
  std::string model_path;

  double h1 = 0.25;
  double h2 = 0.001;
  double x_min = 0.0;
  double x_max = 6.0;
  PMode p_mode = PMode::Auto;

  double u_min = -2.0;
  double u_max = 2.0;
  std::size_t u_points = 41;

  double x0 = 1.0;
  std::vector<double> p0;  ///< empty: uniform over the regimes

  std::optional<double> lambda;
  double lambda_lo = -10.0;
  double lambda_hi = 10.0;
  double lambda_tol = 1e-4;
  LambdaMethod lambda_method = LambdaMethod::GoldenSection;

  std::optional<double> kappa;
  std::optional<KappaRange> kappa_range;

  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  std::string out = "out";
  bool force = false;

  std::string policy_path;
  std::size_t sample_paths = 0;
};

inline std::string to_string(LambdaMethod m) {
  return m == LambdaMethod::GoldenSection ? "golden" : "nelder-mead";
}

inline std::optional<LambdaMethod> parse_lambda_method(const std::string& s) {
  if (s == "golden") return LambdaMethod::GoldenSection;
  if (s == "nelder-mead") return LambdaMethod::NelderMead;
  return std::nullopt;
}

/// Targets start, start + step, ... up to stop (inclusive, to rounding).
inline std::vector<double> kappa_values(const KappaRange& r) {
  std::vector<double> out;
  if (!(r.step > 0.0) || r.stop < r.start) return out;
  const auto count = static_cast<std::size_t>(std::floor((r.stop - r.start) / r.step + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k) out.push_back(r.start + static_cast<double>(k) * r.step);
  return out;
}

namespace detail {

/// Reads keys into `cfg`, appending one message per malformed key.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::vector<std::string>& issues)
      : j_(j), issues_(issues) {}

  void number(const char* key, double& dst, const nlohmann::json* obj = nullptr,
              const std::string& prefix = "") {
    const auto& o = obj ? *obj : j_;
    if (!o.contains(key)) return;
    if (!o[key].is_number()) {
      issues_.push_back(prefix + key + ": expected a number");
      return;
    }
    dst = o[key].get<double>();
  }

  void count(const char* key, std::size_t& dst, const nlohmann::json* obj = nullptr,
             const std::string& prefix = "") {
    const auto& o = obj ? *obj : j_;
    if (!o.contains(key)) return;
    if (!o[key].is_number_integer() || o[key].get<std::int64_t>() < 0) {
      issues_.push_back(prefix + key + ": expected a non-negative integer");
      return;
    }
    dst = o[key].get<std::size_t>();
  }

 private:
  const nlohmann::json& j_;
  std::vector<std::string>& issues_;
};

}  // namespace detail

/// Parses a config object. Relative model paths are resolved against
/// `base_dir`. Malformed keys are reported together in one ConfigError.
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  std::vector<std::string> issues;
  RunConfig cfg;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  detail::ConfigReader rd(j, issues);

  if (j.contains("model")) {
    if (j["model"].is_string()) {
      std::filesystem::path p = j["model"].get<std::string>();
      cfg.model_path = (p.is_relative() ? base_dir / p : p).lexically_normal().string();
    } else {
      issues.emplace_back("model: expected a path string");
    }
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (!g.is_object()) {
      issues.emplace_back("grid: expected an object");
    } else {
      rd.number("h1", cfg.h1, &g, "grid.");
      rd.number("h2", cfg.h2, &g, "grid.");
      rd.number("x_min", cfg.x_min, &g, "grid.");
      rd.number("x_max", cfg.x_max, &g, "grid.");
      if (g.contains("p_mode")) {
        try {
          cfg.p_mode = parse_pmode(g["p_mode"].get<std::string>());
        } catch (const std::exception&) {
          issues.emplace_back("grid.p_mode: expected one of auto, single, reduced, full");
        }
      }
    }
  }
  if (j.contains("controls")) {
    const auto& c = j["controls"];
    if (!c.is_object()) {
      issues.emplace_back("controls: expected an object");
    } else {
      rd.number("u_min", cfg.u_min, &c, "controls.");
      rd.number("u_max", cfg.u_max, &c, "controls.");
      rd.count("points", cfg.u_points, &c, "controls.");
    }
  }
  rd.number("x0", cfg.x0);
  if (j.contains("p0")) {
    if (!j["p0"].is_array()) {
      issues.emplace_back("p0: expected an array of numbers");
    } else {
      for (const auto& v : j["p0"]) {
        if (!v.is_number()) {
          issues.emplace_back("p0: expected an array of numbers");
          cfg.p0.clear();
          break;
        }
        cfg.p0.push_back(v.get<double>());
      }
    }
  }
  if (j.contains("lambda")) {
    double v = 0.0;
    rd.number("lambda", v);
    if (j["lambda"].is_number()) cfg.lambda = v;
  }
  if (j.contains("lambda_bracket")) {
    const auto& b = j["lambda_bracket"];
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number()) {
      issues.emplace_back("lambda_bracket: expected [lo, hi]");
    } else {
      cfg.lambda_lo = b[0].get<double>();
      cfg.lambda_hi = b[1].get<double>();
    }
  }
  rd.number("lambda_tol", cfg.lambda_tol);
  if (j.contains("lambda_search")) {
    const auto m = j["lambda_search"].is_string()
                       ? parse_lambda_method(j["lambda_search"].get<std::string>())
                       : std::nullopt;
    if (m) cfg.lambda_method = *m;
    else issues.emplace_back("lambda_search: expected golden or nelder-mead");
  }
  if (j.contains("kappa")) {
    double v = 0.0;
    rd.number("kappa", v);
    if (j["kappa"].is_number()) cfg.kappa = v;
  }
  if (j.contains("kappa_range")) {
    const auto& r = j["kappa_range"];
    if (!r.is_object()) {
      issues.emplace_back("kappa_range: expected {start, stop, step}");
    } else {
      KappaRange kr;
      rd.number("start", kr.start, &r, "kappa_range.");
      rd.number("stop", kr.stop, &r, "kappa_range.");
      rd.number("step", kr.step, &r, "kappa_range.");
      cfg.kappa_range = kr;
    }
  }
  rd.count("paths", cfg.paths);
  if (j.contains("seed")) {
    if (j["seed"].is_number_unsigned()) cfg.seed = j["seed"].get<std::uint64_t>();
    else issues.emplace_back("seed: expected a non-negative integer");
  }
  if (j.contains("out")) {
    if (j["out"].is_string()) cfg.out = j["out"].get<std::string>();
    else issues.emplace_back("out: expected a path string");
  }
  if (j.contains("force")) {
    if (j["force"].is_boolean()) cfg.force = j["force"].get<bool>();
    else issues.emplace_back("force: expected true or false");
  }

  if (!issues.empty()) {
    std::string msg = "invalid config:";
    for (const auto& s : issues) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

/// Canonical JSON echo of the effective configuration (hashed into summaries).
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = c.model_path;
  j["grid"] = {{"h1", c.h1}, {"h2", c.h2}, {"x_min", c.x_min}, {"x_max", c.x_max},
               {"p_mode", std::string(to_string(c.p_mode))}};
  j["controls"] = {{"u_min", c.u_min}, {"u_max", c.u_max}, {"points", c.u_points}};
  j["x0"] = c.x0;
  j["p0"] = c.p0;
  if (c.lambda) j["lambda"] = *c.lambda;
  j["lambda_bracket"] = {c.lambda_lo, c.lambda_hi};
  j["lambda_search"] = to_string(c.lambda_method);
  j["lambda_tol"] = c.lambda_tol;
  if (c.kappa) j["kappa"] = *c.kappa;
  if (c.kappa_range) {
    j["kappa_range"] = {{"start", c.kappa_range->start},
                        {"stop", c.kappa_range->stop},
                        {"step", c.kappa_range->step}};
  }
  j["paths"] = c.paths;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["force"] = c.force;
  return nlohmann::json::parse(j.dump());
}

inline std::string config_hash(const RunConfig& c) {
  const auto text = config_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

enum class Command { Check, Solve, Frontier, Simulate };

/// Every violated requirement for running `cmd`; `model` is null when it
/// could not be loaded (the load error is already in the list).
inline std::vector<std::string> validate_config(const RunConfig& c, Command cmd,
                                                const RegimeModel* model) {
  std::vector<std::string> issues;
  if (c.model_path.empty()) issues.emplace_back("no model file given (--model)");
  if (!(c.h1 > 0.0)) issues.emplace_back("grid h1 must be > 0");
  if (!(c.h2 > 0.0)) issues.emplace_back("grid h2 must be > 0");
  if (!(c.x_min < c.x_max)) issues.emplace_back("x_min must be < x_max");
  if (c.u_points == 0) issues.emplace_back("control grid needs at least one point");
  if (!(c.u_min <= c.u_max)) issues.emplace_back("u_min must be <= u_max");
  if (cmd != Command::Check && !(c.x_min <= c.x0 && c.x0 <= c.x_max)) {
    issues.emplace_back("x0 must lie in [x_min, x_max]");
  }
  if (model && !c.p0.empty()) {
    double total = 0.0;
    bool negative = false;
    for (double v : c.p0) {
      total += v;
      negative = negative || v < 0.0;
    }
    if (c.p0.size() != model->m) {
      issues.push_back("p0 has " + std::to_string(c.p0.size()) + " entries, the model has " +
                       std::to_string(model->m) + " regimes");
    } else if (negative || std::abs(total - 1.0) > 1e-9) {
      issues.emplace_back("p0 must be a probability vector");
    }
  }
  if (model && c.h1 > 0.0 && c.h2 > 0.0 && c.x_min < c.x_max && cmd != Command::Simulate) {
    try {
      GridSpec::make(*model, c.h1, c.h2, c.x_min, c.x_max, c.p_mode);
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      const std::string head = "invalid grid:\n  - ";
      if (msg.starts_with(head)) msg = msg.substr(head.size());
      std::size_t pos = 0;
      while ((pos = msg.find("\n  - ")) != std::string::npos) {
        issues.push_back("grid: " + msg.substr(0, pos));
        msg = msg.substr(pos + 5);
      }
      issues.push_back("grid: " + msg);
    }
  }
  const bool needs_search = cmd == Command::Frontier || (cmd == Command::Solve && !c.lambda);
  if (needs_search) {
    if (!std::isfinite(c.lambda_lo) || !std::isfinite(c.lambda_hi) || !(c.lambda_lo < c.lambda_hi)) {
      issues.emplace_back("lambda bracket must be finite with lo < hi");
    }
    if (!(c.lambda_tol > 0.0)) issues.emplace_back("lambda_tol must be > 0");
  }
  auto interior = [&](double kappa) {
    if (!(c.x_min < kappa && kappa < c.x_max)) {
      issues.push_back("kappa " + io::format_double(kappa) + " is not inside (x_min, x_max)");
    }
  };
  if (cmd == Command::Solve || cmd == Command::Simulate) {
    if (!c.kappa && cmd == Command::Solve) issues.emplace_back("solve needs --kappa");
    if (c.kappa && cmd == Command::Solve) interior(*c.kappa);
  }
  if (cmd == Command::Frontier) {
    if (!c.kappa_range) {
      issues.emplace_back("frontier needs --kappa-range");
    } else if (!(c.kappa_range->step > 0.0) || c.kappa_range->stop < c.kappa_range->start) {
      issues.emplace_back("kappa range needs step > 0 and stop >= start");
    } else {
      for (double k : kappa_values(*c.kappa_range)) interior(k);
    }
  }
  if ((cmd == Command::Frontier || cmd == Command::Simulate) && c.paths < 2) {
    issues.emplace_back("paths must be >= 2");
  }
  if (cmd == Command::Simulate) {
    if (c.policy_path.empty()) {
      issues.emplace_back("simulate needs --policy (a policy.csv written by solve)");
    } else if (!std::filesystem::exists(c.policy_path)) {
      issues.push_back("policy file not found: " + c.policy_path);
    }
  }
  return issues;
}

}  // namespace mvhmm
