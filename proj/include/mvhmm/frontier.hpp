#pragma once

// Multiplier search and efficient frontier.
//
// For a target mean kappa the dual function
//   d(lambda) = V_lambda(s, x0, p0) = min_u E[(x(T) + lambda - kappa)^2] - lambda^2
// is concave (a minimum of functions affine in lambda), and its maximizer
// enforces E x(T) = kappa. The search is derivative-free.

#include <mvhmm/error.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/simulate.hpp>
#include <mvhmm/solver.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mvhmm {

/// Everything fixed across multipliers and targets.
struct Problem {
  RegimeModel model;
  GridSpec grid;
  ControlSet controls;
  double x0 = 1.0;
  std::vector<double> p0;
};

enum class LambdaMethod { GoldenSection, NelderMead };

struct LambdaSearchOptions {
  double lo = -10.0;
  double hi = 10.0;
  double tol = 1e-4;
  LambdaMethod method = LambdaMethod::GoldenSection;
  std::size_t max_evaluations = 200;
};

struct FrontierOptions {
  LambdaSearchOptions search{};
  std::size_t mc_paths = 10000;
  std::uint64_t seed = 1;
  SimOptions sim{};
};

struct FrontierPoint {
  double kappa = 0.0;
  double lambda_star = 0.0;
  double dual_value = 0.0;      ///< d(lambda*) = V(s, x0, p0)
  double variance = 0.0;        ///< Monte Carlo variance of x(T) at lambda*
  double std_dev = 0.0;         ///< sqrt(max(variance, 0))
  double chain_mean = 0.0;      ///< E x(T) on the approximating chain
  double chain_variance = 0.0;  ///< Var x(T) on the approximating chain
  McReport mc;
  std::size_t evaluations = 0;
  bool widened = false;
  std::string error;  ///< empty on success

  bool ok() const noexcept { return error.empty(); }
};

/// d(lambda) at the initial node.
inline double dual_value(const Problem& pb, double kappa, double lambda) {
  SolverConfig cfg{lambda, kappa, pb.controls, true};
  const auto res = solve(pb.model, pb.grid, cfg, {.skip_cfl = true});
  return res.value_at(pb.x0, pb.p0);
}

struct LambdaSearchResult {
  double lambda = 0.0;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool widened = false;
};

namespace detail {

struct Maximum {
  double arg = 0.0;
  double value = -std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
};

inline Maximum golden_max(const std::function<double(double)>& f, double lo, double hi,
                          double tol, std::size_t budget) {
  constexpr double kInvPhi = 0.6180339887498949;
  Maximum best;
  auto eval = [&](double x) {
    const double v = f(x);
    ++best.evaluations;
    if (v > best.value || (v == best.value && x < best.arg)) {
      best.value = v;
      best.arg = x;
    }
    return v;
  };
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = eval(c), fd = eval(d);
  while (b - a > tol && best.evaluations < budget) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = eval(d);
    }
  }
  // the end points decide whether the maximizer sits on the bracket edge
  eval(lo);
  eval(hi);
  return best;
}

/// One-dimensional Nelder-Mead (reflection/expansion/contraction/shrink on a
/// two-vertex simplex), maximizing f, restricted to [lo, hi].
inline Maximum nelder_mead_max(const std::function<double(double)>& f, double lo, double hi,
                               double tol, std::size_t budget) {
  Maximum best;
  auto eval = [&](double x) {
    x = std::clamp(x, lo, hi);
    const double v = f(x);
    ++best.evaluations;
    if (v > best.value || (v == best.value && x < best.arg)) {
      best.value = v;
      best.arg = x;
    }
    return std::pair{x, v};
  };
  auto p0 = eval(0.5 * (lo + hi));
  auto p1 = eval(0.5 * (lo + hi) + 0.1 * (hi - lo));
  while (std::abs(p1.first - p0.first) > tol && best.evaluations < budget) {
    if (p1.second > p0.second) std::swap(p0, p1);  // p0 is the better vertex
    const double xr = p0.first + (p0.first - p1.first);
    const auto r = eval(xr);
    if (r.second > p0.second) {
      const auto e = eval(p0.first + 2.0 * (p0.first - p1.first));
      p1 = e.second > r.second ? e : r;
    } else {
      const auto c = eval(p0.first + 0.5 * (p1.first - p0.first));
      if (c.second > p1.second) {
        p1 = c;
      } else {
        p1 = eval(p0.first + 0.5 * (p1.first - p0.first));
      }
    }
  }
  eval(lo);
  eval(hi);
  return best;
}

}  // namespace detail

/// Maximize d over the bracket; widen once (to three times the width, same
/// centre) if the maximizer lands on an edge, then give up with BracketError.
inline LambdaSearchResult search_lambda(const std::function<double(double)>& dual,
                                        LambdaSearchOptions opts) {
  if (!std::isfinite(opts.lo) || !std::isfinite(opts.hi) || !(opts.lo < opts.hi)) {
    throw ConfigError("lambda bracket must be finite with lo < hi");
  }
  LambdaSearchResult out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto best = opts.method == LambdaMethod::GoldenSection
                          ? detail::golden_max(dual, opts.lo, opts.hi, opts.tol,
                                               opts.max_evaluations)
                          : detail::nelder_mead_max(dual, opts.lo, opts.hi, opts.tol,
                                                    opts.max_evaluations);
    out.evaluations += best.evaluations;
    out.lambda = best.arg;
    out.value = best.value;
    const double edge = 2.0 * opts.tol;
    const bool at_edge = best.arg - opts.lo <= edge || opts.hi - best.arg <= edge;
    if (!at_edge) return out;
    if (attempt == 0) {
      const double width = opts.hi - opts.lo;
      opts.lo -= width;
      opts.hi += width;
      out.widened = true;
      continue;
    }
    throw BracketError("dual has no interior maximizer on [" + std::to_string(opts.lo) + ", " +
                       std::to_string(opts.hi) + "]: best lambda " + std::to_string(best.arg) +
                       " is on the edge (target mean likely unattainable)");
  }
  return out;
}

/// Finds lambda*, re-solves there, and evaluates the extracted policy both on
/// the chain and by closed-loop Monte Carlo.
inline FrontierPoint optimize_lambda(const Problem& pb, double kappa,
                                     const FrontierOptions& opts = {}) {
  require_interior_target(pb.grid, kappa);
  FrontierPoint pt;
  pt.kappa = kappa;
  const auto search = search_lambda(
      [&](double lambda) { return dual_value(pb, kappa, lambda); }, opts.search);
  pt.lambda_star = search.lambda;
  pt.evaluations = search.evaluations;
  pt.widened = search.widened;

  SolverConfig cfg{pt.lambda_star, kappa, pb.controls, true};
  const auto res = solve(pb.model, pb.grid, cfg, {.skip_cfl = true});
  pt.dual_value = res.value_at(pb.x0, pb.p0);
  const auto moments = policy_moments(pb.model, res.policy, pb.x0, pb.p0);
  pt.chain_mean = moments.mean;
  pt.chain_variance = moments.variance;
  pt.mc = mc_estimate(pb.model, res.policy, pt.lambda_star, kappa, pb.x0, pb.p0, opts.mc_paths,
                      opts.seed, opts.sim);
  pt.variance = pt.mc.variance;
  pt.std_dev = std::sqrt(std::max(pt.variance, 0.0));
  return pt;
}

/// One point per target, computed independently; failures are recorded in
/// FrontierPoint::error and the sweep continues.
inline std::vector<FrontierPoint> efficient_frontier(const Problem& pb,
                                                     const std::vector<double>& kappas,
                                                     const FrontierOptions& opts = {}) {
  std::vector<FrontierPoint> out;
  out.reserve(kappas.size());
  for (double kappa : kappas) {
    try {
      out.push_back(optimize_lambda(pb, kappa, opts));
    } catch (const std::exception& e) {
      FrontierPoint pt;
      pt.kappa = kappa;
      pt.error = e.what();
      pt.variance = pt.std_dev = std::numeric_limits<double>::quiet_NaN();
      out.push_back(std::move(pt));
    }
  }
  return out;
}

struct DualScan {
  std::vector<double> lambdas;
  std::vector<double> values;
  double max_second_difference = -std::numeric_limits<double>::infinity();
  double scale = 1.0;  ///< max(1, max |d|)

  bool concave(double rel_tol = 1e-6) const { return max_second_difference <= rel_tol * scale; }
};

/// d on `points` equally spaced multipliers in [center - half_width, center + half_width].
inline DualScan scan_dual(const Problem& pb, double kappa, double center, double half_width,
                          std::size_t points = 21) {
  DualScan scan;
  for (std::size_t k = 0; k < points; ++k) {
    const double lambda = center - half_width +
                          2.0 * half_width * static_cast<double>(k) /
                              static_cast<double>(points - 1);
    scan.lambdas.push_back(lambda);
    scan.values.push_back(dual_value(pb, kappa, lambda));
    scan.scale = std::max(scan.scale, std::abs(scan.values.back()));
  }
  for (std::size_t k = 1; k + 1 < points; ++k) {
    scan.max_second_difference =
        std::max(scan.max_second_difference,
                 scan.values[k + 1] - 2.0 * scan.values[k] + scan.values[k - 1]);
  }
  return scan;
}

/// CSV with the plotting axes first.
inline std::string frontier_csv(const std::vector<FrontierPoint>& points) {
  io::CsvBuilder csv;
  csv.header({"kappa", "std_dev", "lambda_star", "dual_value", "mc_mean", "mc_variance",
              "chain_mean", "chain_variance", "residual", "status"});
  for (const auto& pt : points) {
    csv.cell(pt.kappa);
    if (pt.ok()) {
      csv.cell(pt.std_dev).cell(pt.lambda_star).cell(pt.dual_value).cell(pt.mc.mean)
          .cell(pt.mc.variance).cell(pt.chain_mean).cell(pt.chain_variance).cell(pt.mc.residual)
          .cell("ok");
    } else {
      for (int k = 0; k < 8; ++k) csv.blank();
      csv.cell("error");
    }
    csv.end_row();
  }
  return csv.str();
}

}  // namespace mvhmm
