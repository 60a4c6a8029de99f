#pragma once

// Wonham filter for the hidden regime, discretized in log-coordinates
// v^i = log p^i:
//
//   v^i <- v^i + h2 [ sum_j q_ji p^j / p^i - (g_i - abar)^2 / (2 sigma0^2) ]
//              + sqrt(h2) (g_i - abar) eps / sigma0
//
// The penalized variant replaces the bracketed drift by -M wherever
// p^i < exp(-M), which keeps the scheme finite as p^i -> 0.

#include <mvhmm/error.hpp>
#include <mvhmm/io.hpp>
#include <mvhmm/model.hpp>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvhmm {

struct FilterState {
  std::vector<double> p;  ///< posterior over regimes
  std::vector<double> v;  ///< log p
  double t = 0.0;

  static FilterState from_probabilities(std::vector<double> probs, double time = 0.0) {
    FilterState s;
    s.v.resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) s.v[i] = std::log(probs[i]);
    s.p = std::move(probs);
    s.t = time;
    return s;
  }

  /// Project onto the simplex by dividing by the total mass.
  void normalize() {
    double total = 0.0;
    for (double pi : p) total += pi;
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw NumericalError("filter: posterior mass " + std::to_string(total) +
                           " cannot be normalized at t=" + std::to_string(t));
    }
    const double shift = std::log(total);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] /= total;
      v[i] -= shift;
    }
  }
};

struct FilterConfig {
  double h2 = 1e-3;
  double M = 20.0;
  bool renormalize_each_step = true;

  void validate() const {
    if (!(h2 > 0.0)) throw ConfigError("filter: h2 must be > 0");
    if (!(M > 0.0)) throw ConfigError("filter: M must be > 0");
  }
};

/// Filtered observation drift sum_i g_i p^i.
inline double alpha_bar(const RegimeModel& model, std::span<const double> p) {
  detail::require_size(p.size(), model.m, "posterior");
  double out = 0.0;
  for (std::size_t i = 0; i < model.m; ++i) out += model.g[i] * p[i];
  return out;
}

/// sum_j q_ji p^j: the forward-equation drift of coordinate i.
inline double forward_drift(const RegimeModel& model, std::span<const double> p, std::size_t i) {
  double out = 0.0;
  for (std::size_t j = 0; j < model.m; ++j) out += model.q(j, i) * p[j];
  return out;
}

namespace detail {

inline FilterState wonham_step(const RegimeModel& model, const FilterConfig& cfg,
                               const FilterState& state, double eps, bool penalize) {
  const auto m = model.m;
  require_size(state.p.size(), m, "posterior");
  require_size(state.v.size(), m, "log-posterior");
  if (!std::isfinite(eps)) throw NumericalError("filter: non-finite noise increment");

  const double abar = alpha_bar(model, state.p);
  const double barrier = std::exp(-cfg.M);
  const double sqrt_h2 = std::sqrt(cfg.h2);
  const double inv_var = 1.0 / (model.sigma0 * model.sigma0);

  FilterState next;
  next.t = state.t + cfg.h2;
  next.p.resize(m);
  next.v.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double gap = model.g[i] - abar;
    double drift_i;
    if (penalize && state.p[i] < barrier) {
      drift_i = -cfg.M;
    } else {
      drift_i = forward_drift(model, state.p, i) / state.p[i] - 0.5 * inv_var * gap * gap;
    }
    next.v[i] = state.v[i] + cfg.h2 * drift_i + sqrt_h2 * (gap / model.sigma0) * eps;
    next.p[i] = std::exp(next.v[i]);
    if (std::isnan(next.v[i]) || !std::isfinite(next.p[i])) {
      throw NumericalError("filter: non-finite posterior in coordinate " + std::to_string(i) +
                           " at t=" + std::to_string(next.t));
    }
  }
  if (cfg.renormalize_each_step) next.normalize();
  return next;
}

}  // namespace detail

/// One step of the log-coordinate scheme. Requires every p^i > 0.
inline FilterState filter_step(const RegimeModel& model, const FilterConfig& cfg,
                               const FilterState& state, double eps) {
  for (std::size_t i = 0; i < state.p.size(); ++i) {
    if (!(state.p[i] > 0.0)) {
      throw std::domain_error("filter_step: p[" + std::to_string(i) +
                              "] is not positive; use filter_step_penalized");
    }
  }
  return detail::wonham_step(model, cfg, state, eps, false);
}

/// One step of the penalized scheme; accepts p^i >= 0.
inline FilterState filter_step_penalized(const RegimeModel& model, const FilterConfig& cfg,
                                         const FilterState& state, double eps) {
  return detail::wonham_step(model, cfg, state, eps, true);
}

/// Normalized innovation for one step: (dy - abar h2) / (sigma0 sqrt(h2)).
inline double innovation(const RegimeModel& model, double dy, std::span<const double> p,
                         double h2) {
  return (dy - alpha_bar(model, p) * h2) / (model.sigma0 * std::sqrt(h2));
}

/// eps_n for n = 0..N-1 from observations y_0..y_N and posteriors p_0..p_N
/// sampled on the same grid. Only p_0..p_{N-1} enter.
inline std::vector<double> innovation_increments(const RegimeModel& model,
                                                 std::span<const double> observations,
                                                 const std::vector<std::vector<double>>& p_path,
                                                 double h2) {
  if (observations.size() != p_path.size()) {
    throw DimensionError("innovation_increments: " + std::to_string(observations.size()) +
                         " observations vs " + std::to_string(p_path.size()) + " posteriors");
  }
  std::vector<double> eps;
  if (observations.size() < 2) return eps;
  eps.reserve(observations.size() - 1);
  for (std::size_t n = 0; n + 1 < observations.size(); ++n) {
    eps.push_back(innovation(model, observations[n + 1] - observations[n], p_path[n], h2));
  }
  return eps;
}

/// Drive the penalized filter with an observation path y_0..y_N. Returns N+1 states.
inline std::vector<FilterState> run_filter(const RegimeModel& model, const FilterConfig& cfg,
                                           FilterState initial,
                                           std::span<const double> observations) {
  std::vector<FilterState> path;
  path.reserve(observations.size());
  path.push_back(std::move(initial));
  for (std::size_t n = 0; n + 1 < observations.size(); ++n) {
    const auto& cur = path.back();
    const double eps = innovation(model, observations[n + 1] - observations[n], cur.p, cfg.h2);
    path.push_back(filter_step_penalized(model, cfg, cur, eps));
  }
  return path;
}

/// CSV with columns t, p_1..p_m, v_1..v_m.
inline std::string filter_trajectory_csv(const std::vector<FilterState>& path) {
  io::CsvBuilder csv;
  const std::size_t m = path.empty() ? 0 : path.front().p.size();
  csv.cell("t");
  for (std::size_t i = 1; i <= m; ++i) csv.cell("p_" + std::to_string(i));
  for (std::size_t i = 1; i <= m; ++i) csv.cell("v_" + std::to_string(i));
  csv.end_row();
  for (const auto& s : path) {
    csv.cell(s.t);
    for (double x : s.p) csv.cell(x);
    for (double x : s.v) csv.cell(x);
    csv.end_row();
  }
  return csv.str();
}

}  // namespace mvhmm
