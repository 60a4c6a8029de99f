#pragma once

// Closed-loop Monte Carlo of the partially observed system.
//
// The true flow x evolves with the coefficients of the TRUE (hidden) regime;
// the controller only sees the Wonham posterior driven by the observation
// innovations, and applies the control stored at the nearest grid node.

#include <mvhmm/error.hpp>
#include <mvhmm/filter.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/parallel.hpp>
#include <mvhmm/random.hpp>
#include <mvhmm/solver.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace mvhmm {

/// Piecewise-constant regime path: states[k] holds on [jump_times[k], jump_times[k+1]).
struct RegimePath {
  std::vector<double> jump_times;
  std::vector<std::size_t> states;

  std::size_t state_at(double t) const {
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - jump_times.begin() - 1));
    return states[k];
  }
};

/// Draw an index from a probability vector (entries need not sum exactly to 1).
inline std::size_t sample_categorical(std::span<const double> probs, double uniform) {
  double total = 0.0;
  for (double w : probs) total += std::max(w, 0.0);
  double target = uniform * total;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    target -= std::max(probs[i], 0.0);
    if (target < 0.0) return i;
  }
  return probs.size() - 1;
}

/// Exact jump-time sampling of the hidden chain on [s, T] from `initial`.
inline RegimePath sample_ctmc_path(const RegimeModel& model, double s, double T,
                                   std::size_t initial, PhiloxStream& rng) {
  RegimePath path;
  path.jump_times.push_back(s);
  path.states.push_back(initial);
  std::size_t state = initial;
  double t = s;
  std::vector<double> exit(model.m);
  while (true) {
    const double rate = -model.q(state, state);
    if (!(rate > 0.0)) break;  // absorbing
    t += rng.exponential(rate);
    if (t >= T) break;
    for (std::size_t j = 0; j < model.m; ++j) exit[j] = j == state ? 0.0 : model.q(state, j);
    state = sample_categorical(exit, rng.uniform());
    path.jump_times.push_back(t);
    path.states.push_back(state);
  }
  return path;
}

/// Seeded variant: initial regime drawn from p0, then the path, all from the
/// Regime substream of (seed, path_index).
inline RegimePath sample_ctmc_path(const RegimeModel& model, double s, double T,
                                   std::span<const double> p0, std::uint64_t seed,
                                   std::uint64_t path_index = 0) {
  PhiloxStream rng(seed, path_index, Substream::Regime);
  const auto initial = sample_categorical(p0, rng.uniform());
  return sample_ctmc_path(model, s, T, initial, rng);
}

struct SimOptions {
  FilterConfig filter{};     ///< h2 is overwritten with the grid's h2
  bool record = true;        ///< keep the full trajectory
  bool rademacher = false;   ///< +-sqrt(h2) Brownian increments instead of Gaussian
};

struct SimPath {
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
  std::vector<double> times;
  std::vector<std::size_t> regime;
  std::vector<double> y;
  std::vector<std::vector<double>> p;
  std::vector<double> x;
  std::vector<std::vector<double>> u;  ///< controls applied on [t_n, t_n+1)
  double x_terminal = 0.0;
  bool clipped = false;
  std::size_t clip_count = 0;
};

/// One closed-loop path. Per step of size h2: draw dw1 (d-vector) and dw2,
/// read u from the policy at the nearest (x, p) node, advance x by
/// Euler-Maruyama with the true regime, advance y, and update the posterior
/// with the penalized filter driven by the innovation.
inline SimPath simulate_closed_loop(const RegimeModel& model, const PolicyGrid& policy, double x0,
                                    std::span<const double> p0, std::uint64_t seed,
                                    std::uint64_t path_index = 0, SimOptions opts = {}) {
  const auto& grid = policy.grid;
  detail::require_size(p0.size(), model.m, "initial posterior");
  detail::require_size(policy.controls.width(), model.d, "policy control width");
  if (!(grid.x_min() <= x0 && x0 <= grid.x_max())) {
    throw ConfigError("x0 = " + std::to_string(x0) + " is outside the x-range");
  }
  opts.filter.h2 = grid.h2();
  const double h2 = grid.h2();
  const double sqrt_h2 = std::sqrt(h2);
  const auto N = grid.n_steps();
  const auto d = model.d;

  const auto regimes = sample_ctmc_path(model, grid.s(), grid.T(), p0, seed, path_index);
  PhiloxStream rng(seed, path_index, Substream::Increments);

  SimPath out;
  out.seed = seed;
  out.path_index = path_index;
  auto filter = FilterState::from_probabilities({p0.begin(), p0.end()}, grid.s());
  double x = x0;
  double y = 0.0;
  if (opts.record) {
    out.times.reserve(N + 1);
    out.times.push_back(grid.s());
    out.regime.push_back(regimes.state_at(grid.s()));
    out.y.push_back(y);
    out.p.push_back(filter.p);
    out.x.push_back(x);
  }

  std::vector<double> dw1(d);
  for (std::size_t n = 0; n < N; ++n) {
    const double t = grid.time(n);
    const auto alpha = regimes.state_at(t);
    for (auto& w : dw1) w = opts.rademacher ? sqrt_h2 * rng.sign() : sqrt_h2 * rng.normal();
    const double dw2 = opts.rademacher ? sqrt_h2 * rng.sign() : sqrt_h2 * rng.normal();

    const auto u = policy.control(n, grid.nearest_x(x), grid.nearest_p(filter.p));

    const double r = model.rate(t, alpha);
    double dx = r * x * h2;
    for (std::size_t l = 0; l < d; ++l) {
      dx += (model.drift_rate(t, l, alpha) - r) * u[l] * h2;
      for (std::size_t j = 0; j < d; ++j) dx += u[l] * model.vol(t, l, j, alpha) * dw1[j];
    }
    x += dx;
    if (x < grid.x_min() || x > grid.x_max()) {
      x = std::clamp(x, grid.x_min(), grid.x_max());
      out.clipped = true;
      ++out.clip_count;
    }

    const double dy = model.g[alpha] * h2 + model.sigma0 * dw2;
    y += dy;
    const double eps = innovation(model, dy, filter.p, h2);
    filter = filter_step_penalized(model, opts.filter, filter, eps);

    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw NumericalError("simulate: non-finite state at step " + std::to_string(n) +
                           " of path " + std::to_string(path_index));
    }
    if (opts.record) {
      out.times.push_back(grid.time(n + 1));
      out.regime.push_back(regimes.state_at(grid.time(n + 1)));
      out.y.push_back(y);
      out.p.push_back(filter.p);
      out.x.push_back(x);
      out.u.emplace_back(u.begin(), u.end());
    }
  }
  out.x_terminal = x;
  return out;
}

namespace detail {

/// Fixed-order pairwise sum; same result for any worker count.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc;
  }
  const auto half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace detail

struct McReport {
  std::size_t n_paths = 0;
  double mean = 0.0;
  double variance = 0.0;            ///< unbiased sample variance of x(T)
  double mean_ci = 0.0;             ///< 95% half-width of the mean
  double variance_ci = 0.0;         ///< 95% half-width of the variance (asymptotic)
  double residual = 0.0;            ///< |mean - kappa|
  double objective = 0.0;           ///< mean of (x(T) + lambda - kappa)^2 - lambda^2
  double objective_se = 0.0;        ///< standard error of `objective`
  std::size_t clipped_paths = 0;
  double clipped_fraction = 0.0;
  std::vector<std::string> warnings;
};

inline McReport summarize_terminal(std::span<const double> xt, double lambda, double kappa) {
  McReport rep;
  const auto n = xt.size();
  if (n < 2) throw ConfigError("Monte Carlo needs at least 2 paths");
  const double nd = static_cast<double>(n);
  rep.n_paths = n;
  rep.mean = detail::pairwise_sum(xt) / nd;

  std::vector<double> sq(n), quart(n), obj(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = xt[i] - rep.mean;
    sq[i] = c * c;
    quart[i] = sq[i] * sq[i];
    const double shifted = xt[i] + lambda - kappa;
    obj[i] = shifted * shifted - lambda * lambda;
  }
  const double m2 = detail::pairwise_sum(sq) / nd;
  const double m4 = detail::pairwise_sum(quart) / nd;
  rep.variance = m2 * nd / (nd - 1.0);
  rep.mean_ci = 1.96 * std::sqrt(rep.variance / nd);
  rep.variance_ci = 1.96 * std::sqrt(std::max(m4 - m2 * m2, 0.0) / nd);
  rep.residual = std::abs(rep.mean - kappa);

  rep.objective = detail::pairwise_sum(obj) / nd;
  for (auto& o : obj) o = (o - rep.objective) * (o - rep.objective);
  rep.objective_se = std::sqrt(detail::pairwise_sum(obj) / (nd - 1.0) / nd);
  return rep;
}

/// n_paths independent closed-loop paths; path i uses streams (seed, i).
inline McReport mc_estimate(const RegimeModel& model, const PolicyGrid& policy, double lambda,
                            double kappa, double x0, std::span<const double> p0,
                            std::size_t n_paths, std::uint64_t seed, SimOptions opts = {}) {
  if (n_paths < 2) throw ConfigError("mc_estimate: n_paths must be >= 2");
  opts.record = false;
  std::vector<double> terminal(n_paths);
  std::vector<unsigned char> clipped(n_paths, 0);
  parallel_for(n_paths, [&](std::size_t i) {
    const auto path = simulate_closed_loop(model, policy, x0, p0, seed, i, opts);
    terminal[i] = path.x_terminal;
    clipped[i] = path.clipped ? 1 : 0;
  });
  auto rep = summarize_terminal(terminal, lambda, kappa);
  for (auto c : clipped) rep.clipped_paths += c;
  rep.clipped_fraction = static_cast<double>(rep.clipped_paths) / static_cast<double>(n_paths);
  if (rep.clipped_fraction > 0.01) {
    rep.warnings.push_back(std::to_string(rep.clipped_paths) + " of " + std::to_string(n_paths) +
                           " paths left the x-range and were clipped");
  }
  return rep;
}

/// Per-path CSV for one recorded path: t, regime, y, x, p_1..p_m, u_1..u_d.
inline std::string sim_path_csv(const SimPath& path) {
  io::CsvBuilder csv;
  const std::size_t m = path.p.empty() ? 0 : path.p.front().size();
  const std::size_t d = path.u.empty() ? 0 : path.u.front().size();
  csv.cell("t").cell("regime").cell("y").cell("x");
  for (std::size_t i = 1; i <= m; ++i) csv.cell("p_" + std::to_string(i));
  for (std::size_t l = 1; l <= d; ++l) csv.cell("u_" + std::to_string(l));
  csv.end_row();
  for (std::size_t n = 0; n < path.times.size(); ++n) {
    csv.cell(path.times[n]).cell(path.regime[n] + 1).cell(path.y[n]).cell(path.x[n]);
    for (double v : path.p[n]) csv.cell(v);
    if (n < path.u.size()) {
      for (double v : path.u[n]) csv.cell(v);
    } else {
      for (std::size_t l = 0; l < d; ++l) csv.blank();
    }
    csv.end_row();
  }
  return csv.str();
}

}  // namespace mvhmm
