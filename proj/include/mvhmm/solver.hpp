#pragma once

// Backward value iteration for the Lagrangian mean-variance problem
//
//   V(T, x, p) = (x + lambda - kappa)^2 - lambda^2
//   V_n(x, p)  = min_u [ stay V(x) + up V(x+h1) + down V(x-h1)
//                        + sum_i (up_i V(p^i+h1) + down_i V(p^i-h1) + diag_i V(p^i)) ]
//
// with V on the right evaluated at layer n+1. Outward x moves at the edges of
// the x-range are reflected into `stay`; posterior moves that would leave
// [0, 1] are folded into the diagonal.

#include <mvhmm/chain.hpp>
#include <mvhmm/error.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/parallel.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mvhmm {

/// FNV-1a over the model's numeric content; used to tag solver output.
inline std::uint64_t model_fingerprint(const RegimeModel& model) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_doubles = [&](const auto& xs) {
    for (const auto& x : xs) mix(&x, sizeof x);
  };
  const std::uint64_t dims[2] = {model.m, model.d};
  mix(dims, sizeof dims);
  mix_doubles(model.Q);
  mix_doubles(model.g);
  mix(&model.sigma0, sizeof model.sigma0);
  mix_doubles(model.r);
  mix_doubles(model.b);
  mix_doubles(model.sigma_bar);
  mix(&model.s, sizeof model.s);
  mix(&model.T, sizeof model.T);
  return h;
}

struct ValueGrid {
  GridSpec grid;
  double lambda = 0.0;
  double kappa = 0.0;
  std::uint64_t model_hash = 0;
  std::vector<double> data;  ///< (N+1) layers of nx*np values

  std::span<const double> layer(std::size_t n) const {
    return {data.data() + n * grid.layer_size(), grid.layer_size()};
  }
  double at(std::size_t n, std::size_t k, std::size_t pi) const {
    return data[n * grid.layer_size() + grid.index(k, pi)];
  }
};

struct PolicyGrid {
  GridSpec grid;
  ControlSet controls;
  double lambda = 0.0;
  double kappa = 0.0;
  std::vector<std::uint32_t> choice;  ///< N layers of control indices

  std::uint32_t index(std::size_t n, std::size_t k, std::size_t pi) const {
    return choice[n * grid.layer_size() + grid.index(k, pi)];
  }
  std::span<const double> control(std::size_t n, std::size_t k, std::size_t pi) const {
    return controls[index(n, k, pi)];
  }
};

/// Terminal layer (x + lambda - kappa)^2 - lambda^2.
inline std::vector<double> terminal_values(const GridSpec& grid, double lambda, double kappa) {
  std::vector<double> layer(grid.layer_size());
  for (std::size_t k = 0; k < grid.nx(); ++k) {
    const double shifted = grid.x(k) + lambda - kappa;
    const double v = shifted * shifted - lambda * lambda;
    for (std::size_t pi = 0; pi < grid.np(); ++pi) layer[grid.index(k, pi)] = v;
  }
  return layer;
}

namespace detail {

/// Per-time-layer kernel data, shared by value iteration and policy evaluation.
class LayerKernel {
 public:
  LayerKernel(const RegimeModel& model, const GridSpec& grid, const ControlSet& controls,
              std::size_t n)
      : grid_(grid), nodes_(grid.np()) {
    const double t = grid.time(n);
    const auto nu = controls.size();
    for (std::size_t pi = 0; pi < grid.np(); ++pi) {
      auto& node = nodes_[pi];
      const auto p = grid.p(pi);
      node.coef = filtered_coefficients(model, t, p);
      node.Bu.resize(nu);
      node.a.resize(nu);
      for (std::size_t ui = 0; ui < nu; ++ui) {
        const auto u = controls[ui];
        double bu = 0.0;
        for (std::size_t l = 0; l < u.size(); ++l) bu += node.coef.B_hat[l] * u[l];
        node.Bu[ui] = bu;
        node.a[ui] = variance_rate(node.coef, u);
      }
      const auto terms = p_transition_terms(model, grid, t, p);
      for (std::size_t c = 0; c < grid.p_dims(); ++c) {
        const auto& tm = terms[indexed_coordinate(grid, c)];
        Axis ax;
        ax.up = tm.up;
        ax.down = tm.down;
        ax.diag = tm.diag;
        const auto plus = grid.p_neighbor(pi, c, +1);
        const auto minus = grid.p_neighbor(pi, c, -1);
        ax.plus = plus ? *plus : pi;
        ax.minus = minus ? *minus : pi;
        node.axes.push_back(ax);
      }
    }
  }

  /// Posterior part of the update at (k, pi); independent of the control.
  double p_part(std::span<const double> next, std::size_t k, std::size_t pi) const {
    double acc = 0.0;
    for (const auto& ax : nodes_[pi].axes) {
      acc += ax.up * next[grid_.index(k, ax.plus)] + ax.down * next[grid_.index(k, ax.minus)] +
             ax.diag * next[grid_.index(k, pi)];
    }
    return acc;
  }

  /// x-transition at (k, pi) for control ui, before boundary reflection.
  XTransition x_part(std::size_t k, std::size_t pi, std::size_t ui) const {
    const auto& node = nodes_[pi];
    const double b = node.coef.r_hat * grid_.x(k) + node.Bu[ui];
    return x_transition(b, node.a[ui], grid_.h1(), grid_.h2());
  }

  /// x-expectation of `next` at (k, pi) under transition tr, reflecting at the
  /// x-range edges. Sets `reflected` when outward mass was folded back.
  double x_expect(std::span<const double> next, std::size_t k, std::size_t pi, XTransition tr,
                  bool& reflected) const {
    const double here = next[grid_.index(k, pi)];
    double acc = tr.stay * here;
    reflected = false;
    if (k + 1 < grid_.nx()) {
      acc += tr.up * next[grid_.index(k + 1, pi)];
    } else {
      acc += tr.up * here;
      reflected = reflected || tr.up > 0.0;
    }
    if (k > 0) {
      acc += tr.down * next[grid_.index(k - 1, pi)];
    } else {
      acc += tr.down * here;
      reflected = reflected || tr.down > 0.0;
    }
    return acc;
  }

 private:
  struct Axis {
    double up = 0.0, down = 0.0, diag = 0.0;
    std::size_t plus = 0, minus = 0;
  };
  struct Node {
    FilteredCoefficients coef;
    std::vector<double> Bu;
    std::vector<double> a;
    std::vector<Axis> axes;
  };
  const GridSpec& grid_;
  std::vector<Node> nodes_;
};

inline std::string node_label(const GridSpec& grid, std::size_t n, std::size_t k,
                              std::size_t pi) {
  std::string s = "n=" + std::to_string(n) + " x=" + std::to_string(grid.x(k)) + " p=(";
  const auto p = grid.p(pi);
  for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "," : "") + std::to_string(p[i]);
  return s + ")";
}

}  // namespace detail

struct LayerResult {
  std::vector<double> values;
  std::vector<std::uint32_t> choice;
  std::size_t boundary_hits = 0;  ///< nodes whose chosen control sent mass across an x-edge
};

/// One backward step from layer n+1 to layer n. Ties go to the smallest control.
inline LayerResult backward_step(const RegimeModel& model, const GridSpec& grid,
                                 const SolverConfig& cfg, std::span<const double> next,
                                 std::size_t n) {
  detail::require_size(next.size(), grid.layer_size(), "value layer");
  if (cfg.controls.empty()) throw ConfigError("control set is empty");
  detail::require_size(cfg.controls.width(), model.d, "control width");

  const detail::LayerKernel kernel(model, grid, cfg.controls, n);
  LayerResult out;
  out.values.resize(grid.layer_size());
  out.choice.resize(grid.layer_size());
  std::vector<std::size_t> hits(grid.nx(), 0);

  parallel_for(grid.nx(), [&](std::size_t k) {
    for (std::size_t pi = 0; pi < grid.np(); ++pi) {
      const double pp = kernel.p_part(next, k, pi);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t best_ui = 0;
      bool best_reflected = false;
      for (std::size_t ui = 0; ui < cfg.controls.size(); ++ui) {
        bool reflected = false;
        const double val = kernel.x_expect(next, k, pi, kernel.x_part(k, pi, ui), reflected) + pp;
        if (std::isnan(val)) {
          throw NumericalError("backward_step: NaN at " + detail::node_label(grid, n, k, pi) +
                               " control index " + std::to_string(ui));
        }
        if (val < best) {
          best = val;
          best_ui = static_cast<std::uint32_t>(ui);
          best_reflected = reflected;
        }
      }
      if (!std::isfinite(best)) {
        throw NumericalError("backward_step: non-finite value at " +
                             detail::node_label(grid, n, k, pi));
      }
      out.values[grid.index(k, pi)] = best;
      out.choice[grid.index(k, pi)] = best_ui;
      if (best_reflected) ++hits[k];
    }
  });
  for (auto h : hits) out.boundary_hits += h;
  return out;
}

/// Multilinear interpolation of one layer at (x, p); exact at grid nodes.
/// Coordinates outside the grid are clamped to it.
inline double interpolate_layer(const GridSpec& grid, std::span<const double> layer, double x,
                                std::span<const double> p) {
  detail::require_size(p.size(), grid.m(), "posterior");
  struct Bracket {
    std::size_t lo = 0, stride = 0;
    double w = 0.0;
    bool flat = true;
  };
  auto bracket = [](double offset, double h, std::size_t points, std::size_t stride) {
    Bracket b;
    b.stride = stride;
    if (points < 2) return b;
    double q = offset / h;
    q = std::clamp(q, 0.0, static_cast<double>(points - 1));
    auto lo = static_cast<std::size_t>(std::floor(q));
    if (lo >= points - 1) lo = points - 2;
    b.lo = lo;
    b.w = q - static_cast<double>(lo);
    b.flat = false;
    return b;
  };

  std::vector<Bracket> dims;
  dims.push_back(bracket(x - grid.x_min(), grid.h1(), grid.nx(), grid.np()));
  std::vector<std::size_t> p_stride(grid.p_dims(), 1);
  for (std::size_t c = grid.p_dims(); c-- > 1;) p_stride[c - 1] = p_stride[c] * grid.p_points();
  for (std::size_t c = 0; c < grid.p_dims(); ++c) {
    dims.push_back(bracket(p[indexed_coordinate(grid, c)], grid.h1(), grid.p_points(),
                           p_stride[c]));
  }

  double acc = 0.0;
  const std::size_t corners = std::size_t{1} << dims.size();
  for (std::size_t mask = 0; mask < corners; ++mask) {
    double weight = 1.0;
    std::size_t offset = 0;
    bool skip = false;
    for (std::size_t dim = 0; dim < dims.size(); ++dim) {
      const auto& b = dims[dim];
      const bool high = (mask >> dim) & 1u;
      if (b.flat) {
        if (high) skip = true;
        continue;
      }
      weight *= high ? b.w : 1.0 - b.w;
      offset += (b.lo + (high ? 1 : 0)) * b.stride;
    }
    if (skip || weight == 0.0) continue;
    acc += weight * layer[offset];
  }
  return acc;
}

struct SolveDiagnostics {
  std::size_t boundary_hits = 0;
  double min_value = std::numeric_limits<double>::infinity();
  std::size_t bound_violations = 0;  ///< nodes with V < -lambda^2 - 1e-12
  CflReport cfl;
  bool cfl_checked = false;
};

struct SolveResult {
  ValueGrid values;
  PolicyGrid policy;
  SolveDiagnostics diagnostics;

  double value_at(double x, std::span<const double> p, std::size_t n = 0) const {
    return interpolate_layer(values.grid, values.layer(n), x, p);
  }
};

struct SolveOptions {
  /// Skip the CFL scan (the caller has already checked this grid/control pair).
  bool skip_cfl = false;
};

/// Full backward sweep n = N-1 .. 0. Refuses to run on a failing CFL scan
/// unless cfg.force is set.
inline SolveResult solve(const RegimeModel& model, const GridSpec& grid, const SolverConfig& cfg,
                         SolveOptions opts = {}) {
  if (auto issues = validate_model(model); !issues.empty()) {
    std::string msg = "invalid model:";
    for (const auto& s : issues) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
  if (cfg.controls.empty()) throw ConfigError("control set is empty");
  detail::require_size(cfg.controls.width(), model.d, "control width");

  SolveResult res;
  if (!opts.skip_cfl) {
    res.diagnostics.cfl = check_cfl(model, grid, cfg.controls);
    res.diagnostics.cfl_checked = true;
    if (!res.diagnostics.cfl.pass && !cfg.force) {
      throw ConfigError("CFL check failed: max coefficient " +
                        std::to_string(res.diagnostics.cfl.max_coefficient) + " > 1 at " +
                        std::to_string(res.diagnostics.cfl.violation_count) +
                        " node/control pairs (use force to override)");
    }
  }

  const auto N = grid.n_steps();
  const auto L = grid.layer_size();
  auto& vg = res.values;
  vg.grid = grid;
  vg.lambda = cfg.lambda;
  vg.kappa = cfg.kappa;
  vg.model_hash = model_fingerprint(model);
  vg.data.resize((N + 1) * L);
  auto& pg = res.policy;
  pg.grid = grid;
  pg.controls = cfg.controls;
  pg.lambda = cfg.lambda;
  pg.kappa = cfg.kappa;
  pg.choice.resize(N * L);

  const auto terminal = terminal_values(grid, cfg.lambda, cfg.kappa);
  std::copy(terminal.begin(), terminal.end(), vg.data.begin() + static_cast<std::ptrdiff_t>(N * L));

  auto& diag = res.diagnostics;
  const double floor = -cfg.lambda * cfg.lambda - 1e-12;
  auto track = [&](std::span<const double> layer) {
    for (double v : layer) {
      diag.min_value = std::min(diag.min_value, v);
      if (v < floor) ++diag.bound_violations;
    }
  };
  track(terminal);

  for (std::size_t n = N; n-- > 0;) {
    auto step = backward_step(model, grid, cfg, vg.layer(n + 1), n);
    std::copy(step.values.begin(), step.values.end(),
              vg.data.begin() + static_cast<std::ptrdiff_t>(n * L));
    std::copy(step.choice.begin(), step.choice.end(),
              pg.choice.begin() + static_cast<std::ptrdiff_t>(n * L));
    diag.boundary_hits += step.boundary_hits;
    track(step.values);
  }
  return res;
}

/// Chain-exact first and second moments of x(T) under a fixed policy.
struct PolicyMoments {
  double mean = 0.0;
  double second_moment = 0.0;
  double variance = 0.0;
};

inline PolicyMoments policy_moments(const RegimeModel& model, const PolicyGrid& policy,
                                    double x0, std::span<const double> p0) {
  const auto& grid = policy.grid;
  const auto L = grid.layer_size();
  std::vector<double> first(L), second(L);
  for (std::size_t k = 0; k < grid.nx(); ++k) {
    for (std::size_t pi = 0; pi < grid.np(); ++pi) {
      first[grid.index(k, pi)] = grid.x(k);
      second[grid.index(k, pi)] = grid.x(k) * grid.x(k);
    }
  }
  std::vector<double> first_n(L), second_n(L);
  for (std::size_t n = grid.n_steps(); n-- > 0;) {
    const detail::LayerKernel kernel(model, grid, policy.controls, n);
    parallel_for(grid.nx(), [&](std::size_t k) {
      for (std::size_t pi = 0; pi < grid.np(); ++pi) {
        const auto tr = kernel.x_part(k, pi, policy.index(n, k, pi));
        bool reflected = false;
        first_n[grid.index(k, pi)] =
            kernel.x_expect(first, k, pi, tr, reflected) + kernel.p_part(first, k, pi);
        second_n[grid.index(k, pi)] =
            kernel.x_expect(second, k, pi, tr, reflected) + kernel.p_part(second, k, pi);
      }
    });
    first.swap(first_n);
    second.swap(second_n);
  }
  PolicyMoments out;
  out.mean = interpolate_layer(grid, first, x0, p0);
  out.second_moment = interpolate_layer(grid, second, x0, p0);
  out.variance = out.second_moment - out.mean * out.mean;
  return out;
}

}  // namespace mvhmm
