#pragma once

// Locally consistent Markov-chain approximation of the (x, p) diffusion.
//
// x moves to x +- h1 or stays, with
//   up   = (a h2 + 2 h1 h2 b+) / (2 h1^2)
//   down = (a h2 + 2 h1 h2 b-) / (2 h1^2)
//   stay = 1 - |b| h2 / h1 - a h2 / h1^2
// where b is the filtered drift and a = sigma sigma'. Each posterior
// coordinate contributes operator weights (up_i, down_i, diag_i) that sum to
// zero; they are finite-difference weights, not probabilities.

#include <mvhmm/filter.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/model.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mvhmm {

struct XTransition {
  double stay = 1.0;
  double up = 0.0;
  double down = 0.0;
};

struct PTerms {
  double up = 0.0;
  double down = 0.0;
  double diag = 0.0;
};

/// x-transition triple from drift b and variance rate a.
inline XTransition x_transition(double b, double a, double h1, double h2) {
  const double b_plus = std::max(b, 0.0);
  const double b_minus = std::max(-b, 0.0);
  const double denom = 2.0 * h1 * h1;
  XTransition tr;
  tr.stay = 1.0 - std::abs(b) * h2 / h1 - a * h2 / (h1 * h1);
  tr.up = (a * h2 + 2.0 * h1 * h2 * b_plus) / denom;
  tr.down = (a * h2 + 2.0 * h1 * h2 * b_minus) / denom;
  return tr;
}

inline XTransition x_transition_probs(const RegimeModel& model, const GridSpec& grid, double t,
                                      double x, std::span<const double> p,
                                      std::span<const double> u) {
  const auto coef = filtered_coefficients(model, t, p);
  return x_transition(drift(coef, x, u), variance_rate(coef, u), grid.h1(), grid.h2());
}

/// Operator weights for every posterior coordinate i = 0..m-1 at posterior p.
inline std::vector<PTerms> p_transition_terms(const RegimeModel& model, const GridSpec& grid,
                                              double /*t*/, std::span<const double> p) {
  detail::require_size(p.size(), model.m, "posterior");
  const double h1 = grid.h1();
  const double h2 = grid.h2();
  const double abar = alpha_bar(model, p);
  const double inv_var = 1.0 / (model.sigma0 * model.sigma0);
  std::vector<PTerms> out(model.m);
  for (std::size_t i = 0; i < model.m; ++i) {
    const double spread = p[i] * (model.g[i] - abar);
    const double diff = inv_var * spread * spread * h2;
    const double f = forward_drift(model, p, i);
    const double f_plus = std::max(f, 0.0);
    const double f_minus = std::max(-f, 0.0);
    out[i].up = (diff + 2.0 * h1 * f_plus * h2) / (2.0 * h1 * h1);
    out[i].down = (diff + 2.0 * h1 * f_minus * h2) / (2.0 * h1 * h1);
    out[i].diag = -diff / (h1 * h1) - h2 * std::abs(f) / h1;
  }
  return out;
}

/// Coordinates of the full posterior that move on the grid. In reduced mode
/// only p^1 is an axis (p^2 follows it), so only its terms are used.
inline std::size_t indexed_coordinate(const GridSpec& grid, std::size_t c) {
  return grid.mode() == PMode::Reduced ? 0 : c;
}

struct CflViolation {
  std::size_t n = 0;
  double x = 0.0;
  std::vector<double> p;
  std::vector<double> u;
  double coefficient = 0.0;
};

struct CflReport {
  double max_coefficient = 0.0;  ///< max of |b| h2 / h1 + a h2 / h1^2
  bool pass = true;
  std::size_t violation_count = 0;
  std::vector<CflViolation> violations;  ///< first `max_listed` offenders
  double max_abs_diag = 0.0;             ///< max over nodes and coordinates of |diag_i|
  /// min over nodes and controls of stay + sum_i diag_i (the centre weight of
  /// the combined scheme); negative means the combined update is not monotone.
  double min_center_weight = 1.0;
  std::size_t nodes_scanned = 0;
};

/// Exhaustive scan over steps n = 0..N-1, every (x, p) node and every control.
inline CflReport check_cfl(const RegimeModel& model, const GridSpec& grid,
                           const ControlSet& controls, std::size_t max_listed = 50) {
  CflReport rep;
  const double h1 = grid.h1();
  const double h2 = grid.h2();
  for (std::size_t n = 0; n < grid.n_steps(); ++n) {
    const double t = grid.time(n);
    for (std::size_t pi = 0; pi < grid.np(); ++pi) {
      const auto p = grid.p(pi);
      const auto coef = filtered_coefficients(model, t, p);
      const auto terms = p_transition_terms(model, grid, t, p);
      double diag_sum = 0.0;
      for (std::size_t c = 0; c < grid.p_dims(); ++c) {
        const double dg = terms[indexed_coordinate(grid, c)].diag;
        diag_sum += dg;
        rep.max_abs_diag = std::max(rep.max_abs_diag, std::abs(dg));
      }
      for (std::size_t k = 0; k < grid.nx(); ++k) {
        const double x = grid.x(k);
        for (std::size_t ui = 0; ui < controls.size(); ++ui) {
          const auto u = controls[ui];
          const double b = drift(coef, x, u);
          const double a = variance_rate(coef, u);
          const double value = std::abs(b) * h2 / h1 + a * h2 / (h1 * h1);
          ++rep.nodes_scanned;
          rep.max_coefficient = std::max(rep.max_coefficient, value);
          rep.min_center_weight = std::min(rep.min_center_weight, 1.0 - value + diag_sum);
          if (value > 1.0) {
            ++rep.violation_count;
            if (rep.violations.size() < max_listed) {
              rep.violations.push_back({n, x, p, {u.begin(), u.end()}, value});
            }
          }
        }
      }
    }
  }
  rep.pass = rep.violation_count == 0;
  return rep;
}

struct ConsistencyStats {
  double mean = 0.0;             ///< h1 (up - down)
  double variance = 0.0;         ///< h1^2 (up + down) - mean^2
  double mean_target = 0.0;      ///< b h2
  double variance_target = 0.0;  ///< a h2
  double b = 0.0;
  double a = 0.0;
};

inline ConsistencyStats local_consistency_stats(const RegimeModel& model, const GridSpec& grid,
                                                double t, double x, std::span<const double> p,
                                                std::span<const double> u) {
  const auto coef = filtered_coefficients(model, t, p);
  ConsistencyStats st;
  st.b = drift(coef, x, u);
  st.a = variance_rate(coef, u);
  const auto tr = x_transition(st.b, st.a, grid.h1(), grid.h2());
  const double h1 = grid.h1();
  st.mean = h1 * (tr.up - tr.down);
  st.variance = h1 * h1 * (tr.up + tr.down) - st.mean * st.mean;
  st.mean_target = st.b * grid.h2();
  st.variance_target = st.a * grid.h2();
  return st;
}

}  // namespace mvhmm
