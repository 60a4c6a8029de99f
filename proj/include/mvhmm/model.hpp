#pragma once

// Regime-switching flow model and the filter-averaged coefficients of the
// completely observable (x, p) system.
//
//   dx = [r(t,a) x + B(t,a) u] dt + u' sigma_bar(t,a) dw1
//   dy = g(a) dt + sigma0 dw2
//
// with a(t) a hidden Markov chain on {0..m-1} with generator Q. Regimes are
// zero-based in code; the JSON schema and CSV columns use the same order.

#include <mvhmm/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mvhmm {

/// Coefficient affine in time: c0 + c1 * t.
struct Affine {
  double c0 = 0.0;
  double c1 = 0.0;

  constexpr double operator()(double t) const noexcept { return c0 + c1 * t; }
  friend bool operator==(const Affine&, const Affine&) = default;
};

struct RegimeModel {
  std::size_t m = 1;  ///< number of regimes
  std::size_t d = 1;  ///< number of risky nodes (= Brownian dimension)

  std::vector<double> Q;  ///< m*m generator, row-major
  std::vector<double> g;  ///< observation drift per regime
  double sigma0 = 1.0;

  std::vector<Affine> r;          ///< riskless rate, [i]
  std::vector<Affine> b;          ///< risky drift, [l*m + i]
  std::vector<Affine> sigma_bar;  ///< volatility, [(l*d + j)*m + i]

  double s = 0.0;  ///< initial time
  double T = 1.0;  ///< horizon

  double q(std::size_t i, std::size_t j) const { return Q[i * m + j]; }
  double rate(double t, std::size_t i) const { return r[i](t); }
  double drift_rate(double t, std::size_t l, std::size_t i) const { return b[l * m + i](t); }
  double vol(double t, std::size_t l, std::size_t j, std::size_t i) const {
    return sigma_bar[(l * d + j) * m + i](t);
  }

  friend bool operator==(const RegimeModel&, const RegimeModel&) = default;
};

/// Returns one message per violated invariant; empty iff the model is usable.
inline std::vector<std::string> validate_model(const RegimeModel& model) {
  std::vector<std::string> issues;
  const auto m = model.m;
  const auto d = model.d;
  if (m < 1) issues.emplace_back("m must be >= 1");
  if (d < 1) issues.emplace_back("d must be >= 1");
  if (!(model.sigma0 > 0.0) || !std::isfinite(model.sigma0)) {
    issues.emplace_back("sigma0 must be finite and > 0");
  }
  if (!(model.s < model.T)) issues.emplace_back("horizon requires s < T");
  if (!issues.empty() && (m < 1 || d < 1)) return issues;

  auto check_len = [&](std::size_t got, std::size_t want, const char* name) {
    if (got != want) {
      issues.push_back(std::string(name) + " has length " + std::to_string(got) + ", expected " +
                       std::to_string(want));
      return false;
    }
    return true;
  };

  if (check_len(model.Q.size(), m * m, "Q")) {
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double qij = model.q(i, j);
        if (!std::isfinite(qij)) {
          issues.push_back("Q[" + std::to_string(i) + "][" + std::to_string(j) + "] is not finite");
        }
        if (i != j && qij < 0.0) {
          issues.push_back("Q[" + std::to_string(i) + "][" + std::to_string(j) +
                           "] is negative off the diagonal");
        }
        row += qij;
      }
      if (std::abs(row) > 1e-12) {
        issues.push_back("Q row " + std::to_string(i) + " sums to " + std::to_string(row) +
                         " instead of 0");
      }
    }
  }
  check_len(model.g.size(), m, "g");
  if (check_len(model.r.size(), m, "r")) {
    for (std::size_t i = 0; i < m; ++i) {
      // affine in t, so nonnegativity on [s,T] is decided at the endpoints
      if (model.r[i](model.s) < 0.0 || model.r[i](model.T) < 0.0) {
        issues.push_back("r(t," + std::to_string(i) + ") is negative on [s,T]");
      }
    }
  }
  check_len(model.b.size(), d * m, "b");
  check_len(model.sigma_bar.size(), d * d * m, "sigma_bar");
  return issues;
}

/// Posterior-weighted coefficients of the observable system at one (t, p).
struct FilteredCoefficients {
  double r_hat = 0.0;
  std::vector<double> B_hat;      ///< d entries: sum_i (b_l - r) p^i
  std::vector<double> sigma_hat;  ///< d*d, row-major over (l, j)
};

/// Exact weighted averages; p is used as given (no renormalization).
inline FilteredCoefficients filtered_coefficients(const RegimeModel& model, double t,
                                                  std::span<const double> p) {
  detail::require_size(p.size(), model.m, "posterior");
  const auto m = model.m;
  const auto d = model.d;
  FilteredCoefficients out;
  out.B_hat.assign(d, 0.0);
  out.sigma_hat.assign(d * d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double ri = model.rate(t, i);
    out.r_hat += ri * p[i];
    for (std::size_t l = 0; l < d; ++l) {
      out.B_hat[l] += (model.drift_rate(t, l, i) - ri) * p[i];
      for (std::size_t j = 0; j < d; ++j) {
        out.sigma_hat[l * d + j] += model.vol(t, l, j, i) * p[i];
      }
    }
  }
  return out;
}

/// b(x,p,u) = r_hat x + B_hat . u
inline double drift(const FilteredCoefficients& c, double x, std::span<const double> u) {
  detail::require_size(u.size(), c.B_hat.size(), "control");
  double out = c.r_hat * x;
  for (std::size_t l = 0; l < u.size(); ++l) out += c.B_hat[l] * u[l];
  return out;
}

inline double drift(const RegimeModel& model, double t, double x, std::span<const double> p,
                    std::span<const double> u) {
  return drift(filtered_coefficients(model, t, p), x, u);
}

struct Diffusion {
  std::vector<double> sigma_row;  ///< u' sigma_hat, length d
  double a = 0.0;                 ///< sigma sigma'
};

inline Diffusion diffusion(const FilteredCoefficients& c, std::span<const double> u) {
  const auto d = c.B_hat.size();
  detail::require_size(u.size(), d, "control");
  Diffusion out;
  out.sigma_row.assign(d, 0.0);
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t j = 0; j < d; ++j) out.sigma_row[j] += u[l] * c.sigma_hat[l * d + j];
  }
  for (double sj : out.sigma_row) out.a += sj * sj;
  return out;
}

inline Diffusion diffusion(const RegimeModel& model, double t, double /*x*/,
                           std::span<const double> p, std::span<const double> u) {
  return diffusion(filtered_coefficients(model, t, p), u);
}

/// Scalar variance rate only; avoids the row allocation in hot loops.
inline double variance_rate(const FilteredCoefficients& c, std::span<const double> u) {
  const auto d = c.B_hat.size();
  double a = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double sj = 0.0;
    for (std::size_t l = 0; l < d; ++l) sj += u[l] * c.sigma_hat[l * d + j];
    a += sj * sj;
  }
  return a;
}

/// Finite admissible control set: the Cartesian product of one sorted value
/// list per risky node, enumerated lexicographically (first node slowest).
/// Index 0 is therefore the lexicographically smallest control.
class ControlSet {
 public:
  ControlSet() = default;

  explicit ControlSet(std::vector<std::vector<double>> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw ConfigError("control set needs at least one axis");
    count_ = 1;
    for (auto& axis : axes_) {
      if (axis.empty()) throw ConfigError("control set axis is empty");
      std::sort(axis.begin(), axis.end());
      axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
      count_ *= axis.size();
    }
    values_.resize(count_ * axes_.size());
    for (std::size_t k = 0; k < count_; ++k) {
      std::size_t rest = k;
      for (std::size_t l = axes_.size(); l-- > 0;) {
        values_[k * axes_.size() + l] = axes_[l][rest % axes_[l].size()];
        rest /= axes_[l].size();
      }
    }
  }

  ControlSet(std::initializer_list<std::vector<double>> axes)
      : ControlSet(std::vector<std::vector<double>>(axes)) {}

  /// Uniform grid of `points` values on [lo, hi] for each of `width` nodes.
  static ControlSet uniform(std::size_t width, double lo, double hi, std::size_t points) {
    if (points == 0) throw ConfigError("control grid needs at least one point");
    if (!(lo <= hi)) throw ConfigError("control interval requires u_min <= u_max");
    std::vector<double> axis(points);
    for (std::size_t k = 0; k < points; ++k) {
      axis[k] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) /
                                            static_cast<double>(points - 1);
    }
    return ControlSet(std::vector<std::vector<double>>(width, axis));
  }

  std::size_t size() const noexcept { return count_; }
  std::size_t width() const noexcept { return axes_.size(); }
  bool empty() const noexcept { return count_ == 0; }

  std::span<const double> operator[](std::size_t k) const {
    return {values_.data() + k * axes_.size(), axes_.size()};
  }

  const std::vector<std::vector<double>>& axes() const noexcept { return axes_; }

  bool contains(std::span<const double> u) const {
    if (u.size() != width()) return false;
    for (std::size_t l = 0; l < u.size(); ++l) {
      if (!std::binary_search(axes_[l].begin(), axes_[l].end(), u[l])) return false;
    }
    return true;
  }

 private:
  std::vector<std::vector<double>> axes_;
  std::vector<double> values_;
  std::size_t count_ = 0;
};

/// Multiplier, target mean and admissible controls for one Lagrangian solve.
struct SolverConfig {
  double lambda = 0.0;
  double kappa = 0.0;
  ControlSet controls;
  bool force = false;  ///< run even if the CFL scan fails
};

}  // namespace mvhmm
