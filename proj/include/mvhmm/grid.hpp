#pragma once

// Joint (x, p) lattice.
//
// x runs over x_min, x_min + h1, ..., x_max. The posterior is indexed in one
// of three ways:
//   Single  - m = 1, the only posterior is p = (1);
//   Reduced - m = 2, one axis for p^1 in {0, h1, ..., 1} with p^2 = 1 - p^1;
//   Full    - one axis per regime, each on {0, h1, ..., 1}; nodes off the
//             simplex exist and carry values but are not reported.

#include <mvhmm/error.hpp>
#include <mvhmm/model.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mvhmm {

enum class PMode { Auto, Single, Reduced, Full };

inline std::string_view to_string(PMode mode) {
  switch (mode) {
    case PMode::Auto: return "auto";
    case PMode::Single: return "single";
    case PMode::Reduced: return "reduced";
    case PMode::Full: return "full";
  }
  return "?";
}

inline PMode parse_pmode(std::string_view text) {
  if (text == "auto") return PMode::Auto;
  if (text == "single") return PMode::Single;
  if (text == "reduced") return PMode::Reduced;
  if (text == "full") return PMode::Full;
  throw ConfigError("unknown p-mode '" + std::string(text) + "'");
}

namespace detail {

/// Round q to an integer if it is one up to relative 1e-9; otherwise nullopt.
inline std::optional<std::size_t> as_count(double q) {
  if (!std::isfinite(q) || q < -0.5) return std::nullopt;
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-9 * std::max(1.0, std::abs(q))) return std::nullopt;
  return static_cast<std::size_t>(r);
}

}  // namespace detail

class GridSpec {
 public:
  GridSpec() = default;

  /// Throws ConfigError listing every violated invariant.
  static GridSpec make(const RegimeModel& model, double h1, double h2, double x_min,
                       double x_max, PMode mode = PMode::Auto) {
    std::vector<std::string> issues;
    if (!(h1 > 0.0)) issues.emplace_back("h1 must be > 0");
    if (!(h2 > 0.0)) issues.emplace_back("h2 must be > 0");
    if (!(x_min < x_max)) issues.emplace_back("x_min must be < x_max");

    if (mode == PMode::Auto) mode = model.m == 1 ? PMode::Single
                                  : model.m == 2 ? PMode::Reduced
                                                 : PMode::Full;
    if (mode == PMode::Single && model.m != 1) issues.emplace_back("p-mode single needs m = 1");
    if (mode == PMode::Reduced && model.m != 2) issues.emplace_back("p-mode reduced needs m = 2");

    GridSpec g;
    g.h1_ = h1;
    g.h2_ = h2;
    g.x_min_ = x_min;
    g.x_max_ = x_max;
    g.s_ = model.s;
    g.T_ = model.T;
    g.m_ = model.m;
    g.mode_ = mode;
    if (issues.empty()) {
      const auto steps = detail::as_count((model.T - model.s) / h2);
      if (!steps) issues.emplace_back("(T - s) / h2 is not an integer");
      else g.n_steps_ = *steps;
      const auto cells = detail::as_count((x_max - x_min) / h1);
      if (!cells) issues.emplace_back("(x_max - x_min) / h1 is not an integer");
      else g.nx_ = *cells + 1;
      const auto p_cells = detail::as_count(1.0 / h1);
      if (mode != PMode::Single && !p_cells) issues.emplace_back("1 / h1 is not an integer");
      else if (p_cells) g.p_points_ = *p_cells + 1;
    }
    if (!issues.empty()) {
      std::string msg = "invalid grid:";
      for (const auto& s : issues) msg += "\n  - " + s;
      throw ConfigError(msg);
    }

    switch (mode) {
      case PMode::Single:
        g.p_points_ = 1;
        g.p_dims_ = 0;
        g.np_ = 1;
        break;
      case PMode::Reduced:
        g.p_dims_ = 1;
        g.np_ = g.p_points_;
        break;
      default:
        g.p_dims_ = model.m;
        g.np_ = 1;
        for (std::size_t i = 0; i < model.m; ++i) g.np_ *= g.p_points_;
        break;
    }
    g.stride_.assign(g.p_dims_, 1);
    for (std::size_t c = g.p_dims_; c-- > 1;) g.stride_[c - 1] = g.stride_[c] * g.p_points_;
    return g;
  }

  double h1() const noexcept { return h1_; }
  double h2() const noexcept { return h2_; }
  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  double s() const noexcept { return s_; }
  double T() const noexcept { return T_; }
  std::size_t m() const noexcept { return m_; }
  PMode mode() const noexcept { return mode_; }

  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t nx() const noexcept { return nx_; }
  std::size_t np() const noexcept { return np_; }
  /// Number of posterior coordinates that carry a grid axis (0, 1 or m).
  std::size_t p_dims() const noexcept { return p_dims_; }
  std::size_t p_points() const noexcept { return p_points_; }
  std::size_t layer_size() const noexcept { return nx_ * np_; }

  double time(std::size_t n) const noexcept { return s_ + static_cast<double>(n) * h2_; }
  double x(std::size_t k) const noexcept { return x_min_ + static_cast<double>(k) * h1_; }

  /// Axis coordinate `c` of posterior node `pi`.
  std::size_t p_coord(std::size_t pi, std::size_t c) const noexcept {
    return (pi / stride_[c]) % p_points_;
  }

  /// Full m-vector posterior at node `pi` (what the coefficients are evaluated at).
  std::vector<double> p(std::size_t pi) const {
    std::vector<double> out(m_);
    switch (mode_) {
      case PMode::Single: out[0] = 1.0; break;
      case PMode::Reduced:
        out[0] = static_cast<double>(pi) * h1_;
        out[1] = 1.0 - out[0];
        break;
      default:
        for (std::size_t c = 0; c < m_; ++c) out[c] = static_cast<double>(p_coord(pi, c)) * h1_;
        break;
    }
    return out;
  }

  /// Neighbour of `pi` one step up (dir = +1) or down (dir = -1) along axis
  /// `c`; nullopt if that leaves [0, 1].
  std::optional<std::size_t> p_neighbor(std::size_t pi, std::size_t c, int dir) const {
    const std::size_t k = p_coord(pi, c);
    if (dir > 0 && k + 1 >= p_points_) return std::nullopt;
    if (dir < 0 && k == 0) return std::nullopt;
    return dir > 0 ? pi + stride_[c] : pi - stride_[c];
  }

  /// True when the node's posterior lies on the probability simplex.
  bool on_simplex(std::size_t pi) const {
    if (mode_ != PMode::Full) return true;
    double total = 0.0;
    for (double v : p(pi)) total += v;
    return std::abs(total - 1.0) < 1e-9;
  }

  std::size_t nearest_x(double x) const noexcept {
    const double k = std::round((x - x_min_) / h1_);
    if (!(k > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(k), nx_ - 1);
  }

  std::size_t nearest_p(std::span<const double> p) const {
    detail::require_size(p.size(), m_, "posterior");
    auto axis_index = [&](double v) {
      const double k = std::round(v / h1_);
      if (!(k > 0.0)) return std::size_t{0};
      return std::min(static_cast<std::size_t>(k), p_points_ - 1);
    };
    switch (mode_) {
      case PMode::Single: return 0;
      case PMode::Reduced: return axis_index(p[0]);
      default: {
        std::size_t pi = 0;
        for (std::size_t c = 0; c < m_; ++c) pi += axis_index(p[c]) * stride_[c];
        return pi;
      }
    }
  }

  std::size_t index(std::size_t k, std::size_t pi) const noexcept { return k * np_ + pi; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  double h1_ = 0.0, h2_ = 0.0, x_min_ = 0.0, x_max_ = 0.0, s_ = 0.0, T_ = 0.0;
  std::size_t m_ = 1;
  PMode mode_ = PMode::Single;
  std::size_t n_steps_ = 0, nx_ = 0, np_ = 1, p_dims_ = 0, p_points_ = 1;
  std::vector<std::size_t> stride_;
};

/// Checks the target mean is strictly inside the x-range.
inline void require_interior_target(const GridSpec& grid, double kappa) {
  if (!(grid.x_min() < kappa && kappa < grid.x_max())) {
    throw ConfigError("kappa = " + std::to_string(kappa) + " is not inside (x_min, x_max) = (" +
                      std::to_string(grid.x_min()) + ", " + std::to_string(grid.x_max()) + ")");
  }
}

}  // namespace mvhmm
