#pragma once

// Value/policy table on disk.
//
// Columns: n, t, x, p_1..p_m, V, u_1..u_d. One row per (n, x-node, p-node),
// n-major, then x, then the posterior node. The last layer (n = N) has blank
// controls. The reader rebuilds the grid and control set from the rows.

#include <mvhmm/error.hpp>
#include <mvhmm/grid.hpp>
#include <mvhmm/io.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/solver.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace mvhmm {

inline std::string policy_csv(const ValueGrid& values, const PolicyGrid& policy) {
  const auto& grid = values.grid;
  const auto m = grid.m();
  const auto d = policy.controls.width();
  io::CsvBuilder csv;
  csv.cell("n").cell("t").cell("x");
  for (std::size_t i = 1; i <= m; ++i) csv.cell("p_" + std::to_string(i));
  csv.cell("V");
  for (std::size_t l = 1; l <= d; ++l) csv.cell("u_" + std::to_string(l));
  csv.end_row();
  const auto N = grid.n_steps();
  for (std::size_t n = 0; n <= N; ++n) {
    const auto t = grid.time(n);
    for (std::size_t k = 0; k < grid.nx(); ++k) {
      for (std::size_t pi = 0; pi < grid.np(); ++pi) {
        csv.cell(n).cell(t).cell(grid.x(k));
        for (double v : grid.p(pi)) csv.cell(v);
        csv.cell(values.at(n, k, pi));
        if (n < N) {
          for (double v : policy.control(n, k, pi)) csv.cell(v);
        } else {
          for (std::size_t l = 0; l < d; ++l) csv.blank();
        }
        csv.end_row();
      }
    }
  }
  return csv.str();
}

namespace detail {

inline double parse_cell(std::string_view text, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError(where + ": cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Rebuilds the PolicyGrid written by policy_csv for `model`. Throws
/// ConfigError naming the file and line on malformed input.
inline PolicyGrid read_policy_csv(const std::string& path, const RegimeModel& model) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open policy file");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty policy file");
  const auto header = detail::split_commas(line);
  std::size_t m = 0, d = 0;
  for (auto h : header) {
    if (h.starts_with("p_")) ++m;
    if (h.starts_with("u_")) ++d;
  }
  if (header.size() != 4 + m + d || header[0] != "n" || header[1] != "t" || header[2] != "x" ||
      header[3 + m] != "V") {
    throw ConfigError(path + ": unexpected header '" + line + "'");
  }
  if (m != model.m || d != model.d) {
    throw ConfigError(path + ": policy has m = " + std::to_string(m) + ", d = " +
                      std::to_string(d) + " but the model has m = " + std::to_string(model.m) +
                      ", d = " + std::to_string(model.d));
  }

  struct Row {
    std::size_t n;
    double t, x;
    std::vector<double> u;
  };
  std::vector<Row> rows;
  std::vector<std::vector<double>> axes(d);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    const auto where = path + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw ConfigError(where + ": wrong number of columns");
    Row row;
    row.n = static_cast<std::size_t>(detail::parse_cell(cells[0], where));
    row.t = detail::parse_cell(cells[1], where);
    row.x = detail::parse_cell(cells[2], where);
    if (!cells[4 + m].empty()) {
      for (std::size_t l = 0; l < d; ++l) {
        row.u.push_back(detail::parse_cell(cells[4 + m + l], where));
        axes[l].push_back(row.u.back());
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": no data rows");

  const std::size_t N = rows.back().n;
  if (N == 0) throw ConfigError(path + ": policy has no time steps");
  const double s = rows.front().t;
  const double T = rows.back().t;
  const double x_min = rows.front().x;
  double x_max = x_min;
  std::size_t per_layer = 0;
  for (const auto& r : rows) {
    if (r.n != 0) break;
    x_max = std::max(x_max, r.x);
    ++per_layer;
  }
  if (rows.size() != per_layer * (N + 1)) throw ConfigError(path + ": ragged layers");
  std::size_t nx = 1;
  for (std::size_t i = 1; i < per_layer; ++i) nx += rows[i].x != rows[i - 1].x ? 1 : 0;
  const std::size_t np = per_layer / nx;
  if (nx < 2 || np * nx != per_layer) throw ConfigError(path + ": cannot infer the x-grid");
  if (std::abs(s - model.s) > 1e-12 || std::abs(T - model.T) > 1e-9) {
    throw ConfigError(path + ": policy horizon does not match the model's");
  }

  const double h1 = (x_max - x_min) / static_cast<double>(nx - 1);
  const double h2 = (T - s) / static_cast<double>(N);
  PMode mode = PMode::Full;
  if (m == 1) mode = PMode::Single;
  else if (m == 2 && np == static_cast<std::size_t>(std::round(1.0 / h1)) + 1) mode = PMode::Reduced;
  const auto grid = GridSpec::make(model, h1, h2, x_min, x_max, mode);
  if (grid.np() != np || grid.nx() != nx || grid.n_steps() != N) {
    throw ConfigError(path + ": rows do not form a complete grid");
  }

  for (auto& axis : axes) {
    std::sort(axis.begin(), axis.end());
    axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
  }
  PolicyGrid policy;
  policy.grid = grid;
  policy.controls = ControlSet(axes);
  policy.choice.resize(N * grid.layer_size());
  const auto& cs = policy.controls.axes();
  for (std::size_t i = 0; i < N * per_layer; ++i) {
    const auto& r = rows[i];
    if (r.u.size() != d) {
      throw ConfigError(path + ": missing control at row " + std::to_string(i + 2));
    }
    std::size_t index = 0;
    for (std::size_t l = 0; l < d; ++l) {
      const auto pos = std::lower_bound(cs[l].begin(), cs[l].end(), r.u[l]) - cs[l].begin();
      index = index * cs[l].size() + static_cast<std::size_t>(pos);
    }
    policy.choice[i] = static_cast<std::uint32_t>(index);
  }
  return policy;
}

}  // namespace mvhmm
