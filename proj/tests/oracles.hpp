#pragma once

// Test-only reference computations. Nothing here calls into the library's
// filter, chain or solver code.

#include <mvhmm/model.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace mvhmm::oracle {

inline Eigen::MatrixXd generator(const RegimeModel& model) {
  Eigen::MatrixXd Q(model.m, model.m);
  for (std::size_t i = 0; i < model.m; ++i)
    for (std::size_t j = 0; j < model.m; ++j) Q(i, j) = model.Q[i * model.m + j];
  return Q;
}

/// exp(Q' t) p0: the regime distribution with no observations.
inline std::vector<double> forward_distribution(const RegimeModel& model,
                                                const std::vector<double>& p0, double t) {
  const Eigen::MatrixXd P = (generator(model) * t).exp();
  Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(p0.data(), p0.size());
  const Eigen::VectorXd out = P.transpose() * p;
  return {out.data(), out.data() + out.size()};
}

inline double gaussian_likelihood(double dy, double mean, double var) {
  return std::exp(-0.5 * (dy - mean) * (dy - mean) / var) / std::sqrt(2 * std::numbers::pi * var);
}

/// Exact posterior of the discrete-time chain with transition matrix
/// exp(Q h2) and Gaussian observation increments dy_n ~ N(g(a_n) h2, sigma0^2 h2),
/// a_n being the regime at the start of step n. Returns posteriors at n = 0..N.
inline std::vector<std::vector<double>> bayes_forward(const RegimeModel& model,
                                                      const std::vector<double>& p0,
                                                      const std::vector<double>& dy, double h2) {
  const Eigen::MatrixXd P = (generator(model) * h2).exp();
  const auto m = model.m;
  std::vector<std::vector<double>> out{p0};
  std::vector<double> pi = p0;
  for (double inc : dy) {
    std::vector<double> next(m, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double w = pi[i] * gaussian_likelihood(inc, model.g[i] * h2,
                                                   model.sigma0 * model.sigma0 * h2);
      for (std::size_t j = 0; j < m; ++j) next[j] += w * P(i, j);
    }
    for (double v : next) total += v;
    for (auto& v : next) v /= total;
    pi = next;
    out.push_back(pi);
  }
  return out;
}

/// Same posterior at the final time by summing over every regime path
/// (m^(N+1) paths). Only for short sequences.
inline std::vector<double> bayes_enumerate(const RegimeModel& model, const std::vector<double>& p0,
                                           const std::vector<double>& dy, double h2) {
  const Eigen::MatrixXd P = (generator(model) * h2).exp();
  const auto m = model.m;
  const std::size_t N = dy.size();
  std::size_t paths = 1;
  for (std::size_t k = 0; k <= N; ++k) paths *= m;
  std::vector<double> post(m, 0.0);
  std::vector<std::size_t> states(N + 1);
  for (std::size_t code = 0; code < paths; ++code) {
    std::size_t rest = code;
    for (auto& s : states) {
      s = rest % m;
      rest /= m;
    }
    double w = p0[states[0]];
    for (std::size_t n = 0; n < N; ++n) {
      w *= gaussian_likelihood(dy[n], model.g[states[n]] * h2, model.sigma0 * model.sigma0 * h2);
      w *= P(states[n], states[n + 1]);
    }
    post[states[N]] += w;
  }
  double total = 0.0;
  for (double v : post) total += v;
  for (auto& v : post) v /= total;
  return post;
}

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

}  // namespace mvhmm::oracle
