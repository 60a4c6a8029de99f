#pragma once

#include <mvhmm/model.hpp>

#include <vector>

namespace mvhmm::testing {

/// Two regimes, one risky node: r = t + i, b = 1 + t - i, sigma = i for
/// i in {1, 2}; g = (2, 3); Q symmetric with rate 0.5; horizon [0, 0.5].
inline RegimeModel two_regime(double T = 0.5) {
  RegimeModel m;
  m.m = 2;
  m.d = 1;
  m.Q = {-0.5, 0.5, 0.5, -0.5};
  m.g = {2.0, 3.0};
  m.sigma0 = 1.0;
  m.r = {{1.0, 1.0}, {2.0, 1.0}};
  m.b = {{0.0, 1.0}, {-1.0, 1.0}};
  m.sigma_bar = {{1.0, 0.0}, {2.0, 0.0}};
  m.s = 0.0;
  m.T = T;
  return m;
}

/// Single regime with constant coefficients (geometric-Brownian risky node).
inline RegimeModel single_regime(double r, double b, double sigma, double T = 1.0) {
  RegimeModel m;
  m.m = 1;
  m.d = 1;
  m.Q = {0.0};
  m.g = {0.0};
  m.sigma0 = 1.0;
  m.r = {{r, 0.0}};
  m.b = {{b, 0.0}};
  m.sigma_bar = {{sigma, 0.0}};
  m.s = 0.0;
  m.T = T;
  return m;
}

}  // namespace mvhmm::testing
