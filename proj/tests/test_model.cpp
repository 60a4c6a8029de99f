#include "fixtures.hpp"

#include <mvhmm/grid.hpp>
#include <mvhmm/model.hpp>
#include <mvhmm/model_io.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace mvhmm;
using mvhmm::testing::two_regime;

namespace {

// Direct evaluation of the example's coefficients: r = t + i, b = 1 + t - i,
// sigma = i, regimes i = 1, 2.
double oracle_r_hat(double t, double p1, double p2) { return (t + 1) * p1 + (t + 2) * p2; }
double oracle_B_hat(double t, double p1, double p2) {
  return ((1 + t - 1) - (t + 1)) * p1 + ((1 + t - 2) - (t + 2)) * p2;
}
double oracle_sigma_hat(double p1, double p2) { return 1 * p1 + 2 * p2; }

}  // namespace

TEST(ValidateModel, ExampleGeneratorIsValid) { EXPECT_TRUE(validate_model(two_regime()).empty()); }

TEST(ValidateModel, ZeroGeneratorIsValid) {
  auto m = two_regime();
  m.Q = {0.0, 0.0, 0.0, 0.0};
  EXPECT_TRUE(validate_model(m).empty());
}

TEST(ValidateModel, RowSumViolationReported) {
  auto m = two_regime();
  m.Q = {-1.0, 0.5, 0.5, -0.5};
  const auto issues = validate_model(m);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("row 0"), std::string::npos);
}

TEST(ValidateModel, ReportsEveryViolation) {
  auto m = two_regime();
  m.Q = {-1.0, 1.0, -0.5, 0.5};  // negative off-diagonal in row 1
  m.sigma0 = 0.0;
  m.r[0] = {-1.0, 0.0};
  EXPECT_GE(validate_model(m).size(), 3u);
}

TEST(ValidateModel, EmptyHorizonRejected) {
  auto m = two_regime();
  m.T = m.s;
  const auto issues = validate_model(m);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("s < T"), std::string::npos);
  EXPECT_THROW(GridSpec::make(two_regime(), 0.25, 0.6, 0.0, 6.0), ConfigError);
}

TEST(FilteredCoefficients, SingleRegimeIsExact) {
  const auto m = mvhmm::testing::single_regime(0.03, 0.08, 0.2);
  const std::vector<double> p{1.0};
  const auto c = filtered_coefficients(m, 0.7, p);
  EXPECT_EQ(c.r_hat, 0.03);
  EXPECT_EQ(c.B_hat[0], 0.08 - 0.03);
  EXPECT_EQ(c.sigma_hat[0], 0.2);
}

TEST(FilteredCoefficients, ExampleAtUniformPosterior) {
  const std::vector<double> p{0.5, 0.5};
  const auto c = filtered_coefficients(two_regime(), 0.0, p);
  EXPECT_DOUBLE_EQ(c.r_hat, 1.5);
  EXPECT_DOUBLE_EQ(c.r_hat, oracle_r_hat(0.0, 0.5, 0.5));
  EXPECT_DOUBLE_EQ(c.B_hat[0], oracle_B_hat(0.0, 0.5, 0.5));
  EXPECT_DOUBLE_EQ(c.sigma_hat[0], 1.5);
}

TEST(FilteredCoefficients, ExampleVertices) {
  const std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0};
  EXPECT_EQ(filtered_coefficients(two_regime(), 0.0, e1).r_hat, 1.0);
  EXPECT_EQ(filtered_coefficients(two_regime(), 0.0, e2).r_hat, 2.0);
}

TEST(FilteredCoefficients, DimensionMismatchThrows) {
  const std::vector<double> p{1.0};
  EXPECT_THROW(filtered_coefficients(two_regime(), 0.0, p), DimensionError);
}

TEST(FilteredCoefficients, LinearInPosterior) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  const auto m = two_regime();
  for (int trial = 0; trial < 1000; ++trial) {
    const double t = std::abs(U(gen)) / 4.0;
    const std::vector<double> p{U(gen), U(gen)}, q{U(gen), U(gen)};
    const double a = U(gen), b = U(gen);
    const std::vector<double> mix{a * p[0] + b * q[0], a * p[1] + b * q[1]};
    const auto fp = filtered_coefficients(m, t, p);
    const auto fq = filtered_coefficients(m, t, q);
    const auto fm = filtered_coefficients(m, t, mix);
    EXPECT_NEAR(fm.r_hat, a * fp.r_hat + b * fq.r_hat, 1e-12);
    EXPECT_NEAR(fm.B_hat[0], a * fp.B_hat[0] + b * fq.B_hat[0], 1e-12);
    EXPECT_NEAR(fm.sigma_hat[0], a * fp.sigma_hat[0] + b * fq.sigma_hat[0], 1e-12);
  }
}

TEST(Drift, ControlOffGivesRateTimesState) {
  const std::vector<double> p{0.3, 0.7}, u{0.0};
  const double x = 2.5;
  EXPECT_DOUBLE_EQ(drift(two_regime(), 0.2, x, p, u), oracle_r_hat(0.2, 0.3, 0.7) * x);
}

TEST(Drift, ExampleNode) {
  // B_hat = -(p1 + 3 p2) = -2 at the uniform posterior, so b = 1.5 - 2 * 0.5.
  const std::vector<double> p{0.5, 0.5}, u{0.5};
  const double expected = oracle_r_hat(0, .5, .5) * 1.0 + oracle_B_hat(0, .5, .5) * 0.5;
  EXPECT_DOUBLE_EQ(expected, 0.5);
  EXPECT_DOUBLE_EQ(drift(two_regime(), 0.0, 1.0, p, u), 0.5);
}

TEST(Drift, ZeroStateZeroControl) {
  const std::vector<double> p{0.5, 0.5}, u{0.0};
  EXPECT_EQ(drift(two_regime(), 0.3, 0.0, p, u), 0.0);
}

TEST(Diffusion, ZeroControl) {
  const std::vector<double> p{0.5, 0.5}, u{0.0};
  const auto d = diffusion(two_regime(), 0.1, 1.0, p, u);
  EXPECT_EQ(d.sigma_row[0], 0.0);
  EXPECT_EQ(d.a, 0.0);
}

TEST(Diffusion, ExampleUnitControl) {
  const std::vector<double> p{0.5, 0.5}, u{1.0};
  const auto d = diffusion(two_regime(), 0.37, 1.0, p, u);
  EXPECT_DOUBLE_EQ(d.sigma_row[0], oracle_sigma_hat(0.5, 0.5));
  EXPECT_DOUBLE_EQ(d.a, 2.25);
}

TEST(Diffusion, LinearInControlAndNonnegative) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> U(-2.0, 2.0), P(0.0, 1.0);
  auto m = two_regime();
  // two risky nodes with a full volatility matrix
  m.d = 2;
  m.b = {{0, 1}, {-1, 1}, {0.5, 0}, {0.2, 0.1}};
  m.sigma_bar = {{1, 0}, {2, 0}, {0.3, 0}, {-0.1, 0.2}, {0.0, 0.4}, {0.5, 0}, {0.7, 0}, {1.1, 0}};
  ASSERT_TRUE(validate_model(m).empty());
  for (int trial = 0; trial < 1000; ++trial) {
    const double p1 = P(gen);
    const std::vector<double> p{p1, 1 - p1}, u{U(gen), U(gen)}, u2{2 * u[0], 2 * u[1]};
    const double t = P(gen) / 2, x = U(gen);
    const auto d1 = diffusion(m, t, x, p, u);
    const auto d2 = diffusion(m, t, x, p, u2);
    EXPECT_GE(d1.a, 0.0);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(d2.sigma_row[j], 2 * d1.sigma_row[j], 1e-12);
    // drift is affine in u: b(u) - b(0) is linear
    const std::vector<double> zero{0, 0};
    const double b0 = drift(m, t, x, p, zero);
    EXPECT_NEAR(drift(m, t, x, p, u2) - b0, 2 * (drift(m, t, x, p, u) - b0), 1e-12);
  }
}

TEST(ControlSet, UniformGridAndLexicographicOrder) {
  const auto cs = ControlSet::uniform(1, -2.0, 2.0, 41);
  EXPECT_EQ(cs.size(), 41u);
  EXPECT_EQ(cs[0][0], -2.0);
  EXPECT_EQ(cs[40][0], 2.0);
  EXPECT_DOUBLE_EQ(cs[20][0], 0.0);

  const ControlSet two({{1.0, 0.0}, {5.0, -5.0}});
  ASSERT_EQ(two.size(), 4u);
  EXPECT_EQ(two[0][0], 0.0);
  EXPECT_EQ(two[0][1], -5.0);
  EXPECT_EQ(two[1][1], 5.0);
  EXPECT_EQ(two[2][0], 1.0);
  EXPECT_TRUE(two.contains(std::vector<double>{1.0, -5.0}));
  EXPECT_FALSE(two.contains(std::vector<double>{0.5, -5.0}));
}

TEST(ModelJson, RoundTripsExample) {
  const auto m = two_regime();
  EXPECT_EQ(model_from_json(model_to_json(m)), m);
}

TEST(ModelJson, AcceptsFlatGeneratorAndBareNumbers) {
  const auto j = nlohmann::json::parse(R"({
    "m": 2, "d": 1, "Q": [-0.5, 0.5, 0.5, -0.5], "g": [2, 3], "sigma0": 1,
    "r": [{"c0": 1, "c1": 1}, {"c0": 2, "c1": 1}],
    "b": [[{"c0": 0, "c1": 1}, {"c0": -1, "c1": 1}]],
    "sigma_bar": [[[1, 2]]],
    "horizon": {"s": 0, "T": 0.5}
  })");
  EXPECT_EQ(model_from_json(j), two_regime());
}

TEST(ModelJson, ErrorsNamePathAndReason) {
  auto j = model_to_json(two_regime());
  j["b"][0][1]["c0"] = "oops";
  try {
    model_from_json(j);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.path(), "$.b[0][1].c0");
    EXPECT_NE(std::string(e.what()).find("expected a number"), std::string::npos);
  }

  auto k = model_to_json(two_regime());
  k.erase("sigma0");
  try {
    model_from_json(k);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.path(), "$.sigma0");
  }

  auto q = model_to_json(two_regime());
  q["Q"][1] = nlohmann::json::array({0.5});
  EXPECT_THROW(model_from_json(q), ParseError);
}

TEST(ModelJson, MissingFileNamesPath) {
  try {
    load_model("/nonexistent/model.json");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.path(), "/nonexistent/model.json");
  }
}
