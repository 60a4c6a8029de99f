#include "fixtures.hpp"

#include <mvhmm/chain.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <random>

using namespace mvhmm;
using mvhmm::testing::two_regime;

namespace {

GridSpec example_grid(double x_min = 0.0, double x_max = 6.0) {
  return GridSpec::make(two_regime(), 0.25, 0.001, x_min, x_max);
}

// Oracle for the x-probabilities written out from the scheme.
XTransition oracle_x(double b, double a, double h1, double h2) {
  XTransition tr;
  tr.up = (a * h2 + 2 * h1 * h2 * (b > 0 ? b : 0)) / (2 * h1 * h1);
  tr.down = (a * h2 + 2 * h1 * h2 * (b < 0 ? -b : 0)) / (2 * h1 * h1);
  tr.stay = 1 - std::abs(b) * h2 / h1 - a * h2 / (h1 * h1);
  return tr;
}

}  // namespace

TEST(GridSpec, ExampleGeometry) {
  const auto g = example_grid();
  EXPECT_EQ(g.n_steps(), 500u);
  EXPECT_EQ(g.nx(), 25u);
  EXPECT_EQ(g.np(), 5u);
  EXPECT_EQ(g.mode(), PMode::Reduced);
  EXPECT_EQ(g.p(2), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(g.nearest_x(1.1), 4u);
  EXPECT_EQ(g.nearest_p(std::vector<double>{0.6, 0.4}), 2u);
  EXPECT_EQ(g.nearest_x(-3.0), 0u);
  EXPECT_EQ(g.nearest_x(99.0), 24u);
}

TEST(GridSpec, FullModeIndexingAndSimplex) {
  auto m = two_regime();
  const auto g = GridSpec::make(m, 0.25, 0.001, 0.0, 6.0, PMode::Full);
  EXPECT_EQ(g.np(), 25u);
  std::size_t on = 0;
  for (std::size_t pi = 0; pi < g.np(); ++pi) on += g.on_simplex(pi);
  EXPECT_EQ(on, 5u);
  const std::vector<double> p{0.25, 0.75};
  const auto pi = g.nearest_p(p);
  EXPECT_EQ(g.p(pi), p);
  EXPECT_EQ(g.p(*g.p_neighbor(pi, 0, +1)), (std::vector<double>{0.5, 0.75}));
  EXPECT_EQ(g.p(*g.p_neighbor(pi, 1, +1)), (std::vector<double>{0.25, 1.0}));
  EXPECT_FALSE(g.p_neighbor(*g.p_neighbor(pi, 1, +1), 1, +1).has_value());
}

TEST(GridSpec, InvariantViolationsAreListed) {
  try {
    GridSpec::make(two_regime(), 0.3, 0.0007, 0.0, 6.1);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(T - s) / h2"), std::string::npos);
    EXPECT_NE(msg.find("(x_max - x_min) / h1"), std::string::npos);
    EXPECT_NE(msg.find("1 / h1"), std::string::npos);
  }
  EXPECT_THROW(GridSpec::make(two_regime(), 0.25, 0.001, 0, 6, PMode::Single), ConfigError);
  EXPECT_THROW(require_interior_target(example_grid(), 6.0), ConfigError);
  EXPECT_NO_THROW(require_interior_target(example_grid(), 5.5));
}

TEST(XTransition, SymmetricPureDiffusion) {
  const double s = 0.3, h1 = 0.25, h2 = 0.001;
  const auto tr = x_transition(0.0, s, h1, h2);
  EXPECT_DOUBLE_EQ(tr.stay, 1 - s * h2 / (h1 * h1));
  EXPECT_DOUBLE_EQ(tr.up, s * h2 / (2 * h1 * h1));
  EXPECT_EQ(tr.up, tr.down);
}

TEST(XTransition, PureDriftIsUpwind) {
  const double b = 2.0, h1 = 0.25, h2 = 0.001;
  const auto tr = x_transition(b, 0.0, h1, h2);
  EXPECT_DOUBLE_EQ(tr.up, b * h2 / h1);
  EXPECT_EQ(tr.down, 0.0);
  EXPECT_DOUBLE_EQ(tr.stay, 1 - b * h2 / h1);
  const auto neg = x_transition(-b, 0.0, h1, h2);
  EXPECT_EQ(neg.up, 0.0);
  EXPECT_DOUBLE_EQ(neg.down, b * h2 / h1);
}

TEST(XTransition, ExampleNode) {
  const auto g = example_grid();
  const std::vector<double> p{0.5, 0.5}, u{0.5};
  const auto tr = x_transition_probs(two_regime(), g, 0.0, 1.0, p, u);
  // b = 1.5 * 1 - 2 * 0.5 = 0.5, a = (0.5 * 1.5)^2 = 0.5625
  const auto want = oracle_x(0.5, 0.5625, 0.25, 0.001);
  EXPECT_NEAR(want.up, 6.5e-3, 1e-15);
  EXPECT_NEAR(want.down, 4.5e-3, 1e-15);
  EXPECT_NEAR(want.stay, 0.989, 1e-15);
  EXPECT_NEAR(tr.up, want.up, 1e-15);
  EXPECT_NEAR(tr.down, want.down, 1e-15);
  EXPECT_NEAR(tr.stay, want.stay, 1e-15);
}

TEST(PTerms, QuietCoordinateIsZero) {
  auto m = two_regime();
  m.g = {2.0, 2.0};
  const auto terms = p_transition_terms(m, example_grid(), 0.0, std::vector<double>{0.5, 0.5});
  for (const auto& t : terms) {
    EXPECT_EQ(t.up, 0.0);
    EXPECT_EQ(t.down, 0.0);
    EXPECT_EQ(t.diag, 0.0);
  }
}

TEST(PTerms, ExampleUniformPosterior) {
  const auto terms = p_transition_terms(two_regime(), example_grid(), 0.0,
                                        std::vector<double>{0.5, 0.5});
  // p1 (g1 - abar) = -0.25, forward drift 0
  EXPECT_NEAR(terms[0].up, 0.0625 * 0.001 / 0.125, 1e-18);
  EXPECT_NEAR(terms[0].up, 5e-4, 1e-18);
  EXPECT_EQ(terms[0].up, terms[0].down);
  EXPECT_NEAR(terms[0].diag, -1e-3, 1e-18);
}

TEST(PTerms, TriplesSumToZero) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto m = two_regime();
  m.m = 3;
  m.Q = {-1.0, 0.4, 0.6, 0.2, -0.5, 0.3, 1.5, 0.5, -2.0};
  m.g = {1.0, -2.0, 4.0};
  m.r = {{1, 1}, {2, 1}, {0.5, 0}};
  m.b = {{0, 1}, {-1, 1}, {0.3, 0}};
  m.sigma_bar = {{1, 0}, {2, 0}, {0.5, 0}};
  ASSERT_TRUE(validate_model(m).empty());
  const auto g = GridSpec::make(m, 0.25, 0.001, 0.0, 6.0);
  for (int k = 0; k < 10000; ++k) {
    const std::vector<double> p{U(gen), U(gen), U(gen)};
    for (const auto& t : p_transition_terms(m, g, 0.0, p)) {
      EXPECT_NEAR(t.up + t.down + t.diag, 0.0, 1e-12);
      EXPECT_LE(t.diag, 0.0);
    }
  }
}

TEST(CheckCfl, PureDriftToyPasses) {
  auto m = mvhmm::testing::single_regime(0.0, 2.0, 0.0);
  const auto g = GridSpec::make(m, 0.1, 0.01, -1.0, 1.0);
  // |b| = 2 |u| <= 2 and h1 / h2 = 10
  const auto rep = check_cfl(m, g, ControlSet::uniform(1, -1.0, 1.0, 5));
  EXPECT_TRUE(rep.pass);
  EXPECT_DOUBLE_EQ(rep.max_coefficient, 2.0 * 0.01 / 0.1);
}

TEST(CheckCfl, ExampleGridScan) {
  const auto m = two_regime();
  const auto g = example_grid();
  const auto controls = ControlSet::uniform(1, -2.0, 2.0, 41);
  const auto rep = check_cfl(m, g, controls);
  // exhaustive re-scan with the written-out coefficients
  double worst = 0.0;
  for (std::size_t n = 0; n < g.n_steps(); ++n) {
    const double t = g.time(n);
    for (std::size_t pi = 0; pi < g.np(); ++pi) {
      const double p1 = g.p(pi)[0], p2 = 1 - p1;
      const double r_hat = (t + 1) * p1 + (t + 2) * p2;
      const double B_hat = -(p1 + 3 * p2);
      const double s_hat = p1 + 2 * p2;
      for (std::size_t k = 0; k < g.nx(); ++k) {
        for (std::size_t ui = 0; ui < controls.size(); ++ui) {
          const double u = controls[ui][0];
          const double b = r_hat * g.x(k) + B_hat * u;
          const double a = u * s_hat * u * s_hat;
          worst = std::max(worst, std::abs(b) * 0.001 / 0.25 + a * 0.001 / 0.0625);
        }
      }
    }
  }
  EXPECT_NEAR(rep.max_coefficient, worst, 1e-12);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.nodes_scanned, 500u * 5 * 25 * 41);
  EXPECT_GT(rep.min_center_weight, 0.0);
}

TEST(CheckCfl, CoarseGridFailsAndListsNodes) {
  const auto m = two_regime();
  const auto g = GridSpec::make(m, 0.01, 0.01, 0.0, 6.0);
  const auto rep = check_cfl(m, g, ControlSet::uniform(1, -2.0, 2.0, 5), 10);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.max_coefficient, 1.0);
  EXPECT_EQ(rep.violations.size(), 10u);
  EXPECT_GT(rep.violation_count, 10u);
}

TEST(CheckCfl, DoublingTimeStepDoublesMax) {
  const auto m = mvhmm::testing::single_regime(0.5, 0.9, 0.4);
  const auto controls = ControlSet::uniform(1, -2.0, 2.0, 9);
  const auto a = check_cfl(m, GridSpec::make(m, 0.25, 0.001, 0.0, 4.0), controls);
  const auto b = check_cfl(m, GridSpec::make(m, 0.25, 0.002, 0.0, 4.0), controls);
  EXPECT_EQ(b.max_coefficient, 2.0 * a.max_coefficient);
}

TEST(LocalConsistency, MeanExactVarianceWithinSlack) {
  const auto m = two_regime();
  const auto g = example_grid();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> X(0.0, 6.0), P(0.0, 1.0), Uc(-2.0, 2.0), Tt(0.0, 0.5);
  for (int k = 0; k < 10000; ++k) {
    const double p1 = P(gen);
    const std::vector<double> p{p1, 1 - p1}, u{Uc(gen)};
    const auto st = local_consistency_stats(m, g, Tt(gen), X(gen), p, u);
    EXPECT_NEAR(st.mean, st.mean_target, 1e-14);
    // h1^2 (up + down) - mean^2 expands to a h2 + h1 h2 |b| - (b h2)^2
    const double expansion = st.a * g.h2() + g.h1() * g.h2() * std::abs(st.b) -
                             (st.b * g.h2()) * (st.b * g.h2());
    EXPECT_NEAR(st.variance, expansion, 1e-15);
  }
}

TEST(LocalConsistency, FrozenDynamics) {
  auto m = two_regime();
  m.r = {{0, 0}, {0, 0}};
  const auto st = local_consistency_stats(m, example_grid(), 0.1, 2.0,
                                          std::vector<double>{0.5, 0.5}, std::vector<double>{0.0});
  EXPECT_EQ(st.mean, 0.0);
  EXPECT_EQ(st.variance, 0.0);
}

TEST(Kernel, DeterministicConstruction) {
  const auto m = two_regime();
  const auto g = example_grid();
  const std::vector<double> p{0.25, 0.75}, u{-1.3};
  const auto a = x_transition_probs(m, g, 0.123, 3.5, p, u);
  const auto b = x_transition_probs(m, g, 0.123, 3.5, p, u);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}
