#include "fixtures.hpp"

#include <mvhmm/policy_io.hpp>
#include <mvhmm/run_config.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

using namespace mvhmm;
using mvhmm::testing::two_regime;
using mvhmm::testing::single_regime;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mvhmm_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

bool mentions(const std::vector<std::string>& issues, const std::string& needle) {
  for (const auto& s : issues) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(PolicyFile, RoundTripsReducedGrid) {
  const auto m = two_regime();
  const auto g = GridSpec::make(m, 0.5, 0.01, 0.0, 3.0);
  const auto res = solve(m, g, {0.6, 2.0, ControlSet::uniform(1, -1, 1, 5)}, {.skip_cfl = true});
  const auto path = scratch("reduced.csv");
  write_text(path, policy_csv(res.values, res.policy));
  const auto back = read_policy_csv(path.string(), m);
  EXPECT_EQ(back.grid.mode(), g.mode());
  EXPECT_EQ(back.grid.nx(), g.nx());
  EXPECT_EQ(back.grid.np(), g.np());
  EXPECT_EQ(back.grid.n_steps(), g.n_steps());
  EXPECT_EQ(back.controls.axes(), res.policy.controls.axes());
  EXPECT_EQ(back.choice, res.policy.choice);
}

TEST(PolicyFile, RoundTripsSingleRegime) {
  const auto m = single_regime(0.1, 0.3, 0.4, 0.5);
  const auto g = GridSpec::make(m, 0.1, 0.01, 0.0, 2.0);
  const auto res = solve(m, g, {0.5, 1.2, ControlSet::uniform(1, -2, 2, 9)});
  const auto path = scratch("single.csv");
  write_text(path, policy_csv(res.values, res.policy));
  const auto back = read_policy_csv(path.string(), m);
  EXPECT_EQ(back.choice, res.policy.choice);
  EXPECT_DOUBLE_EQ(back.grid.h1(), g.h1());
  EXPECT_DOUBLE_EQ(back.grid.h2(), g.h2());
}

TEST(PolicyFile, MalformedCellNamesTheLine) {
  const auto m = single_regime(0.1, 0.3, 0.4, 0.5);
  const auto path = scratch("bad.csv");
  write_text(path, "n,t,x,p_1,V,u_1\n0,0,0,1,0.5,0.1\n0,0,abc,1,0.5,0.1\n");
  try {
    read_policy_csv(path.string(), m);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
  }
}

TEST(PolicyFile, RegimeCountMismatchIsRejected) {
  const auto m = two_regime();
  const auto path = scratch("m1.csv");
  write_text(path, "n,t,x,p_1,V,u_1\n0,0,0,1,0.5,0.1\n");
  EXPECT_THROW(read_policy_csv(path.string(), m), ConfigError);
}

TEST(RunConfigFile, ResolvesModelRelativeToConfig) {
  const auto cfg_path = scratch("cfg.json");
  write_text(cfg_path, R"({"model": "model.json", "grid": {"h1": 0.5}, "kappa": 2})");
  const auto cfg = load_config(cfg_path.string());
  EXPECT_EQ(fs::path(cfg.model_path), cfg_path.parent_path() / "model.json");
  EXPECT_EQ(cfg.h1, 0.5);
  ASSERT_TRUE(cfg.kappa.has_value());
  EXPECT_EQ(*cfg.kappa, 2.0);
}

TEST(RunConfigFile, ReportsEveryMalformedKey) {
  const auto cfg_path = scratch("bad_cfg.json");
  write_text(cfg_path, R"({"model": "m.json", "grid": {"h1": "wide"}, "paths": -3})");
  try {
    load_config(cfg_path.string());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("h1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("paths"), std::string::npos) << msg;
  }
}

TEST(RunConfigFile, HashTracksSettings) {
  RunConfig a;
  a.model_path = "m.json";
  a.kappa = 2.0;
  auto b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.h2 = 0.002;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Validation, ListsAllProblemsAtOnce) {
  const auto m = two_regime();
  RunConfig c;
  c.model_path = "m.json";
  c.h1 = 0.3;  // does not divide the posterior interval
  c.x_min = 0.0;
  c.x_max = 6.0;
  c.kappa = 9.0;
  c.lambda_lo = 1.0;
  c.lambda_hi = -1.0;
  const auto issues = validate_config(c, Command::Solve, &m);
  EXPECT_GE(issues.size(), 3u);
  EXPECT_TRUE(mentions(issues, "grid:"));
  EXPECT_TRUE(mentions(issues, "kappa 9"));
  EXPECT_TRUE(mentions(issues, "lambda bracket"));
}

TEST(Validation, SimulateNeedsExistingPolicy) {
  const auto m = two_regime();
  RunConfig c;
  c.model_path = "m.json";
  c.policy_path = (fs::temp_directory_path() / "definitely_missing_policy.csv").string();
  const auto issues = validate_config(c, Command::Simulate, &m);
  EXPECT_TRUE(mentions(issues, "policy file not found"));
}

TEST(Validation, FrontierTargetsMustBeInterior) {
  const auto m = two_regime();
  RunConfig c;
  c.model_path = "m.json";
  c.kappa_range = KappaRange{1.0, 7.0, 1.0};
  const auto issues = validate_config(c, Command::Frontier, &m);
  EXPECT_TRUE(mentions(issues, "kappa 6"));
  EXPECT_TRUE(mentions(issues, "kappa 7"));
  EXPECT_FALSE(mentions(issues, "kappa 5 "));
}

TEST(Validation, LambdaMethodNames) {
  EXPECT_EQ(parse_lambda_method("golden"), LambdaMethod::GoldenSection);
  EXPECT_EQ(parse_lambda_method("nelder-mead"), LambdaMethod::NelderMead);
  EXPECT_FALSE(parse_lambda_method("newton").has_value());
  EXPECT_EQ(to_string(LambdaMethod::NelderMead), "nelder-mead");
}
