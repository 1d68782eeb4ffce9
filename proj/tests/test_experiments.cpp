#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fiokit/experiments.hpp"

using namespace fiokit;
using nlohmann::json;

namespace {

json base() {
  return {{"schema", "fiokit.experiment/1"}, {"experiment", "identity-op"}, {"d", 1}, {"eps", {1.0}}};
}

void expect_config_error(const json& j, const std::string& fragment) {
  try {
    parse_config(j);
    ADD_FAILURE() << "accepted: " << j.dump();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Config, Defaults) {
  const ExperimentConfig c = parse_config(base());
  EXPECT_EQ(c.d, 1);
  EXPECT_EQ(c.seed, 0x5EEDu);
  EXPECT_EQ(c.functions.size(), test_functions().size());
  EXPECT_DOUBLE_EQ(c.tol("missing", 0.25), 0.25);
}

TEST(Config, Rejections) {
  json j = base();
  j.erase("d");
  expect_config_error(j, "d:");
  j = base();
  j["schema"] = "other";
  expect_config_error(j, "schema");
  j = base();
  j["experiment"] = "nope";
  expect_config_error(j, "unknown");
  j = base();
  j["eps"] = {0.0};
  expect_config_error(j, "eps");
  j = base();
  j["eps"] = {1.5};
  expect_config_error(j, "eps");
  j = base();
  j["theta_x"] = -1.0;
  expect_config_error(j, "theta_x");
  j = base();
  j["theta_y"] = {{1.0, 0.0}, {0.0, 1.0}};
  expect_config_error(j, "theta_y");
  j = base();
  j["functions"] = {"hermite0", "unknown"};
  expect_config_error(j, "functions");
  j = base();
  j["kappa"] = {{"type", "hamiltonian"}, {"kind", "bogus"}, {"t", 1.0}};
  EXPECT_THROW(parse_config(j), ConfigError);
  j = base();
  j["tolerances"] = {{"identity", -1.0}};
  expect_config_error(j, "tolerances");
  j = base();
  j["seed"] = -3;
  expect_config_error(j, "seed");
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ThetaForms) {
  json j = base();
  j["d"] = 2;
  j["theta_x"] = {2.0, 0.5};
  j["theta_y"] = {{1.0, {0.0, 0.2}}, {{0.0, 0.2}, 3.0}};
  const ExperimentConfig c = parse_config(j);
  EXPECT_EQ(c.theta_x.entries()(1, 1), cplx(2.0, 0.5));
  EXPECT_EQ(c.theta_x.entries()(0, 1), cplx(0.0));
  EXPECT_EQ(c.theta_y.entries()(1, 0), cplx(0.0, 0.2));
}

TEST(Csv, QuotingAndLineEnds) {
  CsvTable t({"name", "value"});
  t.add({"plain", 1.5});
  t.add({"with,comma", "say \"hi\""});
  t.add({"line\nbreak", 2});
  EXPECT_EQ(t.str(),
            "name,value\r\nplain,1.5\r\n\"with,comma\",\"say \"\"hi\"\"\"\r\n\"line\nbreak\",2\r\n");
  EXPECT_THROW(t.add({"short"}), InvalidArgument);
}

TEST(Report, DeterministicForFixedTimestamp) {
  const ExperimentConfig c = parse_config(base());
  const ExperimentResult a = run_experiment(c);
  const ExperimentResult b = run_experiment(c);
  const json ja = report_json(c, a, "2020-01-01T00:00:00Z");
  EXPECT_EQ(ja.dump(), report_json(c, b, "2020-01-01T00:00:00Z").dump());
  EXPECT_EQ(ja["schema"], "fiokit.report/1");
  EXPECT_EQ(ja["seed"], "0x5EED");
  EXPECT_TRUE(ja["passed"].get<bool>());
  for (const char* k : {"experiment", "assertions", "summary", "config", "timestamp"}) EXPECT_TRUE(ja.contains(k)) << k;
}

TEST(Report, WritesBothFiles) {
  const ExperimentConfig c = parse_config(base());
  const ExperimentResult r = run_experiment(c);
  const auto dir = std::filesystem::temp_directory_path() / "fiokit-report-test";
  std::filesystem::remove_all(dir);
  write_outputs(dir.string(), c, r, "2020-01-01T00:00:00Z");
  std::ifstream rep(dir / "report.json");
  const json j = json::parse(rep);
  EXPECT_EQ(j["experiment"], "identity-op");
  std::ifstream csv(dir / "data.csv", std::ios::binary);
  std::string first;
  std::getline(csv, first);
  EXPECT_EQ(first.back(), '\r');
  std::filesystem::remove_all(dir);
}

TEST(Assertions, NonFiniteFails) {
  ExperimentResult r;
  r.check("nan", NAN, 1.0);
  r.check("ok", 0.5, 1.0);
  EXPECT_FALSE(r.passed());
  EXPECT_FALSE(r.assertions[0].passed);
  EXPECT_TRUE(r.assertions[1].passed);
}

TEST(Experiments, EveryNameRuns) {
  // Cheap configurations of the fast experiments.
  for (const std::string name : {"fbi-isometry", "reconstruct", "matrix-sqrt", "symplectic-check"}) {
    json j = base();
    j["experiment"] = name;
    j["functions"] = {"hermite0", "chirp"};
    if (name == "symplectic-check") j["kappa"] = {{"type", "hamiltonian"}, {"kind", "harmonic"}, {"t", 0.5}};
    const ExperimentResult r = run_experiment(parse_config(j));
    EXPECT_TRUE(r.passed()) << name;
    EXPECT_FALSE(r.assertions.empty()) << name;
  }
}
