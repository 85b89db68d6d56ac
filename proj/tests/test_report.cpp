#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pathsens/builtin.hpp"
#include "pathsens/report.hpp"

#include "fixtures.hpp"

using namespace pathsens;

TEST(ConfigHash, StableAndSensitive) {
  const json a = {{"model", "p53"}, {"seed", 1}};
  const json b = {{"model", "p53"}, {"seed", 1}};
  const json c = {{"model", "p53"}, {"seed", 2}};
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
  // FNV-1a 64 of the compact dump, reference values computed offline
  EXPECT_EQ(config_hash(json("")), "07cc7607b4949e25");
  EXPECT_EQ(config_hash(json{{"a", 1}}), "9c3e82dd6fcae8b1");
}

TEST(MatrixJson, RoundTripWithNan) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2.5, -3, std::numeric_limits<double>::quiet_NaN(), 0, 1e-300;
  const json j = matrix_to_json(m);
  EXPECT_TRUE(j[1][0].is_null());
  const auto back = matrix_from_json(json::parse(j.dump()));
  EXPECT_TRUE(std::isnan(back(1, 0)));
  Eigen::MatrixXd a = m, b = back;
  a(1, 0) = b(1, 0) = 0.0;
  EXPECT_EQ(a, b);
}

TEST(FimJson, SchemaAndMetadata) {
  RunMetadata meta;
  meta.seed = 42;
  meta.config = {{"command", "fim"}, {"model", "birthdeath"}};
  meta.backend = Backend::meanfield;
  meta.window = Window{500.0, 700.0};
  meta.regime = WindowRegime::steady;
  const json j = fim_to_json({"k1", "k2"}, Eigen::MatrixXd::Identity(2, 2) * 10.0, Eigen::MatrixXd(), true, 200.0, 0, meta);
  EXPECT_EQ(j["kind"], "fim");
  EXPECT_EQ(j["scale"], "log");
  EXPECT_EQ(j["parameters"], json({"k1", "k2"}));
  EXPECT_EQ(j["matrix"][0][0], 10.0);
  EXPECT_TRUE(j["stderr"].is_null());
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["backend"], "meanfield");
  EXPECT_EQ(j["window"], json({500.0, 700.0}));
  EXPECT_EQ(j["regime"], "steady");
  EXPECT_EQ(j["config_hash"], config_hash(meta.config));
}

TEST(RerJson, Schema) {
  RunMetadata meta;
  const json j = rer_to_json({"k1", "k2"}, Perturbation::log_direction(0, 2, 0.1), 0.0469, 0.001, false, 1e5, 1000000, meta);
  EXPECT_EQ(j["kind"], "rer");
  EXPECT_EQ(j["perturbation"]["mode"], "log");
  EXPECT_EQ(j["perturbation"]["eps"], json({0.1, 0.0}));
  EXPECT_EQ(j["backend"], "ssa");
  EXPECT_TRUE(j["window"].is_null());
  const json nan = rer_to_json({"k1"}, Perturbation::log_direction(0, 1, 0.1), 0.0, std::nan(""), true, 1, 1, meta);
  EXPECT_TRUE(nan["stderr"].is_null());
  EXPECT_EQ(nan["negative"], true);
}

TEST(SensitivityReport, BirthDeathEquilibrium) {
  const auto fim = fixtures::birth_death_equilibrium_fim(10.0, 1.0);
  const auto rep = sensitivity_report({"k1", "k2"}, fim, {{0, 1}});
  const json j = report_to_json(rep);
  EXPECT_EQ(j["blocks"].size(), 1u);
  EXPECT_EQ(j["blocks"][0]["identifiable"], false);
  EXPECT_NEAR(j["d_optimality"].get<double>(), 0.0, 1e-12);
  EXPECT_TRUE(j["a_optimality"].is_null());
  EXPECT_TRUE(j["cramer_rao"]["lower_bounds"]["k1"].is_null());
  EXPECT_NEAR(j["most_sensitive_direction"]["value"].get<double>(), 20.0, 1e-12);
  const auto v = j["least_sensitive_direction"]["vector"].get<std::vector<double>>();
  EXPECT_NEAR(v[0], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(v[1], 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(j["blocks"][0]["eigenvectors"].size(), 2u);
  EXPECT_NE(j["cramer_rao"]["assumption"].get<std::string>().find("complete"), std::string::npos);
}

TEST(SensitivityReport, TableRows) {
  Eigen::MatrixXd fim = Eigen::MatrixXd::Zero(3, 3);
  fim(0, 0) = 2.0;
  fim(1, 1) = 5.0;
  fim(2, 2) = 5.0;
  const auto rep = sensitivity_report({"alpha", "b", "c"}, fim, {{0}, {1}, {2}});
  EXPECT_EQ(rep.rank_of, (std::vector<std::size_t>{3, 1, 2}));
  const auto table = report_to_table(rep);
  EXPECT_NE(table.find("parameter"), std::string::npos);
  EXPECT_NE(table.find("identifiable"), std::string::npos);
  EXPECT_NE(table.find("alpha"), std::string::npos);
  // header, three rows, two trailer lines
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 6);
  const json j = report_to_json(rep);
  EXPECT_DOUBLE_EQ(j["d_optimality"].get<double>(), 50.0);
  EXPECT_DOUBLE_EQ(j["a_optimality"].get<double>(), 0.5 + 0.2 + 0.2);
  EXPECT_EQ(j["ranking"][0]["parameter"], "b");
}

TEST(SpectraJson, Schema) {
  Spectrum s;
  s.frequencies = {0.0, 0.5};
  s.power = {1.0, 2.0};
  s.sample_interval = 1.0;
  const json j = spectra_to_json({"x"}, {s}, RunMetadata{});
  EXPECT_EQ(j["kind"], "psd");
  EXPECT_EQ(j["power"]["x"], json({1.0, 2.0}));
  EXPECT_EQ(j["frequencies"], json({0.0, 0.5}));
}
