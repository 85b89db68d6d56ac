#include <gtest/gtest.h>

#include <cmath>

#include "pathsens/builtin.hpp"
#include "pathsens/estimators.hpp"
#include "pathsens/parser.hpp"

using namespace pathsens;

namespace {

ReactionNetwork birth_death() { return parse_network(birth_death_source()); }

// exact birth/death RER for a log perturbation of k1 by t: k1 (t - log(1 + t))
double bd_rer_k1(double k1, double t) { return k1 * (t - std::log1p(t)); }

SimConfig long_run(std::uint64_t seed, std::uint64_t events) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.burn_in = 20.0;
  cfg.max_events = events;
  return cfg;
}

}  // namespace

TEST(Accumulator, ZeroPerturbationIsExactlyZero) {
  const auto net = birth_death();
  SensitivityAccumulator acc(net, net.parameter_values(), Perturbation::logarithmic({0.0, 0.0}), false);
  for (Count x : {0, 3, 7, 40}) acc.add(State{x}, 0.37);
  EXPECT_EQ(acc.rer_sum(), 0.0);
  EXPECT_EQ(acc.rer(), 0.0);
}

TEST(Accumulator, BirthDeathIntegrandAtSingleState) {
  const auto net = birth_death();
  const std::vector<double> theta{10.0, 1.0};
  SensitivityAccumulator acc(net, theta, Perturbation::logarithmic({0.1, 0.0}), true);
  acc.add(State{7}, 1.0);
  EXPECT_NEAR(acc.rer(), 10.0 * std::log(10.0 / 11.0) + 1.0, 1e-14);
  EXPECT_NEAR(acc.rer(), 0.0468982, 5e-8);
  const Eigen::MatrixXd f = log_scale_fim(acc.fim(), theta);
  EXPECT_DOUBLE_EQ(f(0, 0), 10.0);
  EXPECT_DOUBLE_EQ(f(1, 1), 7.0);
  EXPECT_EQ(f(0, 1), 0.0);
  EXPECT_EQ(f(1, 0), 0.0);
}

TEST(Accumulator, ZeroTimeIsAnError) {
  const auto net = birth_death();
  SensitivityAccumulator acc(net, net.parameter_values(), std::nullopt, true);
  EXPECT_THROW(acc.fim(), ValidationError);
  EXPECT_THROW(acc.rer(), ValidationError);
  EXPECT_THROW(acc.add(State{1}, -1.0), ValidationError);
}

TEST(Accumulator, AbsoluteContinuityViolation) {
  const auto net = birth_death();
  SensitivityAccumulator acc(net, net.parameter_values(), Perturbation::absolute({-10.0, 0.0}), false);
  try {
    acc.add(State{7}, 1.0);
    FAIL();
  } catch (const AbsoluteContinuityViolation& e) {
    EXPECT_EQ(e.reaction(), 0u);
  }
}

TEST(Accumulator, LogPerturbationNeedsPositiveFactor) {
  EXPECT_THROW(Perturbation::logarithmic({-1.0, 0.0}).apply(std::vector<double>{1.0, 1.0}), ValidationError);
  EXPECT_THROW(Perturbation::logarithmic({0.1}).apply(std::vector<double>{1.0, 1.0}), ValidationError);
}

TEST(RerEstimate, BirthDeathK1) {
  const auto net = birth_death();
  const auto r = rer_estimate(net, net.parameter_values(), Perturbation::log_direction(0, 2, 0.1), State{0},
                              long_run(1, 200000));
  // the integrand does not depend on x, so the estimate is exact up to rounding
  EXPECT_NEAR(r.value, 10.0 * std::log(10.0 / 11.0) + 1.0, 1e-12);
  EXPECT_FALSE(r.negative);
}

TEST(RerEstimate, BirthDeathK2) {
  const auto net = birth_death();
  const auto r = rer_estimate(net, net.parameter_values(), Perturbation::log_direction(1, 2, 0.1), State{0},
                              long_run(2, 1000000));
  const double exact = 10.0 * (0.1 - std::log(1.1));
  EXPECT_NEAR(r.value, exact, 3.0 * r.std_error);
  EXPECT_LT(r.std_error, 0.01 * exact);
  EXPECT_EQ(r.events, 1000000u);
}

TEST(RerEstimate, AbsoluteMatchesLogarithmic) {
  const auto p53 = builtin_model("p53");
  std::vector<double> delta{0.1, -0.05, 0.2, 0.0, 0.1, 0.0, -0.1};
  std::vector<double> abs_eps(delta.size());
  for (std::size_t k = 0; k < delta.size(); ++k) abs_eps[k] = p53.theta[k] * delta[k];
  SimConfig cfg;
  cfg.seed = 3;
  cfg.t_end = 300.0;
  const auto a = rer_estimate(p53.net, p53.theta, Perturbation::logarithmic(delta), p53.x0, cfg);
  const auto b = rer_estimate(p53.net, p53.theta, Perturbation::absolute(abs_eps), p53.x0, cfg);
  EXPECT_NEAR(a.value, b.value, 1e-12 * std::abs(a.value));
  EXPECT_EQ(a.events, b.events);
}

TEST(FimEstimate, BirthDeathNaturalAndLogScale) {
  const auto net = birth_death();
  const auto f = fim_estimate(net, net.parameter_values(), State{0}, long_run(4, 1000000));
  EXPECT_NEAR(f.matrix(0, 0), 0.1, 0.003);
  EXPECT_NEAR(f.matrix(1, 1), 10.0, 0.3);
  EXPECT_EQ(f.matrix(0, 1), 0.0);
  const Eigen::MatrixXd l = log_scale_fim(f.matrix, net.parameter_values());
  EXPECT_NEAR(l(0, 0), 10.0, 0.3);
  EXPECT_NEAR(l(1, 1), 10.0, 0.3);
  // constant propensity: the k1 entry has no Monte Carlo error at all
  EXPECT_NEAR(l(0, 0), 10.0, 1e-12);
}

TEST(FimEstimate, SymmetricPsdAndExactZeros) {
  const auto p53 = builtin_model("p53");
  SimConfig cfg;
  cfg.seed = 6;
  cfg.t_end = 200.0;
  const auto f = fim_estimate(p53.net, p53.theta, p53.x0, cfg);
  EXPECT_EQ((f.matrix - f.matrix.transpose()).cwiseAbs().maxCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.matrix);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * f.matrix.trace());
  // only R2 couples parameters: ax, ak, k (indices 1..3)
  for (Eigen::Index r = 0; r < 7; ++r) {
    for (Eigen::Index c = 0; c < 7; ++c) {
      const bool coupled = r == c || (r >= 1 && r <= 3 && c >= 1 && c <= 3);
      if (!coupled) {
        EXPECT_EQ(f.matrix(r, c), 0.0) << r << ',' << c;
      }
    }
  }
}

TEST(FimEstimate, DiagonalIdentityOnSameTrajectory) {
  const auto p53 = builtin_model("p53");
  SimConfig cfg;
  cfg.seed = 10;
  cfg.burn_in = 10.0;
  cfg.t_end = 400.0;
  SensitivityAccumulator acc(p53.net, p53.theta, std::nullopt, true);
  std::vector<double> weighted(p53.net.num_reactions(), 0.0);
  double t = 0.0;
  simulate(p53.net, p53.theta, p53.x0, cfg, [&](const StepView& v) {
    acc.add(v);
    for (std::size_t j = 0; j < weighted.size(); ++j) weighted[j] += v.dt * v.propensities[j];
    t += v.dt;
  });
  const Eigen::MatrixXd l = log_scale_fim(acc.fim(), p53.theta);
  // single-parameter reactions: bx (R1), by (R3), a0 (R4), ay (R5)
  const std::vector<std::pair<Eigen::Index, std::size_t>> owner{{0, 0}, {4, 2}, {5, 3}, {6, 4}};
  for (auto [p, j] : owner) EXPECT_NEAR(l(p, p), weighted[j] / t, 1e-12 * weighted[j] / t);
  EXPECT_NEAR(l(0, 0), 90.0, 1e-10);
}

TEST(FimEstimate, MichaelisMentenClosedFormRows) {
  const auto net = parse_network(michaelis_menten_pair_source());
  const auto& th = net.parameter_values();
  const double v = th[0], km = th[1];
  SimConfig cfg;
  cfg.seed = 2;
  cfg.t_end = 500.0;
  SensitivityAccumulator acc(net, th, std::nullopt, true);
  double vv = 0.0, vk = 0.0, kk = 0.0, t = 0.0;
  simulate(net, cfg, [&](const StepView& s) {
    acc.add(s);
    for (std::size_t i = 0; i < 2; ++i) {
      const double x = static_cast<double>(s.state[i]);
      if (x <= 0.0) continue;
      const double d = km + x;
      vv += s.dt * x / (v * d);
      vk -= s.dt * x / (d * d);
      kk += s.dt * v * x / (d * d * d);
    }
    t += s.dt;
  });
  const Eigen::MatrixXd f = acc.fim();
  EXPECT_NEAR(f(0, 0), vv / t, 1e-12 * std::abs(vv / t));
  EXPECT_NEAR(f(0, 1), vk / t, 1e-12 * std::abs(vk / t));
  EXPECT_NEAR(f(1, 0), vk / t, 1e-12 * std::abs(vk / t));
  EXPECT_NEAR(f(1, 1), kk / t, 1e-12 * std::abs(kk / t));
}

TEST(RerFromFim, Examples) {
  const Eigen::MatrixXd f = Eigen::Vector2d(10.0, 10.0).asDiagonal();
  EXPECT_EQ(rer_from_fim(f, std::vector<double>{0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(rer_from_fim(f, std::vector<double>{0.1, 0.0}), 0.05);
  EXPECT_NEAR(rer_from_fim(f, std::vector<double>{0.01, 0.0}) - bd_rer_k1(10.0, 0.01), 5e-4 - 4.9669e-4, 1e-8);
  EXPECT_THROW(rer_from_fim(f, std::vector<double>{0.1}), ValidationError);
}

TEST(RerFromFim, QuadraticConsistencyAlongK1) {
  const auto net = birth_death();
  const auto f = fim_estimate(net, net.parameter_values(), State{0}, long_run(3, 100000));
  const Eigen::MatrixXd l = log_scale_fim(f.matrix, net.parameter_values());
  double previous = INFINITY;
  for (double t : {0.1, 0.05, 0.01}) {
    const auto r = rer_estimate(net, net.parameter_values(), Perturbation::log_direction(0, 2, t), State{0},
                                long_run(3, 100000));
    const double q = rer_from_fim(l, std::vector<double>{t, 0.0});
    EXPECT_NEAR(r.value, bd_rer_k1(10.0, t), 1e-12);
    const double scaled = std::abs(r.value - q) / (t * t);
    EXPECT_LT(scaled, previous);
    previous = scaled;
  }
  EXPECT_LT(previous, 0.05);
}

TEST(LogScale, IdentityTheta) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 2, 5;
  EXPECT_EQ(log_scale_fim(m, std::vector<double>{1.0, 1.0}), m);
  const Eigen::MatrixXd s = log_scale_fim(m, std::vector<double>{2.0, 3.0});
  EXPECT_EQ(s(0, 1), 12.0);
  EXPECT_EQ(s(1, 1), 45.0);
}

TEST(Ensemble, SingleReplicateEqualsFimEstimate) {
  const auto net = birth_death();
  const auto cfg = long_run(8, 50000);
  const auto e = ensemble_fim(net, net.parameter_values(), State{0}, cfg, 1, 1);
  const auto f = fim_estimate(net, net.parameter_values(), State{0}, cfg);
  EXPECT_EQ(e.mean, f.matrix);
  EXPECT_TRUE(e.std_error.cwiseEqual(f.std_error).all());
}

TEST(Ensemble, DeterministicAcrossThreadCounts) {
  const auto p53 = builtin_model("p53");
  SimConfig cfg;
  cfg.seed = 21;
  cfg.t_end = 50.0;
  const auto a = ensemble_fim(p53.net, p53.theta, p53.x0, cfg, 6, 1);
  const auto b = ensemble_fim(p53.net, p53.theta, p53.x0, cfg, 6, 3);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Ensemble, StderrShrinksWithReplicates) {
  const auto net = birth_death();
  const auto cfg = long_run(12, 20000);
  const auto one = fim_estimate(net, net.parameter_values(), State{0}, cfg);
  const auto many = ensemble_fim(net, net.parameter_values(), State{0}, cfg, 100);
  const double ratio = one.std_error(1, 1) / many.std_error(1, 1);
  EXPECT_GT(ratio, 10.0 / 2.0);
  EXPECT_LT(ratio, 10.0 * 2.0);
}

TEST(Ensemble, P53OffBlockWithinStderr) {
  const auto p53 = builtin_model("p53");
  SimConfig cfg;
  cfg.seed = 30;
  cfg.burn_in = 20.0;
  cfg.t_end = 120.0;
  const auto e = ensemble_fim(p53.net, p53.theta, p53.x0, cfg, 20);
  for (Eigen::Index r = 0; r < 7; ++r) {
    for (Eigen::Index c = 0; c < 7; ++c) {
      const bool coupled = r == c || (r >= 1 && r <= 3 && c >= 1 && c <= 3);
      if (!coupled) {
        EXPECT_LE(std::abs(e.mean(r, c)), 3.0 * e.std_error(r, c));
      }
    }
  }
}

TEST(Ensemble, NeedsAReplicate) {
  const auto net = birth_death();
  EXPECT_THROW(ensemble_fim(net, net.parameter_values(), State{0}, long_run(1, 10), 0), ValidationError);
}

TEST(RunSensitivity, AbsorbedBeforeAccumulation) {
  const auto net = parse_network("species X initial 1\nparam k 100\nreaction d: X -> 0 @ massaction k\n");
  SimConfig cfg;
  cfg.seed = 1;
  cfg.burn_in = 50.0;
  cfg.t_end = 100.0;
  EXPECT_THROW(fim_estimate(net, net.parameter_values(), State{1}, cfg), AbsorbingState);
}
