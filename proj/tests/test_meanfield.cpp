#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pathsens/builtin.hpp"
#include "pathsens/meanfield.hpp"
#include "pathsens/parser.hpp"
#include "pathsens/structure.hpp"

using namespace pathsens;

namespace {

ReactionNetwork birth_death() { return parse_network(birth_death_source()); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x(i++) = d;
  return x;
}

// x(t) = 10 (1 - e^-t) for k1 = 10, k2 = 1, x(0) = 0
double bd_exact(double t) { return 10.0 * (1.0 - std::exp(-t)); }

}  // namespace

TEST(ReactionRate, BirthDeathRhs) {
  const auto net = birth_death();
  const auto th = net.parameter_values();
  EXPECT_DOUBLE_EQ(reaction_rate_rhs(net, th, vec({0.0}))(0), 10.0);
  EXPECT_DOUBLE_EQ(reaction_rate_rhs(net, th, vec({4.0}))(0), 6.0);
  EXPECT_EQ(reaction_rate_rhs(net, th, vec({10.0}))(0), 0.0);
}

TEST(ReactionRate, ConservationIsExact) {
  const auto net = parse_network(
      "species A initial 30\nspecies B initial 5\nparam f 1.3\nparam b 0.7\n"
      "reaction fwd: A -> B @ massaction f\nreaction bwd: B -> A @ massaction b\n");
  const auto th = net.parameter_values();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 100; ++i) {
    const auto dx = reaction_rate_rhs(net, th, vec({u(gen), u(gen)}));
    EXPECT_EQ(dx(0) + dx(1), 0.0);
  }
  const auto sol = integrate(net, th, vec({30.0, 5.0}), {0.0, 20.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  for (const auto& x : sol.states) EXPECT_NEAR(x.sum(), 35.0, 1e-9);
  // relaxes to f xA = b xB
  EXPECT_NEAR(sol.final_state()(1), 35.0 * 1.3 / 2.0, 1e-6);
}

TEST(ReactionRate, JacobianMatchesFiniteDifferences) {
  for (const char* name : {"p53", "mm-pair", "birthdeath"}) {
    const auto m = builtin_model(name);
    const auto n = static_cast<Eigen::Index>(m.net.num_species());
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> u(1.0, 50.0);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd x(n);
      for (Eigen::Index i = 0; i < n; ++i) x(i) = u(gen);
      const Eigen::MatrixXd jac = reaction_rate_jacobian(m.net, m.theta, x);
      for (Eigen::Index s = 0; s < n; ++s) {
        const double h = 1e-6 * std::max(1.0, x(s));
        Eigen::VectorXd up = x, dn = x;
        up(s) += h;
        dn(s) -= h;
        const Eigen::VectorXd fd = (reaction_rate_rhs(m.net, m.theta, up) - reaction_rate_rhs(m.net, m.theta, dn)) / (2 * h);
        for (Eigen::Index i = 0; i < n; ++i) {
          EXPECT_NEAR(jac(i, s), fd(i), 1e-6 * std::max(1.0, std::abs(fd(i)))) << name << ' ' << i << ',' << s;
        }
      }
    }
  }
}

TEST(Integrate, BirthDeathClosedForm) {
  const auto net = birth_death();
  const auto th = net.parameter_values();
  const auto sol = integrate(net, th, vec({0.0}), {0.0, 10.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  EXPECT_EQ(sol.times.front(), 0.0);
  EXPECT_EQ(sol.times.back(), 10.0);
  EXPECT_NEAR(sol.final_state()(0), bd_exact(10.0), 1e-6);
  for (std::size_t i = 0; i < sol.size(); ++i) EXPECT_NEAR(sol.states[i](0), bd_exact(sol.times[i]), 1e-6);
  for (std::size_t i = 1; i < sol.size(); ++i) EXPECT_GT(sol.times[i], sol.times[i - 1]);

  const auto at1 = integrate(net, th, vec({0.0}), {0.0, 1.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  EXPECT_NEAR(at1.final_state()(0), 6.3212055882855767, 1e-6);
}

TEST(Integrate, WindowStartsLate) {
  const auto net = birth_death();
  const auto sol = integrate(net, net.parameter_values(), vec({0.0}), {2.0, 3.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  EXPECT_EQ(sol.times.front(), 2.0);
  EXPECT_EQ(sol.times.back(), 3.0);
  EXPECT_NEAR(sol.states.front()(0), bd_exact(2.0), 1e-6);
  EXPECT_NEAR(sol.rhs_norm_at_start, 10.0 * std::exp(-2.0), 1e-5);
}

TEST(Integrate, ZeroWidthWindow) {
  const auto net = birth_death();
  const auto sol = integrate(net, net.parameter_values(), vec({3.0}), {0.0, 0.0});
  ASSERT_EQ(sol.size(), 1u);
  EXPECT_EQ(sol.states[0](0), 3.0);
  EXPECT_EQ(sol.steps, 0u);
  // the FIM integrand at x0: diag (k1, k2 x0)
  const auto f = fim_meanfield(net, net.parameter_values(), sol);
  EXPECT_DOUBLE_EQ(f(0, 0), 10.0);
  EXPECT_DOUBLE_EQ(f(1, 1), 3.0);
}

TEST(Integrate, Errors) {
  const auto net = birth_death();
  const auto th = net.parameter_values();
  EXPECT_THROW(integrate(net, th, vec({0.0}), {2.0, 1.0}), ValidationError);
  EXPECT_THROW(integrate(net, th, vec({0.0}), {-1.0, 1.0}), ValidationError);
  EXPECT_THROW(integrate(net, th, vec({0.0}), {0.0, 1.0}, IntegratorOptions::tolerances(0.0, 1e-9)), ValidationError);
  EXPECT_THROW(integrate(net, th, vec({0.0, 1.0}), {0.0, 1.0}), ValidationError);
  IntegratorOptions tight;
  tight.max_steps = 5;
  EXPECT_THROW(integrate(net, th, vec({0.0}), {0.0, 10.0}, tight), IntegrationError);
}

TEST(Integrate, StiffStandInReaches700) {
  const auto m = builtin_model("egfr-standin");
  const auto sol = integrate(m.net, m.theta, to_real_state(m.x0), {0.0, 700.0});
  EXPECT_EQ(sol.times.back(), 700.0);
  EXPECT_TRUE(sol.final_state().allFinite());
  EXPECT_GE(sol.final_state().minCoeff(), 0.0);
}

TEST(FimMeanfield, SteadyWindowBirthDeath) {
  const auto net = birth_death();
  const auto th = net.parameter_values();
  const auto sol = integrate(net, th, vec({0.0}), {50.0, 150.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  const auto f = fim_meanfield(net, th, sol);
  EXPECT_NEAR(f(0, 0), 10.0, 0.1);
  EXPECT_NEAR(f(1, 1), 10.0, 0.1);
  EXPECT_EQ(f(0, 1), 0.0);
  EXPECT_EQ(f(1, 0), 0.0);
}

TEST(FimMeanfield, TransientWindowBirthDeath) {
  const auto net = birth_death();
  const auto th = net.parameter_values();
  auto opt = IntegratorOptions::tolerances(1e-8, 1e-10);
  opt.max_step = 1e-3;
  const auto sol = integrate(net, th, vec({0.0}), {0.0, 1.0}, opt);
  const auto f = fim_meanfield(net, th, sol);
  const double xbar = 10.0 - 10.0 * (1.0 - std::exp(-1.0));
  EXPECT_NEAR(f(0, 0), 10.0, 1e-12);
  EXPECT_NEAR(f(1, 1), xbar, 2e-3 * xbar);
  EXPECT_GT(std::abs(f(1, 1) - 10.0), 5.0);
}

TEST(FimMeanfield, P53BlockStructureAndPsd) {
  const auto m = builtin_model("p53");
  const auto sol = integrate(m.net, m.theta, to_real_state(m.x0), {0.0, 200.0});
  const auto f = fim_meanfield(m.net, m.theta, sol);
  EXPECT_EQ((f - f.transpose()).cwiseAbs().maxCoeff(), 0.0);
  const auto part = parameter_blocks(dependency_graph(m.net));
  EXPECT_NO_THROW(assemble_block_fim(f, part, LeakTolerance::exact));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * f.trace());
}

TEST(FimMeanfield, SelfConvergence) {
  const auto m = builtin_model("p53");
  auto loose = IntegratorOptions::tolerances(1e-7, 1e-9);
  auto tight = IntegratorOptions::tolerances(0.5e-7, 0.5e-9);
  loose.max_step = tight.max_step = 0.01;
  const auto a = fim_meanfield(m.net, m.theta, integrate(m.net, m.theta, to_real_state(m.x0), {0.0, 100.0}, loose));
  const auto b = fim_meanfield(m.net, m.theta, integrate(m.net, m.theta, to_real_state(m.x0), {0.0, 100.0}, tight));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      // well inside the 1% quadrature budget
      EXPECT_NEAR(a(i, j), b(i, j), 1e-2 * std::max(1.0, std::abs(b(i, j))));
    }
  }
}

TEST(RerMeanfield, SteadyBirthDeathMatchesFluidLimit) {
  // started at x = k1/k2 the path stays put: k1 log(k1/k1') - (k1 - k1')
  const auto net = birth_death();
  const auto th = net.parameter_values();
  const auto sol = integrate(net, th, vec({10.0}), {0.0, 10.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  const double e = 0.1;
  const double r = rer_meanfield(net, th, Perturbation::log_direction(0, 2, e), sol);
  EXPECT_NEAR(r, 10.0 * std::log(1.0 / 1.1) + 1.0, 1e-9);
}

TEST(ScalePopulation, UnitScaleIsIdentity) {
  for (const char* name : {"birthdeath", "p53", "mm-pair"}) {
    const auto m = builtin_model(name);
    const auto s = scale_population(m.net, m.x0, 1.0);
    EXPECT_EQ(s.net, m.net) << name;
    EXPECT_EQ(s.x0, m.x0);
  }
}

TEST(ScalePopulation, PropensitiesScaleLinearly) {
  const auto net = parse_network(
      "species A initial 3\nspecies B initial 4\nparam k0 2\nparam k1 0.5\nparam k2 0.01\nparam v 5\nparam km 8\n"
      "reaction r0: 0 -> A @ massaction k0\nreaction r1: A -> B @ massaction k1\n"
      "reaction r2: A + B -> 0 @ massaction k2\nreaction r3: B -> A @ mm vmax=v km=km modifiers=A\n");
  const auto s = scale_population(net, net.initial_counts(), 10.0);
  // real-valued propensities evaluated at the scaled continuum state
  const std::vector<double> x{3.0, 4.0}, xs{30.0, 40.0};
  for (std::size_t j = 0; j < net.num_reactions(); ++j) {
    EXPECT_NEAR(propensity<double>(s.net, s.net.parameter_values(), xs, j),
                10.0 * propensity<double>(net, net.parameter_values(), x, j), 1e-12)
        << j;
  }
  EXPECT_EQ(s.x0, (State{30, 40}));
  EXPECT_DOUBLE_EQ(s.net.parameter_values()[2], 0.001);
}

TEST(ScalePopulation, RejectsMixedOrderSharing) {
  const auto net = parse_network(
      "species A initial 3\nparam k 1\nreaction r0: 0 -> A @ massaction k\nreaction r1: A -> 0 @ massaction k\n");
  EXPECT_THROW(scale_population(net, net.initial_counts(), 2.0), ValidationError);
}

TEST(Consistency, LinearNetworkAgreesWithinStderr) {
  // unimolecular network: mean propensities depend only on mean populations
  const auto net = birth_death();
  const auto th = net.parameter_values();
  SimConfig cfg;
  cfg.seed = 17;
  cfg.burn_in = 50.0;
  cfg.t_end = 50.0 + 5000.0;
  const auto fr = fim_estimate(net, th, net.initial_counts(), cfg);
  const Eigen::MatrixXd ssa = log_scale_fim(fr.matrix, th);
  const Eigen::MatrixXd se = log_scale_fim(fr.std_error, th).cwiseAbs();
  const auto sol = integrate(net, th, vec({0.0}), {50.0, 5050.0}, IntegratorOptions::tolerances(1e-8, 1e-10));
  const auto mf = fim_meanfield(net, th, sol);
  for (Eigen::Index i = 0; i < 2; ++i) EXPECT_LE(std::abs(ssa(i, i) - mf(i, i)), 3.0 * se(i, i) + 1e-9) << i;
}

TEST(Consistency, DiscrepancyShrinksWithPopulation) {
  const auto net = birth_death();
  const auto rows = ssa_vs_meanfield_consistency(net, net.initial_counts());
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(rows[i].meanfield_diagonal(0), 10.0 * rows[i].scale, 1e-6 * rows[i].scale);
  }
  EXPECT_GT(rows[0].max_relative_discrepancy, rows[1].max_relative_discrepancy);
  EXPECT_GT(rows[1].max_relative_discrepancy, rows[2].max_relative_discrepancy);
}

TEST(SolutionCsv, Header) {
  const auto net = birth_death();
  const auto sol = integrate(net, net.parameter_values(), vec({1.0}), {0.0, 0.0});
  std::ostringstream os;
  write_solution_csv(os, net, sol);
  EXPECT_EQ(os.str(), "t,X\n0,1\n");
}
