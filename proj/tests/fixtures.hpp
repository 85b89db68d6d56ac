#pragma once

// Shared test networks and closed-form oracles.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fixtures {

// Nine reactions over seven parameters with dependencies
// R1:{t1} R2:{t1,t2} R3:{t2,t3} R4:{t4} R5:{t4,t5} R6:{t5} R7:{t6} R8:{t7} R9:{t7}
inline const std::string structure_toy = R"(species X initial 5
species Y initial 5
param t1 1
param t2 2
param t3 3
param t4 4
param t5 5
param t6 6
param t7 7
reaction R1: 0 -> X @ massaction t1
reaction R2: X -> Y @ massaction t1 + massaction t2
reaction R3: Y -> 0 @ massaction t2 + massaction t3
reaction R4: 0 -> Y @ massaction t4
reaction R5: Y -> X @ massaction t4 + massaction t5
reaction R6: X -> 0 @ massaction t5
reaction R7: X + Y -> 0 @ massaction t6
reaction R8: 0 -> X + Y @ massaction t7
reaction R9: 2*X -> 0 @ massaction t7
)";

// Stationary Poisson law of the birth/death process has log-parameter Fisher
// information (k1/k2) [[1,-1],[-1,1]]: only the ratio is identifiable.
inline Eigen::Matrix2d birth_death_equilibrium_fim(double k1, double k2) {
  Eigen::Matrix2d m;
  m << 1.0, -1.0, -1.0, 1.0;
  return (k1 / k2) * m;
}

// Two-state chain 0 <-> 1 with rates up (0 -> 1) and down (1 -> 0).
struct TwoState {
  double up, down;
  double p1() const { return up / (up + down); }
  double p0() const { return down / (up + down); }
};

// KL(P || Q) between the stationary laws.
inline double stationary_kl(const TwoState& p, const TwoState& q) {
  // clamp rounding below zero when the laws coincide
  return std::max(0.0, p.p0() * std::log(p.p0() / q.p0()) + p.p1() * std::log(p.p1() / q.p1()));
}

// Relative entropy rate between the stationary path laws:
// sum over states of pi(x) sum_j [a log(a/a') - (a - a')].
inline double path_rer(const TwoState& p, const TwoState& q) {
  auto term = [](double a, double b) { return a * std::log(a / b) - (a - b); };
  return p.p0() * term(p.up, q.up) + p.p1() * term(p.down, q.down);
}

}  // namespace fixtures
