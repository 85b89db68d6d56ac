#pragma once

// Mean-field (reaction rate equation) backend: a stiff Rosenbrock integrator
// and FIM/RER estimators that time-average propensities along the
// deterministic path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pathsens/errors.hpp"
#include "pathsens/estimators.hpp"
#include "pathsens/model.hpp"

namespace pathsens {

/// (dx/dt)_i = sum_j nu_ij a_j(x) with the real-valued propensity extension.
inline Eigen::VectorXd reaction_rate_rhs(const ReactionNetwork& net, std::span<const double> theta,
                                         const Eigen::VectorXd& x) {
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(x.size());
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  for (std::size_t j = 0; j < net.num_reactions(); ++j) {
    const double a = propensity<double>(net, theta, xs, j);
    if (a == 0.0) continue;
    for (auto [i, d] : net.state_change(j)) dx(i) += d * a;
  }
  return dx;
}

/// d(rhs)/dx assembled from analytic propensity state derivatives.
inline Eigen::MatrixXd reaction_rate_jacobian(const ReactionNetwork& net, std::span<const double> theta,
                                              const Eigen::VectorXd& x) {
  const auto n = x.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> column(static_cast<std::size_t>(n));
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < net.num_reactions(); ++j) {
    if (net.state_change(j).empty()) continue;
    propensity_state_gradient(net, theta, xs, j, column);
    for (std::size_t s = 0; s < column.size(); ++s) {
      if (column[s] == 0.0) continue;
      for (auto [i, d] : net.state_change(j)) jac(i, s) += d * column[s];
    }
  }
  return jac;
}

struct IntegratorOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  std::optional<double> max_step;  // default: window length / 100
  double initial_step = 0.0;       // 0 picks one from the local time scale
  std::uint64_t max_steps = 10'000'000;

  static IntegratorOptions tolerances(double rel, double abs) {
    IntegratorOptions o;
    o.rel_tol = rel;
    o.abs_tol = abs;
    return o;
  }
};

struct Window {
  double begin = 0.0;
  double end = 0.0;
};

/// Accepted integrator samples over a window. Step i spans [times[i], times[i+1]].
struct OdeSolution {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  Window window;
  std::uint64_t steps = 0;
  std::uint64_t rejected = 0;
  std::uint64_t clipped = 0;  // negative components set to zero
  double max_error_ratio = 0.0;
  double rhs_norm_at_start = 0.0;  // ||dx/dt|| at the window start

  std::size_t size() const { return times.size(); }
  const Eigen::VectorXd& final_state() const { return states.back(); }
};

namespace detail {

// Fourth-order L-stable Rosenbrock scheme with embedded third-order error
// estimate (Shampine / Kaps-Rentrop family coefficients).
struct Rosenbrock4Coefficients {
  static constexpr double gamma = 0.25;
  static constexpr double c21 = -0.5668800000000000e+01, a21 = 0.1544000000000000e+01;
  static constexpr double c31 = -0.2430093356833875e+01, c32 = -0.2063599157091915e+00;
  static constexpr double a31 = 0.9466785280815826e+00, a32 = 0.2557011698983284e+00;
  static constexpr double c41 = -0.1073529058151375e+00, c42 = -0.9594562251023355e+01;
  static constexpr double c43 = -0.2047028614809616e+02;
  static constexpr double a41 = 0.3314825187068521e+01, a42 = 0.2896124015972201e+01;
  static constexpr double a43 = 0.9986419139977817e+00;
  static constexpr double c51 = 0.7496443313967647e+01, c52 = -0.1024680431464352e+02;
  static constexpr double c53 = -0.3399990352819905e+02, c54 = 0.1170890893206160e+02;
  static constexpr double a51 = 0.1221224509226641e+01, a52 = 0.6019134481288629e+01;
  static constexpr double a53 = 0.1253708332932087e+02, a54 = -0.6878860361058950e+00;
  static constexpr double c61 = 0.8083246795921522e+01, c62 = -0.7981132988064893e+01;
  static constexpr double c63 = -0.3152159432874371e+02, c64 = 0.1631930543123136e+02;
  static constexpr double c65 = -0.6058818238834054e+01;
};

class RosenbrockStepper {
 public:
  RosenbrockStepper(const ReactionNetwork& net, std::span<const double> theta) : net_(net), theta_(theta) {}

  /// One trial step of size h from x. Returns the new state and writes the
  /// local error estimate into err.
  Eigen::VectorXd step(const Eigen::VectorXd& x, double h, Eigen::VectorXd& err) {
    using C = Rosenbrock4Coefficients;
    const auto n = x.size();
    const Eigen::VectorXd f0 = reaction_rate_rhs(net_, theta_, x);
    Eigen::MatrixXd w = -reaction_rate_jacobian(net_, theta_, x);
    w.diagonal().array() += 1.0 / (C::gamma * h);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(w);

    const Eigen::VectorXd g1 = lu.solve(f0);
    Eigen::VectorXd f = rhs(x + C::a21 * g1);
    const Eigen::VectorXd g2 = lu.solve(f + C::c21 * g1 / h);
    f = rhs(x + C::a31 * g1 + C::a32 * g2);
    const Eigen::VectorXd g3 = lu.solve(f + (C::c31 * g1 + C::c32 * g2) / h);
    f = rhs(x + C::a41 * g1 + C::a42 * g2 + C::a43 * g3);
    const Eigen::VectorXd g4 = lu.solve(f + (C::c41 * g1 + C::c42 * g2 + C::c43 * g3) / h);
    Eigen::VectorXd xt = x + C::a51 * g1 + C::a52 * g2 + C::a53 * g3 + C::a54 * g4;
    f = rhs(xt);
    const Eigen::VectorXd g5 = lu.solve(f + (C::c51 * g1 + C::c52 * g2 + C::c53 * g3 + C::c54 * g4) / h);
    xt += g5;
    f = rhs(xt);
    err = lu.solve(f + (C::c61 * g1 + C::c62 * g2 + C::c63 * g3 + C::c64 * g4 + C::c65 * g5) / h);
    (void)n;
    return xt + err;
  }

 private:
  Eigen::VectorXd rhs(const Eigen::VectorXd& x) const { return reaction_rate_rhs(net_, theta_, x); }

  const ReactionNetwork& net_;
  std::span<const double> theta_;
};

inline std::uint64_t clip_negative(Eigen::VectorXd& x) {
  std::uint64_t n = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) < 0.0) {
      x(i) = 0.0;
      ++n;
    }
  }
  return n;
}

}  // namespace detail

/// Integrates the reaction rate equations from x0 at t = 0 and records every
/// accepted step inside the window. Step ends are aligned with the window
/// boundaries, so the first sample is at window.begin and the last at window.end.
inline OdeSolution integrate(const ReactionNetwork& net, std::span<const double> theta, const Eigen::VectorXd& x0,
                             Window window, const IntegratorOptions& opts = {}) {
  if (!(window.begin >= 0.0) || !(window.end >= window.begin)) throw ValidationError("window must satisfy 0 <= a <= b");
  if (!(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0)) throw ValidationError("tolerances must be positive");
  if (static_cast<std::size_t>(x0.size()) != net.num_species()) throw ValidationError("initial state has wrong length");

  OdeSolution sol;
  sol.window = window;
  Eigen::VectorXd x = x0;
  sol.clipped += detail::clip_negative(x);
  double t = 0.0;
  const double span_len = window.end - window.begin;
  const double h_max = opts.max_step.value_or(span_len > 0.0 ? span_len / 100.0 : std::max(window.begin, 1.0) / 100.0);

  detail::RosenbrockStepper stepper(net, theta);
  double h = opts.initial_step;
  if (!(h > 0.0)) {
    const Eigen::VectorXd f = reaction_rate_rhs(net, theta, x);
    const double scale = (opts.abs_tol + opts.rel_tol * x.cwiseAbs().array()).matrix().norm() /
                         std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, x.size())));
    const double rate = f.norm() / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, x.size())));
    h = rate > 0.0 ? 0.01 * std::pow(scale / rate, 1.0) : h_max;
    h = std::clamp(h, 1e-12, h_max);
  }

  auto record = [&](double time) {
    sol.times.push_back(time);
    sol.states.push_back(x);
  };
  if (window.begin == 0.0) {
    record(0.0);
    sol.rhs_norm_at_start = reaction_rate_rhs(net, theta, x).norm();
  }
  if (window.end == 0.0) return sol;

  Eigen::VectorXd err(x.size());
  while (t < window.end) {
    if (sol.steps + sol.rejected >= opts.max_steps) throw IntegrationError("step budget exhausted", t);
    const double target = t < window.begin ? window.begin : window.end;
    bool hit = false;
    double h_try = std::min(h, h_max);
    if (t + h_try >= target || target - (t + h_try) < 1e-12 * std::max(1.0, target)) {
      h_try = target - t;
      hit = true;
    }
    if (!(h_try > 1e-14 * std::max(1.0, std::abs(t)))) throw IntegrationError("step size underflow", t);

    Eigen::VectorXd x_new = stepper.step(x, h_try, err);
    if (!x_new.allFinite() || !err.allFinite()) {
      ++sol.rejected;
      h = 0.25 * h_try;
      continue;
    }
    double ratio = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(x(i)), std::abs(x_new(i)));
      ratio = std::max(ratio, std::abs(err(i)) / sc);
    }
    if (ratio > 1.0) {
      ++sol.rejected;
      h = h_try * std::max(0.2, 0.9 * std::pow(ratio, -0.25));
      continue;
    }
    ++sol.steps;
    sol.max_error_ratio = std::max(sol.max_error_ratio, ratio);
    t = hit ? target : t + h_try;
    x = std::move(x_new);
    sol.clipped += detail::clip_negative(x);
    const double grow = ratio > 0.0 ? std::min(5.0, 0.9 * std::pow(ratio, -0.25)) : 5.0;
    if (!hit) h = h_try * grow;
    else h = std::max(h, h_try * grow);

    if (t >= window.begin) {
      if (sol.times.empty()) {
        record(window.begin);
        sol.rhs_norm_at_start = reaction_rate_rhs(net, theta, x).norm();
      } else {
        record(t);
      }
    }
  }
  return sol;
}

inline Eigen::VectorXd to_real_state(const State& x) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<double>(x[i]);
  return v;
}

enum class WindowRegime { steady, transient };

/// Log-scale FIM over the window: left-endpoint weights over the integrator's
/// accepted steps. A zero-width window evaluates the integrand at its single sample.
inline Eigen::MatrixXd fim_meanfield(const ReactionNetwork& net, std::span<const double> theta,
                                     const OdeSolution& sol) {
  if (sol.times.empty()) throw ValidationError("empty ODE solution");
  const std::size_t k = net.num_parameters();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  std::size_t max_l = 0;
  for (std::size_t j = 0; j < net.num_reactions(); ++j) max_l = std::max(max_l, net.reaction_parameters(j).size());
  std::vector<double> grad(max_l);

  auto add = [&](const Eigen::VectorXd& x, double w) {
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t j = 0; j < net.num_reactions(); ++j) {
      const auto& params = net.reaction_parameters(j);
      std::span<double> g(grad.data(), params.size());
      const double a = propensity_and_gradient<double>(net, theta, xs, j, g);
      if (!(a > 0.0)) continue;
      for (std::size_t r = 0; r < params.size(); ++r) {
        const double gr = w * theta[params[r]] * g[r] / a;
        for (std::size_t c = r; c < params.size(); ++c) {
          const double v = gr * theta[params[c]] * g[c];
          f(params[r], params[c]) += v;
          if (c != r) f(params[c], params[r]) += v;
        }
      }
    }
  };

  const double total = sol.times.back() - sol.times.front();
  if (sol.times.size() == 1 || !(total > 0.0)) {
    add(sol.states.front(), 1.0);
    return f;
  }
  for (std::size_t i = 0; i + 1 < sol.times.size(); ++i) add(sol.states[i], sol.times[i + 1] - sol.times[i]);
  return f / total;
}

/// Time-averaged RER integrand along the deterministic path (same quadrature).
inline double rer_meanfield(const ReactionNetwork& net, std::span<const double> theta, const Perturbation& pert,
                            const OdeSolution& sol) {
  if (sol.times.empty()) throw ValidationError("empty ODE solution");
  const std::vector<double> other = pert.apply(theta);
  auto integrand = [&](const Eigen::VectorXd& x) {
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    double v = 0.0;
    for (std::size_t j = 0; j < net.num_reactions(); ++j) {
      const double a = propensity<double>(net, theta, xs, j);
      const double b = propensity<double>(net, other, xs, j);
      if (a == b) continue;
      if (a > 0.0) {
        if (!(b > 0.0)) throw AbsoluteContinuityViolation(j);
        v += a * (std::log(a) - std::log(b)) - (a - b);
      } else {
        v += b;
      }
    }
    return v;
  };
  const double total = sol.times.back() - sol.times.front();
  if (sol.times.size() == 1 || !(total > 0.0)) return integrand(sol.states.front());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < sol.times.size(); ++i) s += (sol.times[i + 1] - sol.times[i]) * integrand(sol.states[i]);
  return s / total;
}

inline void write_solution_csv(std::ostream& os, const ReactionNetwork& net, const OdeSolution& sol) {
  os << 't';
  for (const auto& s : net.species_names()) os << ',' << s;
  os << '\n';
  os.precision(17);
  for (std::size_t i = 0; i < sol.times.size(); ++i) {
    os << sol.times[i];
    for (Eigen::Index s = 0; s < sol.states[i].size(); ++s) os << ',' << sol.states[i](s);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// SSA versus mean-field consistency under population scaling

/// Scales populations by s: counts times s, zeroth-order rates times s,
/// order-r mass-action rates divided by s^(r-1), Michaelis-Menten vmax and km times s.
struct ScaledModel {
  ReactionNetwork net;
  State x0;
};

inline ScaledModel scale_population(const ReactionNetwork& net, const State& x0, double scale) {
  if (!(scale > 0.0)) throw ValidationError("population scale must be positive");
  std::vector<double> theta = net.parameter_values();
  std::vector<int> power(theta.size(), 0);
  std::vector<char> assigned(theta.size(), 0);
  auto set_power = [&](std::size_t p, int e) {
    if (assigned[p] && power[p] != e) throw ValidationError("parameter shared by reactions of different order; cannot scale");
    assigned[p] = 1;
    power[p] = e;
  };
  for (const auto& r : net.reactions()) {
    for (const auto& t : r.propensity.terms) {
      int order = 0;
      for (const auto& f : t.factors) order += f.multiplicity;
      if (t.kind == PropensityKind::mass_action) {
        set_power(t.rate, 1 - order);
      } else {
        set_power(t.rate, 1 - order);
        set_power(t.km, 1);
      }
    }
  }
  for (std::size_t p = 0; p < theta.size(); ++p) theta[p] *= std::pow(scale, power[p]);
  State x = x0;
  for (auto& c : x) c = static_cast<Count>(std::llround(static_cast<double>(c) * scale));
  return {net.with_parameters(theta).with_initial_counts(x), x};
}

struct ScaleDiscrepancy {
  double scale = 1.0;
  Eigen::VectorXd ssa_diagonal;         // log scale, median run
  Eigen::VectorXd meanfield_diagonal;   // log scale
  Eigen::VectorXd relative_discrepancy; // per entry, median over seeds
  double max_relative_discrepancy = 0.0;
};

struct ConsistencyOptions {
  std::vector<double> scales{1.0, 10.0, 100.0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double burn_in = 50.0;
  double horizon = 500.0;  // accumulated time per SSA run
  IntegratorOptions integrator = IntegratorOptions::tolerances(1e-8, 1e-10);
};

/// Per scale: |SSA FIM - mean-field FIM| / mean-field FIM on the diagonal
/// (log scale), SSA over [burn_in, burn_in + horizon] and the ODE over the same window.
inline std::vector<ScaleDiscrepancy> ssa_vs_meanfield_consistency(const ReactionNetwork& net, const State& x0,
                                                                   const ConsistencyOptions& opts = {}) {
  std::vector<ScaleDiscrepancy> out;
  for (double scale : opts.scales) {
    const ScaledModel sm = scale_population(net, x0, scale);
    const auto& theta = sm.net.parameter_values();
    const OdeSolution sol = integrate(sm.net, theta, to_real_state(sm.x0),
                                      {opts.burn_in, opts.burn_in + opts.horizon}, opts.integrator);
    const Eigen::VectorXd mf = fim_meanfield(sm.net, theta, sol).diagonal();
    const auto k = mf.size();
    std::vector<Eigen::VectorXd> ssa_diags;
    std::vector<Eigen::VectorXd> rel;
    for (std::uint64_t seed : opts.seeds) {
      SimConfig cfg;
      cfg.seed = seed;
      cfg.burn_in = opts.burn_in;
      cfg.t_end = opts.burn_in + opts.horizon;
      const FimResult fr = fim_estimate(sm.net, theta, sm.x0, cfg);
      const Eigen::VectorXd d = log_scale_fim(fr.matrix, theta).diagonal();
      ssa_diags.push_back(d);
      Eigen::VectorXd r(k);
      for (Eigen::Index i = 0; i < k; ++i) r(i) = mf(i) != 0.0 ? std::abs(d(i) - mf(i)) / std::abs(mf(i)) : std::abs(d(i));
      rel.push_back(r);
    }
    ScaleDiscrepancy sd;
    sd.scale = scale;
    sd.meanfield_diagonal = mf;
    sd.relative_discrepancy.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      std::vector<double> v;
      for (const auto& r : rel) v.push_back(r(i));
      std::sort(v.begin(), v.end());
      sd.relative_discrepancy(i) = v[v.size() / 2];
    }
    // Representative SSA diagonal: the run with median max discrepancy.
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t s = 0; s < rel.size(); ++s) order.emplace_back(rel[s].maxCoeff(), s);
    std::sort(order.begin(), order.end());
    sd.ssa_diagonal = ssa_diags[order[order.size() / 2].second];
    sd.max_relative_discrepancy = sd.relative_discrepancy.maxCoeff();
    out.push_back(std::move(sd));
  }
  return out;
}

}  // namespace pathsens
