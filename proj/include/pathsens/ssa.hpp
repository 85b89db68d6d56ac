#pragma once

// Exact stochastic simulation (Gillespie direct method).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pathsens/errors.hpp"
#include "pathsens/model.hpp"

namespace pathsens {

/// 64-bit generator with one independent stream per (master seed, replicate).
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  /// Uniform on the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

struct SimConfig {
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::optional<double> t_end;               // simulated time horizon
  std::optional<std::uint64_t> max_events;   // events after burn-in
  double burn_in = 0.0;
  bool record_states = false;
  std::uint64_t batch_events = 10000;        // batch length for batch-means error bars

  void validate() const {
    if (!t_end && !max_events) throw ValidationError("simulation needs t_end or an event budget");
    if (t_end && !(*t_end > 0.0)) throw ValidationError("t_end must be positive");
    if (max_events && *max_events < 1) throw ValidationError("event budget must be at least 1");
    if (!(burn_in >= 0.0) || !std::isfinite(burn_in)) throw ValidationError("burn_in must be a nonnegative real");
    if (t_end && burn_in >= *t_end) throw ValidationError("burn_in must be smaller than t_end");
    if (batch_events < 1) throw ValidationError("batch_events must be at least 1");
  }
};

/// Embedded chain of one realization after burn-in. `final_hold` is the
/// censored residence in the last state when the run stops on a time horizon.
struct Trajectory {
  std::vector<State> states;
  std::vector<double> waits;
  std::vector<std::size_t> fired;
  double start_time = 0.0;
  double final_hold = 0.0;

  double total_time() const {
    double t = final_hold;
    for (double w : waits) t += w;
    return t;
  }
};

struct SimSummary {
  double total_time = 0.0;  // accumulated (post burn-in) time
  double end_time = 0.0;    // absolute simulated time reached
  std::uint64_t events = 0; // reactions fired after burn-in
  bool absorbed = false;
  std::optional<Trajectory> trajectory;
};

/// Everything a per-step consumer sees: the state held for `dt` time units,
/// the propensities at that state and the reaction that ended the hold (none
/// when the hold was cut by the time horizon).
struct StepView {
  std::span<const Count> state;
  std::span<const double> propensities;
  double total_rate = 0.0;
  double dt = 0.0;
  std::optional<std::size_t> fired;
};

namespace detail {

inline double fill_propensities(const ReactionNetwork& net, std::span<const double> theta, const State& x,
                                std::vector<double>& a) {
  double a0 = 0.0;
  const std::span<const Count> xs(x);
  for (std::size_t j = 0; j < a.size(); ++j) {
    a[j] = propensity<Count>(net, theta, xs, j);
    a0 += a[j];
  }
  return a0;
}

/// First j with u * a0 < a_1 + ... + a_j; the last positive reaction absorbs
/// round-off at the top end.
inline std::size_t select_reaction(std::span<const double> a, double a0, double u) {
  const double target = u * a0;
  double partial = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j] <= 0.0) continue;
    partial += a[j];
    last_positive = j;
    if (target < partial) return j;
  }
  return last_positive;
}

}  // namespace detail

struct SsaStep {
  double dt = 0.0;
  std::size_t reaction = 0;
  State next;
};

/// One step of the direct method. Throws AbsorbingState when a_0(x) = 0.
inline SsaStep ssa_step(const State& x, const ReactionNetwork& net, std::span<const double> theta, Rng& rng) {
  std::vector<double> a(net.num_reactions());
  const double a0 = detail::fill_propensities(net, theta, x, a);
  if (!(a0 > 0.0)) throw AbsorbingState(0.0);
  const double u1 = rng.uniform_open();
  const double u2 = rng.uniform_open();
  SsaStep step;
  step.dt = -std::log(u1) / a0;
  step.reaction = detail::select_reaction(a, a0, u2);
  step.next = apply_reaction(x, net, step.reaction);
  return step;
}

/// Runs the direct method from x0 until the time horizon or event budget and
/// feeds every post-burn-in hold to `sink(const StepView&)`. Identical inputs
/// give identical output bit for bit.
template <class Sink>
SimSummary simulate(const ReactionNetwork& net, std::span<const double> theta, const State& x0,
                    const SimConfig& cfg, Sink&& sink) {
  cfg.validate();
  if (x0.size() != net.num_species()) throw ValidationError("initial state has wrong length");
  for (Count c : x0) {
    if (c < 0) throw ValidationError("initial state has a negative count");
  }
  if (theta.size() != net.num_parameters()) throw ValidationError("parameter vector has wrong length");

  Rng rng(cfg.seed, cfg.replicate);
  State x = x0;
  std::vector<double> a(net.num_reactions());
  SimSummary out;
  if (cfg.record_states) out.trajectory.emplace();

  double t = 0.0;
  bool recording = cfg.burn_in <= 0.0;
  if (recording && out.trajectory) {
    out.trajectory->states.push_back(x);
    out.trajectory->start_time = 0.0;
  }
  const double horizon = cfg.t_end.value_or(std::numeric_limits<double>::infinity());

  while (true) {
    const double a0 = detail::fill_propensities(net, theta, x, a);
    if (!(a0 > 0.0)) {
      out.absorbed = true;
      break;
    }
    const double u1 = rng.uniform_open();
    const double u2 = rng.uniform_open();
    const double dt = -std::log(u1) / a0;
    const std::size_t j = detail::select_reaction(a, a0, u2);
    const double t_next = t + dt;

    if (t_next >= horizon) {
      const double w = horizon - std::max(t, cfg.burn_in);
      if (w > 0.0) {
        if (!recording && out.trajectory) {
          out.trajectory->states.push_back(x);
          out.trajectory->start_time = cfg.burn_in;
        }
        sink(StepView{x, a, a0, w, std::nullopt});
        out.total_time += w;
        if (out.trajectory) out.trajectory->final_hold = w;
      }
      t = horizon;
      break;
    }
    if (t_next > cfg.burn_in) {
      if (!recording) {
        recording = true;
        if (out.trajectory) {
          out.trajectory->states.push_back(x);
          out.trajectory->start_time = cfg.burn_in;
        }
      }
      const double w = t_next - std::max(t, cfg.burn_in);
      sink(StepView{x, a, a0, w, j});
      out.total_time += w;
      ++out.events;
      apply_reaction_in_place(x, net, j);
      if (out.trajectory) {
        out.trajectory->waits.push_back(w);
        out.trajectory->fired.push_back(j);
        out.trajectory->states.push_back(x);
      }
    } else {
      apply_reaction_in_place(x, net, j);
    }
    t = t_next;
    if (cfg.max_events && out.events >= *cfg.max_events) break;
  }
  out.end_time = t;
  return out;
}

template <class Sink>
SimSummary simulate(const ReactionNetwork& net, const SimConfig& cfg, Sink&& sink) {
  return simulate(net, std::span<const double>(net.parameter_values()), net.initial_counts(), cfg,
                  std::forward<Sink>(sink));
}

inline Trajectory record_trajectory(const ReactionNetwork& net, std::span<const double> theta, const State& x0,
                                    SimConfig cfg) {
  cfg.record_states = true;
  auto summary = simulate(net, theta, x0, cfg, [](const StepView&) {});
  return std::move(*summary.trajectory);
}

/// CSV dump, one row per event (sample_interval <= 0) or per grid point.
inline void write_trajectory_csv(std::ostream& os, const ReactionNetwork& net, const Trajectory& traj,
                                 double sample_interval = 0.0) {
  os << 't';
  for (const auto& s : net.species_names()) os << ',' << s;
  os << '\n';
  os.precision(17);
  auto row = [&](double t, const State& x) {
    os << t;
    for (Count c : x) os << ',' << c;
    os << '\n';
  };
  if (traj.states.empty()) return;
  if (sample_interval <= 0.0) {
    double t = traj.start_time;
    row(t, traj.states[0]);
    for (std::size_t i = 0; i < traj.waits.size(); ++i) {
      t += traj.waits[i];
      row(t, traj.states[i + 1]);
    }
    return;
  }
  const double end = traj.start_time + traj.total_time();
  std::size_t i = 0;
  double event_time = traj.start_time + (traj.waits.empty() ? 0.0 : traj.waits[0]);
  for (std::size_t g = 0;; ++g) {
    const double tg = traj.start_time + static_cast<double>(g) * sample_interval;
    if (tg > end) break;
    while (i < traj.waits.size() && event_time <= tg) {
      ++i;
      if (i < traj.waits.size()) event_time += traj.waits[i];
    }
    row(tg, traj.states[i]);
  }
}

}  // namespace pathsens
