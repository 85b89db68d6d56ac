#pragma once

// Uniform resampling of jump paths and periodogram power spectra.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <vector>

#include "pathsens/errors.hpp"
#include "pathsens/estimators.hpp"
#include "pathsens/model.hpp"
#include "pathsens/ssa.hpp"

namespace pathsens {

struct Spectrum {
  std::vector<double> frequencies;  // cycles per time unit
  std::vector<double> power;
  double sample_interval = 0.0;
};

namespace detail {

// the FFTW planner is not reentrant
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::size_t grid_points(double span, double dt) {
  return static_cast<std::size_t>(std::floor(span / dt * (1.0 + 1e-12))) + 1;
}

}  // namespace detail

/// Samples species `species` of the jump path at start + g*dt, g = 0, 1, ...
/// while the grid point lies inside the trajectory. Right-continuous: a grid
/// point at an event time sees the post-event state.
inline std::vector<double> resample(const Trajectory& traj, double dt, std::size_t species) {
  if (traj.states.empty()) throw ValidationError("empty trajectory");
  if (!(dt > 0.0)) throw ValidationError("resample interval must be positive");
  if (species >= traj.states.front().size()) throw ValidationError("species index out of range");
  const double span = traj.total_time();
  if (span < 2.0 * dt) throw ValidationError("trajectory shorter than two resample intervals");
  const std::size_t n = detail::grid_points(span, dt);
  std::vector<double> out(n);
  std::size_t i = 0;
  double next_event = traj.waits.empty() ? INFINITY : traj.waits[0];
  for (std::size_t g = 0; g < n; ++g) {
    const double tg = static_cast<double>(g) * dt;
    while (i < traj.waits.size() && next_event <= tg) {
      ++i;
      next_event = i < traj.waits.size() ? next_event + traj.waits[i] : INFINITY;
    }
    out[g] = static_cast<double>(traj.states[i][species]);
  }
  return out;
}

/// Plain one-sided periodogram, no window or taper: |X_k|^2 for k = 0..n/2 with
/// the bins that have a mirror at n - k counted twice, so the total equals
/// the sum of |X_k|^2 over the full DFT (Parseval).
inline Spectrum periodogram(std::span<const double> series, double dt) {
  if (series.empty()) throw ValidationError("empty series");
  if (!(dt > 0.0)) throw ValidationError("resample interval must be positive");
  const std::size_t n = series.size();
  const std::size_t bins = n / 2 + 1;
  std::vector<double> in(series.begin(), series.end());
  std::vector<std::complex<double>> out(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  Spectrum s;
  s.sample_interval = dt;
  s.frequencies.resize(bins);
  s.power.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    s.frequencies[k] = static_cast<double>(k) / (static_cast<double>(n) * dt);
    const bool mirrored = k != 0 && 2 * k != n;
    s.power[k] = (mirrored ? 2.0 : 1.0) * std::norm(out[k]);
  }
  return s;
}

inline Spectrum resample_and_psd(const Trajectory& traj, double dt, std::size_t species) {
  const auto series = resample(traj, dt, species);
  return periodogram(series, dt);
}

/// Pointwise mean, summed in the given order.
inline Spectrum mean_spectrum(std::span<const Spectrum> spectra) {
  if (spectra.empty()) throw ValidationError("no spectra to average");
  Spectrum m = spectra.front();
  for (std::size_t r = 1; r < spectra.size(); ++r) {
    if (spectra[r].power.size() != m.power.size()) throw ValidationError("spectra have different lengths");
    for (std::size_t k = 0; k < m.power.size(); ++k) m.power[k] += spectra[r].power[k];
  }
  for (double& p : m.power) p /= static_cast<double>(spectra.size());
  return m;
}

inline double l1_distance(const Spectrum& a, const Spectrum& b) {
  if (a.power.size() != b.power.size()) throw ValidationError("spectra have different lengths");
  double d = 0.0;
  for (std::size_t k = 0; k < a.power.size(); ++k) d += std::abs(a.power[k] - b.power[k]);
  return d;
}

/// Summed over species.
inline double l1_distance(std::span<const Spectrum> a, std::span<const Spectrum> b) {
  if (a.size() != b.size()) throw ValidationError("spectrum sets have different sizes");
  double d = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) d += l1_distance(a[s], b[s]);
  return d;
}

/// Replicate-averaged PSD of each listed species. Replicate r runs on stream
/// (cfg.seed, r) with the horizon cfg.t_end, so every replicate shares a grid.
inline std::vector<Spectrum> ensemble_psd(const ReactionNetwork& net, std::span<const double> theta, const State& x0,
                                          SimConfig cfg, std::size_t replicates, double dt,
                                          std::span<const std::size_t> species, std::size_t threads = 0) {
  if (!cfg.t_end) throw ValidationError("PSD runs need a time horizon");
  if (replicates < 1) throw ValidationError("need at least one replicate");
  if (species.empty()) throw ValidationError("no species selected");
  for (std::size_t s : species) {
    if (s >= net.num_species()) throw ValidationError("species index out of range");
  }
  cfg.max_events.reset();
  cfg.record_states = true;
  std::vector<std::vector<Spectrum>> per_rep(replicates);
  for_each_replicate(replicates, threads, [&](std::size_t r) {
    SimConfig c = cfg;
    c.replicate = r;
    const Trajectory traj = record_trajectory(net, theta, x0, c);
    per_rep[r].reserve(species.size());
    for (std::size_t s : species) per_rep[r].push_back(resample_and_psd(traj, dt, s));
  });
  std::vector<Spectrum> out;
  for (std::size_t i = 0; i < species.size(); ++i) {
    std::vector<Spectrum> column;
    column.reserve(replicates);
    for (std::size_t r = 0; r < replicates; ++r) column.push_back(std::move(per_rep[r][i]));
    out.push_back(mean_spectrum(column));
  }
  return out;
}

}  // namespace pathsens
