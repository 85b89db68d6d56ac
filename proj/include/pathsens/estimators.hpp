#pragma once

// Time-weighted ergodic estimators for the relative entropy rate (RER) and the
// pathwise Fisher information matrix (FIM) along SSA trajectories.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "pathsens/errors.hpp"
#include "pathsens/model.hpp"
#include "pathsens/ssa.hpp"

namespace pathsens {

enum class PerturbationMode { absolute, logarithmic };

struct Perturbation {
  PerturbationMode mode = PerturbationMode::logarithmic;
  std::vector<double> eps;

  static Perturbation logarithmic(std::vector<double> e) { return {PerturbationMode::logarithmic, std::move(e)}; }
  static Perturbation absolute(std::vector<double> e) { return {PerturbationMode::absolute, std::move(e)}; }

  /// Single-parameter log perturbation theta_k -> theta_k (1 + e).
  static Perturbation log_direction(std::size_t k, std::size_t num_params, double e) {
    std::vector<double> v(num_params, 0.0);
    v.at(k) = e;
    return logarithmic(std::move(v));
  }

  /// theta + eps, or theta . (1 + eps) in logarithmic mode.
  std::vector<double> apply(std::span<const double> theta) const {
    if (eps.size() != theta.size()) throw ValidationError("perturbation has wrong dimension");
    std::vector<double> out(theta.begin(), theta.end());
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (mode == PerturbationMode::logarithmic) {
        if (!(1.0 + eps[k] > 0.0)) throw ValidationError("logarithmic perturbation needs 1 + eps_k > 0");
        out[k] = theta[k] * (1.0 + eps[k]);
      } else {
        out[k] = theta[k] + eps[k];
      }
    }
    return out;
  }
};

/// Running Delta-t weighted sums of the RER and FIM integrands, with batch
/// means for standard errors. Single owner per trajectory; accumulators of
/// independent replicates merge by adding sums.
class SensitivityAccumulator {
 public:
  SensitivityAccumulator(const ReactionNetwork& net, std::span<const double> theta,
                         const std::optional<Perturbation>& pert, bool want_fim,
                         std::uint64_t batch_events = 10000)
      : net_(&net), theta_(theta.begin(), theta.end()), want_fim_(want_fim), batch_events_(batch_events) {
    const std::size_t k = net.num_parameters();
    if (theta_.size() != k) throw ValidationError("parameter vector has wrong length");
    if (batch_events_ < 1) throw ValidationError("batch_events must be at least 1");
    if (pert) {
      want_rer_ = true;
      perturbed_ = pert->apply(theta_);
      for (std::size_t j = 0; j < net.num_reactions(); ++j) {
        for (std::size_t p : net.reaction_parameters(j)) {
          if (perturbed_[p] != theta_[p]) {
            touched_.push_back(j);
            break;
          }
        }
      }
    }
    dim_ = static_cast<Eigen::Index>(want_fim_ ? k : 0);
    if (want_fim_) {
      // sums live on the entries that can be nonzero, so cost tracks sum |L_j|^2
      std::vector<std::pair<Eigen::Index, Eigen::Index>> entries;
      for (std::size_t j = 0; j < net.num_reactions(); ++j) {
        for (std::size_t r : net.reaction_parameters(j)) {
          for (std::size_t c : net.reaction_parameters(j)) {
            entries.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
          }
        }
      }
      std::sort(entries.begin(), entries.end());
      entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
      pattern_ = std::move(entries);
      slot_start_.push_back(0);
      for (std::size_t j = 0; j < net.num_reactions(); ++j) {
        for (std::size_t r : net.reaction_parameters(j)) {
          for (std::size_t c : net.reaction_parameters(j)) {
            const std::pair<Eigen::Index, Eigen::Index> rc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            slots_.push_back(static_cast<std::size_t>(std::lower_bound(pattern_.begin(), pattern_.end(), rc) -
                                                      pattern_.begin()));
          }
        }
        slot_start_.push_back(slots_.size());
      }
    }
    fim_acc_.assign(pattern_.size(), 0.0);
    fim_batch_start_.assign(pattern_.size(), 0.0);
    fim_s2_.assign(pattern_.size(), 0.0);
    fim_st_.assign(pattern_.size(), 0.0);
    std::size_t max_l = 0;
    for (std::size_t j = 0; j < net.num_reactions(); ++j) {
      max_l = std::max(max_l, net.reaction_parameters(j).size());
      const auto& terms = net.reactions()[j].propensity.terms;
      simple_.push_back(terms.size() == 1 && terms.front().kind == PropensityKind::mass_action);
    }
    if (want_fim_) {
      // single mass-action term: d log a / d log k = 1, one diagonal entry
      diag_.resize(net.num_reactions());
      for (std::size_t j = 0; j < net.num_reactions(); ++j) {
        if (!simple_[j]) continue;
        const double t = theta_[net.reaction_parameters(j).front()];
        diag_[j] = {slots_[slot_start_[j]], 1.0 / (t * t)};
      }
    }
    grad_.resize(max_l);
    scratch_.resize(net.num_reactions());
  }

  void add(const StepView& step) { add(step.state, step.propensities, step.dt); }

  /// Adds the integrands at state x held for dt. `a` holds a_j^theta(x).
  void add(std::span<const Count> x, std::span<const double> a, double dt) {
    if (!(dt > 0.0)) {
      if (dt == 0.0) return;
      throw ValidationError("holding time must be positive");
    }
    const ReactionNetwork& net = *net_;
    if (want_rer_) {
      double integrand = 0.0;
      for (std::size_t j : touched_) {
        const double aj = a[j];
        const double bj = propensity<Count>(net, perturbed_, x, j);
        if (aj == bj) continue;
        if (aj > 0.0) {
          if (!(bj > 0.0)) throw AbsoluteContinuityViolation(j);
          integrand += aj * (std::log(aj) - std::log(bj)) - (aj - bj);
        } else {
          integrand += bj;
        }
      }
      rer_sum_ += dt * integrand;
    }
    if (want_fim_) {
      for (std::size_t j = 0; j < net.num_reactions(); ++j) {
        const double aj = a[j];
        if (!(aj > 0.0)) continue;
        if (simple_[j]) {
          fim_acc_[diag_[j].slot] += dt * aj * diag_[j].inv_theta2;
          continue;
        }
        const auto& params = net.reaction_parameters(j);
        std::span<double> g(grad_.data(), params.size());
        const double av = propensity_and_gradient<Count>(net, theta_, x, j, g);
        const double w = dt / av;
        const std::size_t* slot = slots_.data() + slot_start_[j];
        for (std::size_t r = 0; r < params.size(); ++r) {
          for (std::size_t c = 0; c < params.size(); ++c) fim_acc_[*slot++] += w * g[r] * g[c];
        }
      }
    }
    total_time_ += dt;
    if (++events_in_batch_ >= batch_events_) close_batch();
  }

  /// Convenience overload that evaluates the propensities itself.
  void add(const State& x, double dt) {
    for (std::size_t j = 0; j < scratch_.size(); ++j) scratch_[j] = propensity(*net_, theta_, x, j);
    add(std::span<const Count>(x), scratch_, dt);
  }

  /// Closes the open batch; call once accumulation is over.
  void finish() {
    if (events_in_batch_ > 0) close_batch();
  }

  void merge(const SensitivityAccumulator& other) {
    rer_sum_ += other.rer_sum_;
    for (std::size_t e = 0; e < fim_acc_.size(); ++e) fim_acc_[e] += other.fim_acc_[e];
    total_time_ += other.total_time_;
    events_ += other.events_;
    batches_ += other.batches_;
    rer_s2_ += other.rer_s2_;
    rer_st_ += other.rer_st_;
    t2_ += other.t2_;
    if (want_fim_) {
      for (std::size_t e = 0; e < pattern_.size(); ++e) {
        fim_s2_[e] += other.fim_s2_[e];
        fim_st_[e] += other.fim_st_[e];
        fim_batch_start_[e] = fim_acc_[e];
      }
    }
    rer_batch_start_ = rer_sum_;
    time_batch_start_ = total_time_;
  }

  void count_event() { ++events_; }
  void set_events(std::uint64_t n) { events_ = n; }

  double total_time() const { return total_time_; }
  std::uint64_t events() const { return events_; }
  std::uint64_t batches() const { return batches_; }
  double rer_sum() const { return rer_sum_; }
  Eigen::MatrixXd fim_sum() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim_, dim_);
    for (std::size_t e = 0; e < pattern_.size(); ++e) out(pattern_[e].first, pattern_[e].second) = fim_acc_[e];
    return out;
  }
  bool has_rer() const { return want_rer_; }
  bool has_fim() const { return want_fim_; }

  double rer() const {
    require_time();
    return rer_sum_ / total_time_;
  }
  Eigen::MatrixXd fim() const {
    require_time();
    return fim_sum() / total_time_;
  }
  /// Batch-means standard error of rer(); NaN with fewer than two batches.
  double rer_stderr() const { return ratio_stderr(rer_sum_, rer_s2_, rer_st_); }
  Eigen::MatrixXd fim_stderr() const {
    // structural zeros have zero batch sums
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(dim_, dim_, ratio_stderr(0.0, 0.0, 0.0));
    for (std::size_t e = 0; e < pattern_.size(); ++e) {
      const auto [r, c] = pattern_[e];
      out(r, c) = ratio_stderr(fim_acc_[e], fim_s2_[e], fim_st_[e]);
    }
    return out;
  }

 private:
  void require_time() const {
    if (!(total_time_ > 0.0)) throw ValidationError("no time accumulated: estimator undefined for T = 0");
  }

  void close_batch() {
    const double tb = total_time_ - time_batch_start_;
    const double rb = rer_sum_ - rer_batch_start_;
    rer_s2_ += rb * rb;
    rer_st_ += rb * tb;
    t2_ += tb * tb;
    for (std::size_t e = 0; e < pattern_.size(); ++e) {
      const double now = fim_acc_[e];
      const double sb = now - fim_batch_start_[e];
      fim_s2_[e] += sb * sb;
      fim_st_[e] += sb * tb;
      fim_batch_start_[e] = now;
    }
    rer_batch_start_ = rer_sum_;
    time_batch_start_ = total_time_;
    ++batches_;
    events_in_batch_ = 0;
  }

  // Standard error of sum(S_b)/sum(T_b) from batch sums, ratio-estimator form.
  double ratio_stderr(double s, double s2, double st) const {
    if (batches_ < 2 || !(total_time_ > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double b = static_cast<double>(batches_);
    const double ratio = s / total_time_;
    const double tbar = total_time_ / b;
    const double ss = std::max(0.0, s2 - 2.0 * ratio * st + ratio * ratio * t2_);
    return std::sqrt(ss / (b * (b - 1.0))) / tbar;
  }

  const ReactionNetwork* net_;
  std::vector<double> theta_;
  std::vector<double> perturbed_;
  std::vector<std::size_t> touched_;
  std::vector<char> simple_;
  std::vector<double> grad_;
  std::vector<double> scratch_;
  bool want_rer_ = false;
  bool want_fim_ = false;
  std::uint64_t batch_events_;

  double rer_sum_ = 0.0;
  Eigen::Index dim_ = 0;
  double total_time_ = 0.0;
  std::uint64_t events_ = 0;

  std::uint64_t events_in_batch_ = 0;
  std::uint64_t batches_ = 0;
  double time_batch_start_ = 0.0;
  double rer_batch_start_ = 0.0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pattern_;
  std::vector<std::size_t> slots_;       // pattern index of each (r, c) in L_j x L_j, reaction-major
  std::vector<std::size_t> slot_start_;  // offsets into slots_
  std::vector<double> fim_acc_;
  struct DiagTerm {
    std::size_t slot = 0;
    double inv_theta2 = 0.0;
  };
  std::vector<DiagTerm> diag_;
  std::vector<double> fim_batch_start_;
  double rer_s2_ = 0.0;
  double rer_st_ = 0.0;
  double t2_ = 0.0;
  std::vector<double> fim_s2_;
  std::vector<double> fim_st_;
};

/// Adds the integrands at x held for dt.
inline void accumulate(SensitivityAccumulator& acc, const State& x, double dt) { acc.add(x, dt); }

struct SensitivityRun {
  SensitivityAccumulator accumulator;
  SimSummary summary;
};

/// One SSA pass accumulating RER (when `pert` is set) and FIM (when want_fim).
inline SensitivityRun run_sensitivity(const ReactionNetwork& net, std::span<const double> theta,
                                      const std::optional<Perturbation>& pert, bool want_fim, const State& x0,
                                      const SimConfig& cfg) {
  SensitivityAccumulator acc(net, theta, pert, want_fim, cfg.batch_events);
  SimSummary summary = simulate(net, theta, x0, cfg, [&](const StepView& s) { acc.add(s); });
  acc.finish();
  acc.set_events(summary.events);
  if (!(acc.total_time() > 0.0)) {
    if (summary.absorbed) throw AbsorbingState(summary.end_time);
    throw ValidationError("no time accumulated after burn-in");
  }
  return {std::move(acc), std::move(summary)};
}

struct RerResult {
  double value = 0.0;
  double std_error = 0.0;
  bool negative = false;  // below zero by more than three standard errors
  double total_time = 0.0;
  std::uint64_t events = 0;
  bool absorbed = false;
};

inline RerResult rer_estimate(const ReactionNetwork& net, std::span<const double> theta, const Perturbation& pert,
                              const State& x0, const SimConfig& cfg) {
  auto run = run_sensitivity(net, theta, pert, false, x0, cfg);
  RerResult r;
  r.value = run.accumulator.rer();
  r.std_error = run.accumulator.rer_stderr();
  r.negative = std::isfinite(r.std_error) ? r.value < -3.0 * r.std_error : r.value < 0.0;
  r.total_time = run.accumulator.total_time();
  r.events = run.accumulator.events();
  r.absorbed = run.summary.absorbed;
  return r;
}

struct FimResult {
  Eigen::MatrixXd matrix;  // natural scale
  Eigen::MatrixXd std_error;
  double total_time = 0.0;
  std::uint64_t events = 0;
  bool absorbed = false;
};

inline FimResult fim_estimate(const ReactionNetwork& net, std::span<const double> theta, const State& x0,
                              const SimConfig& cfg) {
  auto run = run_sensitivity(net, theta, std::nullopt, true, x0, cfg);
  return {run.accumulator.fim(), run.accumulator.fim_stderr(), run.accumulator.total_time(),
          run.accumulator.events(), run.summary.absorbed};
}

/// Entry (k, l) scaled by theta_k theta_l: FIM with respect to log-parameters.
inline Eigen::MatrixXd log_scale_fim(const Eigen::MatrixXd& fim, std::span<const double> theta) {
  if (fim.rows() != fim.cols() || static_cast<std::size_t>(fim.rows()) != theta.size()) {
    throw ValidationError("FIM and parameter vector dimensions differ");
  }
  Eigen::MatrixXd out = fim;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) *= theta[r] * theta[c];
  }
  return out;
}

/// Quadratic RER approximation 0.5 eps^T F eps.
inline double rer_from_fim(const Eigen::MatrixXd& fim_log, std::span<const double> eps) {
  if (fim_log.rows() != fim_log.cols() || static_cast<std::size_t>(fim_log.rows()) != eps.size()) {
    throw ValidationError("FIM and direction dimensions differ");
  }
  const Eigen::Map<const Eigen::VectorXd> e(eps.data(), static_cast<Eigen::Index>(eps.size()));
  return 0.5 * e.dot(fim_log * e);
}

struct EnsembleFim {
  Eigen::MatrixXd mean;    // natural scale, time-weighted over replicates
  Eigen::MatrixXd std_error; // replicate spread (batch means when replicates == 1)
  double total_time = 0.0;
  std::uint64_t events = 0;
  std::size_t replicates = 0;
};

/// Calls job(r) for r in [0, n) on a small worker pool; rethrows the first error.
template <class Job>
void for_each_replicate(std::size_t n, std::size_t threads, Job&& job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t r = 0; r < n; ++r) job(r);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t r = next.fetch_add(1);
        if (r >= n) return;
        try {
          job(r);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Independent replicates on streams (cfg.seed, r), merged in replicate order.
inline EnsembleFim ensemble_fim(const ReactionNetwork& net, std::span<const double> theta, const State& x0,
                                const SimConfig& cfg, std::size_t replicates, std::size_t threads = 0) {
  if (replicates < 1) throw ValidationError("replicates must be at least 1");
  std::vector<std::optional<SensitivityAccumulator>> parts(replicates);
  for_each_replicate(replicates, threads, [&](std::size_t r) {
    SimConfig c = cfg;
    c.replicate = r;
    parts[r].emplace(run_sensitivity(net, theta, std::nullopt, true, x0, c).accumulator);
  });
  EnsembleFim out;
  out.replicates = replicates;
  if (replicates == 1) {
    out.mean = parts[0]->fim();
    out.std_error = parts[0]->fim_stderr();
    out.total_time = parts[0]->total_time();
    out.events = parts[0]->events();
    return out;
  }
  const auto k = static_cast<Eigen::Index>(net.num_parameters());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd s2 = s;
  Eigen::MatrixXd st = s;
  double t2 = 0.0;
  for (const auto& p : parts) {
    s += p->fim_sum();
    s2.array() += p->fim_sum().array().square();
    st += p->fim_sum() * p->total_time();
    t2 += p->total_time() * p->total_time();
    out.total_time += p->total_time();
    out.events += p->events();
  }
  out.mean = s / out.total_time;
  const double b = static_cast<double>(replicates);
  const double tbar = out.total_time / b;
  out.std_error.resize(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) {
      const double ratio = out.mean(r, c);
      const double ss = std::max(0.0, s2(r, c) - 2.0 * ratio * st(r, c) + ratio * ratio * t2);
      out.std_error(r, c) = std::sqrt(ss / (b * (b - 1.0))) / tbar;
    }
  }
  return out;
}

}  // namespace pathsens
