#pragma once

// Reaction networks and propensity evaluation.
//
// A propensity is a sum of one or more terms. Each term is either
//   mass action:      theta_rate * prod_s binom(x_s, m_s)
//   Michaelis-Menten: theta_vmax * x_A / (theta_km + x_A) * prod_s binom(x_s, m_s)
// where the trailing product runs over the term's factors (the reactants for
// mass action, optional modifier species for Michaelis-Menten). Integer states
// use exact binomials; real states use the falling-factorial extension.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pathsens/errors.hpp"

namespace pathsens {

using Count = std::int64_t;
using State = std::vector<Count>;

struct SpeciesCount {
  std::size_t species = 0;
  int multiplicity = 1;

  friend bool operator==(const SpeciesCount&, const SpeciesCount&) = default;
};

enum class PropensityKind { mass_action, michaelis_menten };

struct PropensityTerm {
  PropensityKind kind = PropensityKind::mass_action;
  std::size_t rate = 0;       // rate constant, or vmax for Michaelis-Menten
  std::size_t km = 0;         // Michaelis-Menten only
  std::size_t substrate = 0;  // Michaelis-Menten only
  std::vector<SpeciesCount> factors;

  friend bool operator==(const PropensityTerm&, const PropensityTerm&) = default;
};

struct PropensityModel {
  std::vector<PropensityTerm> terms;

  friend bool operator==(const PropensityModel&, const PropensityModel&) = default;

  static PropensityModel mass_action(std::size_t rate, std::vector<SpeciesCount> reactants) {
    return {{PropensityTerm{PropensityKind::mass_action, rate, 0, 0, std::move(reactants)}}};
  }
  static PropensityModel michaelis_menten(std::size_t vmax, std::size_t km, std::size_t substrate,
                                          std::vector<SpeciesCount> modifiers = {}) {
    return {{PropensityTerm{PropensityKind::michaelis_menten, vmax, km, substrate, std::move(modifiers)}}};
  }
};

struct Reaction {
  std::string name;
  std::vector<SpeciesCount> reactants;
  std::vector<SpeciesCount> products;
  PropensityModel propensity;

  friend bool operator==(const Reaction&, const Reaction&) = default;
};

namespace detail {

/// binom(x, m) on integer counts (exact while the result fits a double
/// mantissa) and the falling-factorial extension x(x-1)...(x-m+1)/m! on reals,
/// with each factor clipped at zero so the extension stays nonnegative.
template <class Scalar>
double binomial(Scalar x, int m) {
  double value = 1.0;
  if constexpr (std::is_integral_v<Scalar>) {
    if (x < m) return 0.0;
  }
  for (int i = 0; i < m; ++i) {
    const double f = static_cast<double>(x) - i;
    if (f <= 0.0) return 0.0;
    value = value * f / (i + 1);
  }
  return value;
}

/// d/dx of the real-valued binomial extension.
inline double binomial_derivative(double x, int m) {
  double total = 0.0;
  for (int skip = 0; skip < m; ++skip) {
    double prod = 1.0;
    for (int i = 0; i < m; ++i) {
      if (i == skip) continue;
      const double f = x - i;
      if (f <= 0.0) {
        prod = 0.0;
        break;
      }
      prod *= f;
    }
    if (x - skip <= 0.0) continue;
    total += prod;
  }
  double fact = 1.0;
  for (int i = 2; i <= m; ++i) fact *= i;
  return total / fact;
}

template <class Scalar>
double factor_product(const std::vector<SpeciesCount>& factors, std::span<const Scalar> x) {
  double g = 1.0;
  for (const auto& f : factors) {
    g *= binomial(x[f.species], f.multiplicity);
    if (g == 0.0) return 0.0;
  }
  return g;
}

}  // namespace detail

class ReactionNetwork {
 public:
  ReactionNetwork() = default;

  ReactionNetwork(std::vector<std::string> species_names, std::vector<Count> initial_counts,
                  std::vector<std::string> parameter_names, std::vector<double> parameter_values,
                  std::vector<Reaction> reactions)
      : species_names_(std::move(species_names)),
        initial_counts_(std::move(initial_counts)),
        parameter_names_(std::move(parameter_names)),
        parameter_values_(std::move(parameter_values)),
        reactions_(std::move(reactions)) {
    validate();
    build_tables();
  }

  std::size_t num_species() const noexcept { return species_names_.size(); }
  std::size_t num_reactions() const noexcept { return reactions_.size(); }
  std::size_t num_parameters() const noexcept { return parameter_names_.size(); }

  const std::vector<std::string>& species_names() const noexcept { return species_names_; }
  const std::vector<std::string>& parameter_names() const noexcept { return parameter_names_; }
  const std::vector<double>& parameter_values() const noexcept { return parameter_values_; }
  const std::vector<Count>& initial_counts() const noexcept { return initial_counts_; }
  const std::vector<Reaction>& reactions() const noexcept { return reactions_; }
  const Reaction& reaction(std::size_t j) const { return reactions_.at(j); }

  /// N x M matrix, entry (i, j) = net change of species i when reaction j fires.
  const Eigen::MatrixXi& stoichiometry() const noexcept { return stoichiometry_; }

  /// Sorted parameter indices referenced by reaction j.
  const std::vector<std::size_t>& reaction_parameters(std::size_t j) const { return reaction_params_.at(j); }

  /// Nonzero entries of column j of the stoichiometry.
  const std::vector<std::pair<std::size_t, int>>& state_change(std::size_t j) const { return changes_.at(j); }

  std::optional<std::size_t> find_species(const std::string& name) const {
    auto it = species_index_.find(name);
    if (it == species_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_parameter(const std::string& name) const {
    auto it = parameter_index_.find(name);
    if (it == parameter_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Copy of the network with different parameter values (same structure).
  ReactionNetwork with_parameters(std::vector<double> values) const {
    ReactionNetwork copy = *this;
    copy.parameter_values_ = std::move(values);
    copy.validate();
    return copy;
  }
  ReactionNetwork with_initial_counts(std::vector<Count> counts) const {
    ReactionNetwork copy = *this;
    copy.initial_counts_ = std::move(counts);
    copy.validate();
    return copy;
  }

  friend bool operator==(const ReactionNetwork& a, const ReactionNetwork& b) {
    return a.species_names_ == b.species_names_ && a.initial_counts_ == b.initial_counts_ &&
           a.parameter_names_ == b.parameter_names_ && a.parameter_values_ == b.parameter_values_ &&
           a.reactions_ == b.reactions_;
  }

 private:
  void validate() {
    const std::size_t n = species_names_.size();
    const std::size_t k = parameter_names_.size();
    if (n == 0) throw ValidationError("network has no species");
    if (reactions_.empty()) throw ValidationError("network has no reactions");
    if (k == 0) throw ValidationError("network has no parameters");
    if (parameter_values_.size() != k) throw ValidationError("parameter value count does not match parameter names");
    if (initial_counts_.empty()) initial_counts_.assign(n, 0);
    if (initial_counts_.size() != n) throw ValidationError("initial count size does not match species");
    for (std::size_t i = 0; i < n; ++i) {
      if (initial_counts_[i] < 0) throw ValidationError("negative initial count for species " + species_names_[i]);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double v = parameter_values_[p];
      if (!std::isfinite(v) || v <= 0.0) {
        throw ValidationError("parameter " + parameter_names_[p] + " must be a positive finite real");
      }
    }
    auto check_species = [&](std::size_t s, const std::string& where) {
      if (s >= n) throw ValidationError(where + ": species index out of range");
    };
    auto check_param = [&](std::size_t p, const std::string& where) {
      if (p >= k) throw ValidationError(where + ": parameter index out of range");
    };
    for (const auto& r : reactions_) {
      if (r.propensity.terms.empty()) throw ValidationError("reaction " + r.name + " references no parameter");
      for (const auto& sc : r.reactants) {
        check_species(sc.species, r.name);
        if (sc.multiplicity < 1) throw ValidationError(r.name + ": multiplicity must be >= 1");
      }
      for (const auto& sc : r.products) {
        check_species(sc.species, r.name);
        if (sc.multiplicity < 1) throw ValidationError(r.name + ": multiplicity must be >= 1");
      }
      for (const auto& t : r.propensity.terms) {
        check_param(t.rate, r.name);
        for (const auto& f : t.factors) {
          check_species(f.species, r.name);
          if (f.multiplicity < 1) throw ValidationError(r.name + ": multiplicity must be >= 1");
        }
        if (t.kind == PropensityKind::michaelis_menten) {
          check_param(t.km, r.name);
          check_species(t.substrate, r.name);
          if (t.km == t.rate) throw ValidationError(r.name + ": vmax and km must be distinct parameters");
          for (const auto& f : t.factors) {
            if (f.species == t.substrate) throw ValidationError(r.name + ": modifier repeats the substrate");
          }
        }
      }
    }
    // Names must be unique within and across species/parameters.
    std::unordered_map<std::string, int> seen;
    for (const auto& s : species_names_) {
      if (seen[s]++) throw ValidationError("duplicate identifier " + s);
    }
    for (const auto& p : parameter_names_) {
      if (seen[p]++) throw ValidationError("duplicate identifier " + p);
    }
    std::unordered_map<std::string, int> rseen;
    for (const auto& r : reactions_) {
      if (rseen[r.name]++) throw ValidationError("duplicate reaction name " + r.name);
    }
  }

  void build_tables() {
    const std::size_t n = species_names_.size();
    const std::size_t m = reactions_.size();
    stoichiometry_ = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    changes_.assign(m, {});
    reaction_params_.assign(m, {});
    for (std::size_t j = 0; j < m; ++j) {
      const auto& r = reactions_[j];
      for (const auto& sc : r.reactants) stoichiometry_(sc.species, j) -= sc.multiplicity;
      for (const auto& sc : r.products) stoichiometry_(sc.species, j) += sc.multiplicity;
      for (std::size_t i = 0; i < n; ++i) {
        if (stoichiometry_(i, j) != 0) changes_[j].emplace_back(i, stoichiometry_(i, j));
      }
      auto& ps = reaction_params_[j];
      for (const auto& t : r.propensity.terms) {
        ps.push_back(t.rate);
        if (t.kind == PropensityKind::michaelis_menten) ps.push_back(t.km);
      }
      std::sort(ps.begin(), ps.end());
      ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
    }
    species_index_.clear();
    parameter_index_.clear();
    for (std::size_t i = 0; i < n; ++i) species_index_[species_names_[i]] = i;
    for (std::size_t p = 0; p < parameter_names_.size(); ++p) parameter_index_[parameter_names_[p]] = p;
  }

  std::vector<std::string> species_names_;
  std::vector<Count> initial_counts_;
  std::vector<std::string> parameter_names_;
  std::vector<double> parameter_values_;
  std::vector<Reaction> reactions_;

  Eigen::MatrixXi stoichiometry_;
  std::vector<std::vector<std::pair<std::size_t, int>>> changes_;
  std::vector<std::vector<std::size_t>> reaction_params_;
  std::unordered_map<std::string, std::size_t> species_index_;
  std::unordered_map<std::string, std::size_t> parameter_index_;
};

// ---------------------------------------------------------------------------
// Propensities

namespace detail {

template <class Scalar>
bool reactants_available(const Reaction& r, std::span<const Scalar> x) {
  if constexpr (std::is_integral_v<Scalar>) {
    for (const auto& sc : r.reactants) {
      if (x[sc.species] < sc.multiplicity) return false;
    }
  }
  return true;
}

template <class Scalar>
double term_value(const PropensityTerm& t, std::span<const double> theta, std::span<const Scalar> x) {
  const double g = factor_product(t.factors, x);
  if (t.kind == PropensityKind::mass_action) return theta[t.rate] * g;
  const double xs = std::max(0.0, static_cast<double>(x[t.substrate]));
  return theta[t.rate] * xs * g / (theta[t.km] + xs);
}

}  // namespace detail

/// a_j^theta(x). Zero whenever a reactant is short of its multiplicity on an
/// integer state.
template <class Scalar>
double propensity(const ReactionNetwork& net, std::span<const double> theta, std::span<const Scalar> x,
                  std::size_t j) {
  const Reaction& r = net.reactions()[j];
  if (!detail::reactants_available(r, x)) return 0.0;
  double a = 0.0;
  for (const auto& t : r.propensity.terms) a += detail::term_value(t, theta, x);
  return a;
}

inline double propensity(const ReactionNetwork& net, std::span<const double> theta, const State& x,
                         std::size_t j) {
  return propensity<Count>(net, theta, std::span<const Count>(x), j);
}

/// Evaluates a_j and its parameter gradient. `grad` is aligned with
/// net.reaction_parameters(j) and must have that length.
template <class Scalar>
double propensity_and_gradient(const ReactionNetwork& net, std::span<const double> theta,
                               std::span<const Scalar> x, std::size_t j, std::span<double> grad) {
  const Reaction& r = net.reactions()[j];
  const auto& params = net.reaction_parameters(j);
  std::fill(grad.begin(), grad.end(), 0.0);
  if (!detail::reactants_available(r, x)) return 0.0;
  auto slot = [&](std::size_t p) {
    return static_cast<std::size_t>(std::lower_bound(params.begin(), params.end(), p) - params.begin());
  };
  double a = 0.0;
  for (const auto& t : r.propensity.terms) {
    const double g = detail::factor_product(t.factors, x);
    if (t.kind == PropensityKind::mass_action) {
      a += theta[t.rate] * g;
      grad[slot(t.rate)] += g;
    } else {
      const double xs = std::max(0.0, static_cast<double>(x[t.substrate]));
      const double denom = theta[t.km] + xs;
      const double sat = xs * g / denom;
      a += theta[t.rate] * sat;
      grad[slot(t.rate)] += sat;
      grad[slot(t.km)] -= theta[t.rate] * sat / denom;
    }
  }
  return a;
}

/// Sparse gradient of log a_j: pairs (parameter index, d log a_j / d theta_p).
using SparseGradient = std::vector<std::pair<std::size_t, double>>;

/// grad_theta log a_j^theta(x). Throws UndefinedGradient when a_j(x) = 0.
template <class Scalar>
SparseGradient propensity_log_gradient(const ReactionNetwork& net, std::span<const double> theta,
                                       std::span<const Scalar> x, std::size_t j) {
  const auto& params = net.reaction_parameters(j);
  std::vector<double> grad(params.size());
  const double a = propensity_and_gradient(net, theta, x, j, std::span<double>(grad));
  if (!(a > 0.0)) throw UndefinedGradient(j);
  SparseGradient out;
  out.reserve(params.size());
  const auto& terms = net.reactions()[j].propensity.terms;
  if (terms.size() == 1 && terms.front().kind == PropensityKind::mass_action) {
    out.emplace_back(params.front(), 1.0 / theta[params.front()]);
    return out;
  }
  for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back(params[i], grad[i] / a);
  return out;
}

inline SparseGradient propensity_log_gradient(const ReactionNetwork& net, std::span<const double> theta,
                                              const State& x, std::size_t j) {
  return propensity_log_gradient<Count>(net, theta, std::span<const Count>(x), j);
}

/// Dense form of propensity_log_gradient.
inline Eigen::VectorXd propensity_log_gradient_dense(const ReactionNetwork& net, std::span<const double> theta,
                                                     const State& x, std::size_t j) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_parameters()));
  for (auto [p, v] : propensity_log_gradient(net, theta, x, j)) g(static_cast<Eigen::Index>(p)) = v;
  return g;
}

/// d a_j / d x_i on real-valued states, accumulated into `column` (length N).
inline void propensity_state_gradient(const ReactionNetwork& net, std::span<const double> theta,
                                      std::span<const double> x, std::size_t j, std::span<double> column) {
  std::fill(column.begin(), column.end(), 0.0);
  for (const auto& t : net.reactions()[j].propensity.terms) {
    const double g = detail::factor_product(t.factors, x);
    // d g / d x_s for each factor species
    auto add_factor_derivatives = [&](double scale) {
      for (std::size_t f = 0; f < t.factors.size(); ++f) {
        double others = 1.0;
        for (std::size_t h = 0; h < t.factors.size(); ++h) {
          if (h == f) continue;
          others *= detail::binomial(x[t.factors[h].species], t.factors[h].multiplicity);
        }
        column[t.factors[f].species] +=
            scale * others * detail::binomial_derivative(x[t.factors[f].species], t.factors[f].multiplicity);
      }
    };
    if (t.kind == PropensityKind::mass_action) {
      add_factor_derivatives(theta[t.rate]);
    } else {
      const double xs = std::max(0.0, x[t.substrate]);
      const double km = theta[t.km];
      const double denom = km + xs;
      if (x[t.substrate] > 0.0) column[t.substrate] += theta[t.rate] * g * km / (denom * denom);
      add_factor_derivatives(theta[t.rate] * xs / denom);
    }
  }
}

/// x + nu_j. Throws NegativeCount or CountOverflow.
inline void apply_reaction_in_place(State& x, const ReactionNetwork& net, std::size_t j) {
  for (auto [i, d] : net.state_change(j)) {
    Count next = 0;
    if (__builtin_add_overflow(x[i], static_cast<Count>(d), &next)) {
      throw CountOverflow("species count overflow in reaction " + net.reactions()[j].name);
    }
    if (next < 0) throw NegativeCount(j, i);
  }
  for (auto [i, d] : net.state_change(j)) x[i] += d;
}

inline State apply_reaction(State x, const ReactionNetwork& net, std::size_t j) {
  apply_reaction_in_place(x, net, j);
  return x;
}

/// First reaction whose propensity is zero under exactly one of the two
/// parameter vectors, or nullopt when the zero sets agree at x.
inline std::optional<std::size_t> check_absolute_continuity(const ReactionNetwork& net,
                                                            std::span<const double> theta,
                                                            std::span<const double> theta_perturbed,
                                                            const State& x) {
  for (std::size_t j = 0; j < net.num_reactions(); ++j) {
    const bool zero_a = propensity(net, theta, x, j) == 0.0;
    const bool zero_b = propensity(net, theta_perturbed, x, j) == 0.0;
    if (zero_a != zero_b) return j;
  }
  return std::nullopt;
}

}  // namespace pathsens
