#pragma once

// Parameter dependency graph, block-diagonal FIM assembly and the diagnostics
// derived from it: spectra, rankings, optimality scores and Pinsker bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pathsens/errors.hpp"
#include "pathsens/model.hpp"

namespace pathsens {

/// Bipartite reaction/parameter graph: edge (j, k) iff propensity j reads theta_k.
struct DependencyGraph {
  std::size_t num_reactions = 0;
  std::size_t num_parameters = 0;
  std::vector<std::vector<std::size_t>> reaction_params;
  std::vector<std::vector<std::size_t>> param_reactions;

  bool has_edge(std::size_t j, std::size_t k) const {
    const auto& ps = reaction_params.at(j);
    return std::binary_search(ps.begin(), ps.end(), k);
  }
};

inline DependencyGraph dependency_graph(const ReactionNetwork& net) {
  DependencyGraph g;
  g.num_reactions = net.num_reactions();
  g.num_parameters = net.num_parameters();
  g.reaction_params.resize(g.num_reactions);
  g.param_reactions.resize(g.num_parameters);
  for (std::size_t j = 0; j < g.num_reactions; ++j) {
    g.reaction_params[j] = net.reaction_parameters(j);
    for (std::size_t k : g.reaction_params[j]) g.param_reactions[k].push_back(j);
  }
  return g;
}

using Partition = std::vector<std::vector<std::size_t>>;

/// Connected components of the graph restricted to parameter nodes. Groups are
/// sorted ascending and ordered by their smallest member.
inline Partition parameter_blocks(const DependencyGraph& g) {
  std::vector<int> component(g.num_parameters, -1);
  std::vector<char> reaction_seen(g.num_reactions, 0);
  Partition groups;
  for (std::size_t start = 0; start < g.num_parameters; ++start) {
    if (component[start] >= 0) continue;
    const int id = static_cast<int>(groups.size());
    groups.emplace_back();
    std::queue<std::size_t> frontier;
    frontier.push(start);
    component[start] = id;
    while (!frontier.empty()) {
      const std::size_t k = frontier.front();
      frontier.pop();
      groups.back().push_back(k);
      for (std::size_t j : g.param_reactions[k]) {
        if (reaction_seen[j]) continue;
        reaction_seen[j] = 1;
        for (std::size_t other : g.reaction_params[j]) {
          if (component[other] < 0) {
            component[other] = id;
            frontier.push(other);
          }
        }
      }
    }
    std::sort(groups.back().begin(), groups.back().end());
  }
  return groups;
}

/// Components of the nonzero pattern of a symmetric matrix.
inline Partition partition_from_sparsity(const Eigen::MatrixXd& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  DependencyGraph g;
  g.num_parameters = n;
  g.param_reactions.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r; c < n; ++c) {
      if (m(r, c) != 0.0 || m(c, r) != 0.0 || r == c) {
        g.param_reactions[r].push_back(g.reaction_params.size());
        if (c != r) g.param_reactions[c].push_back(g.reaction_params.size());
        g.reaction_params.push_back(r == c ? std::vector<std::size_t>{r} : std::vector<std::size_t>{r, c});
      }
    }
  }
  g.num_reactions = g.reaction_params.size();
  return parameter_blocks(g);
}

inline void validate_partition(const Partition& partition, std::size_t k) {
  std::vector<char> seen(k, 0);
  for (const auto& group : partition) {
    if (group.empty()) throw ValidationError("empty parameter group");
    for (std::size_t p : group) {
      if (p >= k) throw ValidationError("partition index out of range");
      if (seen[p]++) throw ValidationError("partition groups overlap");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ValidationError("partition does not cover every parameter");
}

struct BlockFim {
  Partition partition;
  std::vector<Eigen::MatrixXd> blocks;

  std::size_t dimension() const {
    std::size_t n = 0;
    for (const auto& g : partition) n += g.size();
    return n;
  }

  /// Dense K x K matrix with every off-block entry exactly zero.
  Eigen::MatrixXd assemble() const {
    const auto k = static_cast<Eigen::Index>(dimension());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t b = 0; b < partition.size(); ++b) {
      const auto& g = partition[b];
      for (std::size_t r = 0; r < g.size(); ++r) {
        for (std::size_t c = 0; c < g.size(); ++c) out(g[r], g[c]) = blocks[b](r, c);
      }
    }
    return out;
  }
};

enum class LeakTolerance {
  exact,     // estimator output: off-block entries must be exactly zero
  numerical  // transformed matrices: |entry| <= 1e-12 * trace
};

/// Splits a symmetric K x K matrix into the partition's diagonal blocks.
/// Throws OffBlockLeak when an entry outside the blocks exceeds the tolerance.
inline BlockFim assemble_block_fim(const Eigen::MatrixXd& fim, const Partition& partition,
                                   LeakTolerance tolerance = LeakTolerance::exact) {
  if (fim.rows() != fim.cols()) throw ValidationError("FIM must be square");
  const auto k = static_cast<std::size_t>(fim.rows());
  validate_partition(partition, k);
  std::vector<std::size_t> owner(k);
  for (std::size_t b = 0; b < partition.size(); ++b) {
    for (std::size_t p : partition[b]) owner[p] = b;
  }
  const double tol = tolerance == LeakTolerance::exact ? 0.0 : 1e-12 * std::abs(fim.trace());
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      if (owner[r] != owner[c] && std::abs(fim(r, c)) > tol) throw OffBlockLeak(r, c, fim(r, c));
    }
  }
  BlockFim out;
  out.partition = partition;
  for (const auto& g : partition) {
    Eigen::MatrixXd block(g.size(), g.size());
    for (std::size_t r = 0; r < g.size(); ++r) {
      for (std::size_t c = 0; c < g.size(); ++c) block(r, c) = fim(g[r], g[c]);
    }
    out.blocks.push_back(std::move(block));
  }
  return out;
}

struct Eigenpair {
  double value = 0.0;
  std::size_t block = 0;
  Eigen::VectorXd vector;  // embedded in R^K
};

struct SpectralAnalysis {
  std::vector<Eigen::VectorXd> block_values;   // descending
  std::vector<Eigen::MatrixXd> block_vectors;  // columns match block_values
  std::vector<Eigenpair> global;               // union over blocks, descending

  const Eigenpair& most_sensitive() const { return global.front(); }
  const Eigenpair& least_sensitive() const { return global.back(); }
};

namespace detail {

inline void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12 * scale) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace detail

inline SpectralAnalysis spectral_analysis(const BlockFim& bfim) {
  SpectralAnalysis out;
  const auto k = static_cast<Eigen::Index>(bfim.dimension());
  for (std::size_t b = 0; b < bfim.blocks.size(); ++b) {
    const Eigen::MatrixXd sym = 0.5 * (bfim.blocks[b] + bfim.blocks[b].transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    const auto n = sym.rows();
    Eigen::VectorXd values(n);
    Eigen::MatrixXd vectors(n, n);
    // Eigen returns ascending order.
    for (Eigen::Index i = 0; i < n; ++i) {
      values(i) = solver.eigenvalues()(n - 1 - i);
      vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
      detail::normalize_sign(vectors.col(i));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigenpair e;
      e.value = values(i);
      e.block = b;
      e.vector = Eigen::VectorXd::Zero(k);
      for (Eigen::Index r = 0; r < n; ++r) e.vector(bfim.partition[b][r]) = vectors(r, i);
      out.global.push_back(std::move(e));
    }
    out.block_values.push_back(std::move(values));
    out.block_vectors.push_back(std::move(vectors));
  }
  std::stable_sort(out.global.begin(), out.global.end(),
                   [](const Eigenpair& a, const Eigenpair& b) { return a.value > b.value; });
  return out;
}

struct RankedParameter {
  std::size_t index = 0;
  double score = 0.0;
};

/// Parameters by descending diagonal entry; ties keep index order.
inline std::vector<RankedParameter> sensitivity_ranking(const Eigen::MatrixXd& fim_log) {
  std::vector<RankedParameter> out(static_cast<std::size_t>(fim_log.rows()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {i, fim_log(i, i)};
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedParameter& a, const RankedParameter& b) { return a.score > b.score; });
  return out;
}

inline std::vector<RankedParameter> sensitivity_ranking(const BlockFim& bfim) {
  return sensitivity_ranking(bfim.assemble());
}

struct BlockDiagnostics {
  double determinant = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  bool singular = false;
  bool identifiable = false;
  std::optional<double> trace_inverse;
};

struct OptimalityScores {
  double d_optimality = 0.0;               // prod det(A_i)
  std::optional<double> a_optimality;      // sum tr(A_i^-1), absent if any block is singular
  std::vector<std::optional<double>> cramer_rao;  // diag of blockwise inverse (complete-data bound)
  std::vector<BlockDiagnostics> blocks;
  double threshold = 0.0;
};

/// Default identifiability threshold: 1e-8 times the largest diagonal entry.
inline double default_identifiability_threshold(const BlockFim& bfim) {
  double m = 0.0;
  for (const auto& b : bfim.blocks) m = std::max(m, b.diagonal().maxCoeff());
  return 1e-8 * m;
}

inline OptimalityScores optimality_scores(const BlockFim& bfim, std::optional<double> threshold = std::nullopt) {
  OptimalityScores out;
  out.threshold = threshold.value_or(default_identifiability_threshold(bfim));
  out.cramer_rao.assign(bfim.dimension(), std::nullopt);
  out.d_optimality = 1.0;
  double a_sum = 0.0;
  bool all_invertible = true;
  for (std::size_t b = 0; b < bfim.blocks.size(); ++b) {
    const Eigen::MatrixXd& a = bfim.blocks[b];
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    BlockDiagnostics d;
    d.lambda_min = solver.eigenvalues().minCoeff();
    d.lambda_max = solver.eigenvalues().maxCoeff();
    d.determinant = a.rows() == 1 ? a(0, 0) : a.partialPivLu().determinant();
    const double norm = solver.eigenvalues().cwiseAbs().maxCoeff();
    d.singular = !(d.determinant > 1e-12 * std::pow(norm, static_cast<double>(a.rows())));
    d.identifiable = d.lambda_min >= out.threshold;
    out.d_optimality *= std::max(0.0, d.determinant);
    if (!d.singular) {
      const Eigen::MatrixXd inv = a.inverse();
      d.trace_inverse = inv.trace();
      a_sum += inv.trace();
      for (std::size_t r = 0; r < bfim.partition[b].size(); ++r) out.cramer_rao[bfim.partition[b][r]] = inv(r, r);
    } else {
      all_invertible = false;
    }
    out.blocks.push_back(d);
  }
  if (all_invertible) out.a_optimality = a_sum;
  return out;
}

/// ||f||_inf * sqrt(2 D). `relative_entropy` is a total relative entropy; for
/// path distributions multiply the rate by the horizon first.
inline double pinsker_bound(double f_sup, double relative_entropy) {
  if (!(f_sup >= 0.0) || !(relative_entropy >= 0.0)) throw ValidationError("Pinsker inputs must be nonnegative");
  return f_sup * std::sqrt(2.0 * relative_entropy);
}

}  // namespace pathsens
