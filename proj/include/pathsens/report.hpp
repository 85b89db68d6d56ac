#pragma once

// JSON and text reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pathsens/estimators.hpp"
#include "pathsens/meanfield.hpp"
#include "pathsens/spectrum.hpp"
#include "pathsens/structure.hpp"

namespace pathsens {

using json = nlohmann::ordered_json;

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
inline std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

enum class Backend { ssa, meanfield };

inline const char* to_string(Backend b) { return b == Backend::ssa ? "ssa" : "meanfield"; }
inline const char* to_string(WindowRegime r) { return r == WindowRegime::steady ? "steady" : "transient"; }

/// Reproducibility metadata embedded in every artifact.
struct RunMetadata {
  std::uint64_t seed = 0;
  json config = json::object();
  Backend backend = Backend::ssa;
  std::optional<Window> window;
  std::optional<WindowRegime> regime;
};

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      row.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = j.at(r).at(c);
      m(r, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
  }
  return m;
}

inline void add_metadata(json& j, const RunMetadata& meta) {
  j["seed"] = meta.seed;
  j["config"] = meta.config;
  j["config_hash"] = config_hash(meta.config);
  j["backend"] = to_string(meta.backend);
  if (meta.window) {
    j["window"] = {meta.window->begin, meta.window->end};
  } else {
    j["window"] = nullptr;
  }
  if (meta.regime) j["regime"] = to_string(*meta.regime);
}

/// {parameters, scale, matrix (row-major rows), stderr, total_time, events, metadata}.
inline json fim_to_json(const std::vector<std::string>& parameters, const Eigen::MatrixXd& matrix,
                        const Eigen::MatrixXd& std_error, bool log_scale, double total_time, std::uint64_t events,
                        const RunMetadata& meta) {
  json j;
  j["kind"] = "fim";
  j["parameters"] = parameters;
  j["scale"] = log_scale ? "log" : "natural";
  j["matrix"] = matrix_to_json(matrix);
  j["stderr"] = std_error.size() ? matrix_to_json(std_error) : json(nullptr);
  j["total_time"] = total_time;
  j["events"] = events;
  add_metadata(j, meta);
  return j;
}

inline json rer_to_json(const std::vector<std::string>& parameters, const Perturbation& pert, double value,
                        double std_error, bool negative, double total_time, std::uint64_t events,
                        const RunMetadata& meta) {
  json j;
  j["kind"] = "rer";
  j["parameters"] = parameters;
  j["perturbation"] = {{"mode", pert.mode == PerturbationMode::logarithmic ? "log" : "absolute"}, {"eps", pert.eps}};
  j["value"] = value;
  j["stderr"] = std::isfinite(std_error) ? json(std_error) : json(nullptr);
  j["negative"] = negative;
  j["total_time"] = total_time;
  j["events"] = events;
  add_metadata(j, meta);
  return j;
}

inline json spectra_to_json(const std::vector<std::string>& species, const std::vector<Spectrum>& spectra,
                            const RunMetadata& meta) {
  json j;
  j["kind"] = "psd";
  j["sample_interval"] = spectra.empty() ? 0.0 : spectra.front().sample_interval;
  j["frequencies"] = spectra.empty() ? std::vector<double>{} : spectra.front().frequencies;
  json pw = json::object();
  for (std::size_t s = 0; s < spectra.size(); ++s) pw[species[s]] = spectra[s].power;
  j["power"] = std::move(pw);
  add_metadata(j, meta);
  return j;
}

/// Block structure, spectrum, ranking and design scores of one log-scale FIM.
struct SensitivityReport {
  std::vector<std::string> parameters;
  BlockFim bfim;
  SpectralAnalysis spectral;
  std::vector<RankedParameter> ranking;
  OptimalityScores scores;
  std::vector<std::size_t> block_of;  // parameter -> block id
  std::vector<std::size_t> rank_of;   // parameter -> 1-based rank
};

inline SensitivityReport sensitivity_report(const std::vector<std::string>& parameters, const Eigen::MatrixXd& fim_log,
                                            const Partition& partition, std::optional<double> threshold = std::nullopt,
                                            LeakTolerance tolerance = LeakTolerance::exact) {
  SensitivityReport rep;
  rep.parameters = parameters;
  rep.bfim = assemble_block_fim(fim_log, partition, tolerance);
  rep.spectral = spectral_analysis(rep.bfim);
  rep.ranking = sensitivity_ranking(fim_log);
  rep.scores = optimality_scores(rep.bfim, threshold);
  rep.block_of.assign(parameters.size(), 0);
  for (std::size_t b = 0; b < partition.size(); ++b) {
    for (std::size_t p : partition[b]) rep.block_of[p] = b;
  }
  rep.rank_of.assign(parameters.size(), 0);
  for (std::size_t i = 0; i < rep.ranking.size(); ++i) rep.rank_of[rep.ranking[i].index] = i + 1;
  return rep;
}

// one array per column
inline json columns_to_json(const Eigen::MatrixXd& m) {
  json cols = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) cols.push_back(std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows()));
  return cols;
}

inline json report_to_json(const SensitivityReport& rep) {
  json j;
  j["kind"] = "sensitivity_report";
  j["parameters"] = rep.parameters;
  json blocks = json::array();
  for (std::size_t b = 0; b < rep.bfim.blocks.size(); ++b) {
    const auto& d = rep.scores.blocks[b];
    json names = json::array();
    for (std::size_t p : rep.bfim.partition[b]) names.push_back(rep.parameters[p]);
    blocks.push_back({{"id", b},
                      {"parameters", names},
                      {"matrix", matrix_to_json(rep.bfim.blocks[b])},
                      {"eigenvalues", std::vector<double>(rep.spectral.block_values[b].data(),
                                                          rep.spectral.block_values[b].data() +
                                                              rep.spectral.block_values[b].size())},
                      {"eigenvectors", columns_to_json(rep.spectral.block_vectors[b])},
                      {"determinant", d.determinant},
                      {"lambda_min", d.lambda_min},
                      {"lambda_max", d.lambda_max},
                      {"singular", d.singular},
                      {"identifiable", d.identifiable}});
  }
  j["blocks"] = std::move(blocks);
  json ranking = json::array();
  for (const auto& r : rep.ranking) ranking.push_back({{"parameter", rep.parameters[r.index]}, {"score", r.score}});
  j["ranking"] = std::move(ranking);
  auto pair_json = [&](const Eigenpair& e) {
    return json{{"value", e.value},
                {"block", e.block},
                {"vector", std::vector<double>(e.vector.data(), e.vector.data() + e.vector.size())}};
  };
  if (!rep.spectral.global.empty()) {
    j["most_sensitive_direction"] = pair_json(rep.spectral.most_sensitive());
    j["least_sensitive_direction"] = pair_json(rep.spectral.least_sensitive());
  }
  j["d_optimality"] = rep.scores.d_optimality;
  j["a_optimality"] = rep.scores.a_optimality ? json(*rep.scores.a_optimality) : json(nullptr);
  json cr = json::object();
  for (std::size_t p = 0; p < rep.parameters.size(); ++p) {
    cr[rep.parameters[p]] = rep.scores.cramer_rao[p] ? json(*rep.scores.cramer_rao[p]) : json(nullptr);
  }
  j["cramer_rao"] = {{"assumption", "complete-data (fully observed paths)"}, {"lower_bounds", std::move(cr)}};
  j["identifiability_threshold"] = rep.scores.threshold;
  return j;
}

/// One row per parameter: name, block id, diagonal entry, rank, identifiable.
inline std::string report_to_table(const SensitivityReport& rep) {
  std::size_t width = 9;
  for (const auto& n : rep.parameters) width = std::max(width, n.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width) + 2) << "parameter" << std::setw(7) << "block"
     << std::setw(16) << "diagonal" << std::setw(6) << "rank" << "identifiable\n";
  const Eigen::MatrixXd full = rep.bfim.assemble();
  for (std::size_t p = 0; p < rep.parameters.size(); ++p) {
    const bool ident = rep.scores.blocks[rep.block_of[p]].identifiable;
    os << std::left << std::setw(static_cast<int>(width) + 2) << rep.parameters[p] << std::setw(7) << rep.block_of[p]
       << std::setw(16) << std::setprecision(6) << full(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p))
       << std::setw(6) << rep.rank_of[p] << (ident ? "yes" : "no") << '\n';
  }
  os << "D-optimality " << rep.scores.d_optimality << ", A-optimality ";
  if (rep.scores.a_optimality) {
    os << *rep.scores.a_optimality;
  } else {
    os << "undefined (singular block)";
  }
  os << "\nCramer-Rao bounds assume complete-data observation.\n";
  return os.str();
}

}  // namespace pathsens
