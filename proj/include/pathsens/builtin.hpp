#pragma once

// Built-in benchmark models.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pathsens/errors.hpp"
#include "pathsens/model.hpp"
#include "pathsens/parser.hpp"
#include "pathsens/ssa.hpp"

namespace pathsens {

struct BuiltinModel {
  ReactionNetwork net;
  std::vector<double> theta;
  State x0;
};

/// Protein production/degradation: 0 -> X at rate k1, X -> 0 at rate k2 x.
inline std::string birth_death_source(double k1 = 10.0, double k2 = 1.0, Count x0 = 0) {
  std::ostringstream os;
  os.precision(17);
  os << "# protein production / degradation\n"
     << "species X initial " << x0 << "\n"
     << "param k1 " << k1 << "\n"
     << "param k2 " << k2 << "\n"
     << "reaction birth: 0 -> X @ massaction k1\n"
     << "reaction death: X -> 0 @ massaction k2\n";
  return os.str();
}

/// p53 / Mdm2-precursor / Mdm2 negative feedback loop.
inline constexpr std::string_view p53_source = R"(# p53 negative feedback oscillator
# state (x, y0, y) = (p53, Mdm2 precursor, Mdm2)
species x
species y0
species y
param bx 90
param ax 0.002
param ak 1.7
param k 0.01
param by 1.1
param a0 0.8
param ay 0.8
reaction R1: 0 -> x @ massaction bx
reaction R2: x -> 0 @ massaction ax + mm vmax=ak km=k modifiers=y
reaction R3: x -> x + y0 @ massaction by
reaction R4: y0 -> y @ massaction a0
reaction R5: y -> 0 @ massaction ay
)";

/// A <-> B driven by two Michaelis-Menten reactions sharing (vmax, km).
inline std::string michaelis_menten_pair_source(double vmax = 5.0, double km = 20.0, Count a0 = 60, Count b0 = 40) {
  std::ostringstream os;
  os.precision(17);
  os << "species A initial " << a0 << "\n"
     << "species B initial " << b0 << "\n"
     << "param vmax " << vmax << "\n"
     << "param km " << km << "\n"
     << "reaction forward: A -> B @ mm vmax=vmax km=km\n"
     << "reaction backward: B -> A @ mm vmax=vmax km=km\n";
  return os.str();
}

/// Initial populations of the EGFR signaling network species.
inline const std::vector<std::pair<std::string, double>>& egfr_initial_populations() {
  static const std::vector<std::pair<std::string, double>> table{
      {"EGF", 4.98e10}, {"EGFR", 5e4},  {"GAP", 1.2e4},   {"Grb2", 5.1e4}, {"Sos", 6.63e4},
      {"Ras-GDP", 1.14e7}, {"Shc", 1.01e6}, {"Raf", 4e4},   {"P1", 4e4},     {"P2", 4e4},
      {"P3", 1e6},      {"MEK", 2.2e7}, {"ERK", 2.1e7},   {"Prot", 8.1e4}};
  return table;
}

struct SyntheticNetworkOptions {
  std::uint64_t seed = 7;
  std::size_t complexes = 40;       // binary complexes, each with a modified isomer
  double unimolecular_min = 1e-3;   // log-uniform rate ranges
  double unimolecular_max = 1e1;
  double bimolecular_min = 1e-9;
  double bimolecular_max = 1e-5;
};

/// Reaction-file text for an EGFR-sized stand-in: the 14 EGFR initial species
/// plus binary complexes, their modified isomers and a Michaelis-Menten
/// Ras-GDP <-> Ras-GTP pair. Every mass-action reaction has its own rate
/// constant; all reactions conserve monomer composition, so populations stay
/// bounded. With the defaults: 95 species, 200 mass-action reactions.
inline std::string synthetic_signaling_source(const SyntheticNetworkOptions& opt = {}) {
  Rng rng(opt.seed, 0x5eed);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + rng.uniform_open() * (std::log(hi) - std::log(lo)));
  };
  const auto& base = egfr_initial_populations();
  std::ostringstream os;
  os.precision(6);
  os << "# synthetic stand-in with EGFR-like size and stiffness\n";
  for (const auto& [name, pop] : base) os << "species " << name << " initial " << static_cast<Count>(pop) << "\n";
  os << "species Ras-GTP\n";
  for (std::size_t c = 0; c < opt.complexes; ++c) {
    os << "species C" << c << "\nspecies C" << c << "p\n";
  }
  std::ostringstream params;
  params.precision(6);
  std::ostringstream reactions;
  std::size_t next_param = 0;
  auto rate = [&](double lo, double hi) {
    const std::string name = "k" + std::to_string(++next_param);
    params << "param " << name << ' ' << log_uniform(lo, hi) << "\n";
    return name;
  };
  for (std::size_t c = 0; c < opt.complexes; ++c) {
    // two distinct monomers
    const std::size_t a = static_cast<std::size_t>(rng.bits() % base.size());
    std::size_t b = static_cast<std::size_t>(rng.bits() % (base.size() - 1));
    if (b >= a) ++b;
    const std::string& sa = base[a].first;
    const std::string& sb = base[b].first;
    const std::string cx = "C" + std::to_string(c);
    const std::string cp = cx + "p";
    reactions << "reaction bind" << c << ": " << sa << " + " << sb << " -> " << cx << " @ massaction "
              << rate(opt.bimolecular_min, opt.bimolecular_max) << "\n";
    reactions << "reaction unbind" << c << ": " << cx << " -> " << sa << " + " << sb << " @ massaction "
              << rate(opt.unimolecular_min, opt.unimolecular_max) << "\n";
    reactions << "reaction mod" << c << ": " << cx << " -> " << cp << " @ massaction "
              << rate(opt.unimolecular_min, opt.unimolecular_max) << "\n";
    reactions << "reaction demod" << c << ": " << cp << " -> " << cx << " @ massaction "
              << rate(opt.unimolecular_min, opt.unimolecular_max) << "\n";
    reactions << "reaction release" << c << ": " << cp << " -> " << sa << " + " << sb << " @ massaction "
              << rate(opt.unimolecular_min, opt.unimolecular_max) << "\n";
  }
  params << "param Vmax " << 1e5 << "\nparam Km " << 1e6 << "\n";
  reactions << "reaction ras_on: Ras-GDP -> Ras-GTP @ mm vmax=Vmax km=Km\n";
  reactions << "reaction ras_off: Ras-GTP -> Ras-GDP @ mm vmax=Vmax km=Km\n";
  os << params.str() << reactions.str();
  return os.str();
}

inline BuiltinModel make_builtin(const ReactionNetwork& net) {
  return {net, net.parameter_values(), net.initial_counts()};
}

/// Built-in by name: "birthdeath", "p53", "mm-pair" or "egfr-standin".
inline BuiltinModel builtin_model(std::string_view name) {
  if (name == "birthdeath") return make_builtin(parse_network(birth_death_source()));
  if (name == "p53") return make_builtin(parse_network(p53_source));
  if (name == "mm-pair") return make_builtin(parse_network(michaelis_menten_pair_source()));
  if (name == "egfr-standin") return make_builtin(parse_network(synthetic_signaling_source()));
  if (name == "egfr") {
    std::ostringstream os;
    os << "the EGFR model is not built in: its rate constants are not distributed with this toolkit. "
          "Load it from a reaction file (--model <path>) with initial populations";
    for (const auto& [species, pop] : egfr_initial_populations()) os << ' ' << species << '=' << pop;
    throw ValidationError(os.str());
  }
  throw ValidationError("unknown builtin model '" + std::string(name) + "'");
}

}  // namespace pathsens
