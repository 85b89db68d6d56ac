// pathsens command-line front end.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pathsens/pathsens.hpp"

using namespace pathsens;

namespace {

struct Options {
  std::string model;
  std::string backend = "ssa";
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
  std::size_t threads = 0;
  std::optional<double> events;
  std::optional<double> t_end;
  std::optional<double> burn_in;
  std::optional<std::string> window;
  std::optional<std::string> regime;
  std::vector<std::string> log_perturb;
  std::string out;
  double dt_sample = 1.0;
  double grid = 0.0;
  std::vector<std::string> species;
  std::optional<double> threshold;
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  bool table = false;
  // pinsker
  std::optional<double> f_sup;
  std::optional<double> rel_entropy;
  std::optional<double> rer;
  std::optional<double> horizon;
};

struct Loaded {
  std::string source;  // builtin name or file path
  ReactionNetwork net;
  std::vector<double> theta;
  State x0;
};

Loaded load_model(const std::string& name) {
  if (name.empty()) throw ValidationError("--model is required");
  std::error_code ec;
  if (std::filesystem::is_regular_file(name, ec)) {
    std::ifstream in(name);
    if (!in) throw Error("cannot open model file '" + name + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    auto net = parse_network(buf.str());
    auto theta = net.parameter_values();
    auto x0 = net.initial_counts();
    return {name, std::move(net), std::move(theta), std::move(x0)};
  }
  auto m = builtin_model(name);
  return {name, std::move(m.net), std::move(m.theta), std::move(m.x0)};
}

Backend parse_backend(const std::string& s) {
  if (s == "ssa") return Backend::ssa;
  if (s == "meanfield") return Backend::meanfield;
  throw ValidationError("--backend must be 'ssa' or 'meanfield'");
}

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) throw ValidationError("bad number '" + s + "' in " + what);
  return v;
}

std::optional<Window> parse_window(const std::optional<std::string>& w) {
  if (!w) return std::nullopt;
  const auto colon = w->find(':');
  if (colon == std::string::npos) throw ValidationError("--window must look like a:b");
  Window out{parse_number(w->substr(0, colon), "--window"), parse_number(w->substr(colon + 1), "--window")};
  if (!(out.begin >= 0.0) || !(out.end >= out.begin)) throw ValidationError("--window needs 0 <= a <= b");
  return out;
}

// name=value pairs, values are relative changes: k1=+0.1 means k1 -> 1.1 k1
std::optional<Perturbation> parse_perturbation(const std::vector<std::string>& items, const ReactionNetwork& net) {
  if (items.empty()) return std::nullopt;
  std::vector<double> eps(net.num_parameters(), 0.0);
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("--log-perturb expects name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const auto k = net.find_parameter(name);
    if (!k) throw ValidationError("--log-perturb: unknown parameter '" + name + "'");
    eps[*k] = parse_number(item.substr(eq + 1), "--log-perturb");
  }
  auto p = Perturbation::logarithmic(std::move(eps));
  p.apply(net.parameter_values());  // validates 1 + eps > 0
  return p;
}

std::vector<std::size_t> select_species(const std::vector<std::string>& names, const ReactionNetwork& net) {
  std::vector<std::size_t> out;
  if (names.empty()) {
    for (std::size_t i = 0; i < net.num_species(); ++i) out.push_back(i);
    return out;
  }
  for (const auto& n : names) {
    const auto s = net.find_species(n);
    if (!s) throw ValidationError("unknown species '" + n + "'");
    out.push_back(*s);
  }
  return out;
}

class Runner {
 public:
  Runner(std::string command, Options opt) : command_(std::move(command)), opt_(std::move(opt)) {}

  void run() {
    if (command_ == "pinsker") return pinsker();
    model_ = load_model(opt_.model);
    backend_ = parse_backend(opt_.backend);
    window_ = parse_window(opt_.window);
    pert_ = parse_perturbation(opt_.log_perturb, model_->net);
    if (opt_.replicates < 1) throw ValidationError("--replicates must be at least 1");
    if (opt_.regime && *opt_.regime != "steady" && *opt_.regime != "transient") {
      throw ValidationError("--regime must be 'steady' or 'transient'");
    }
    if (command_ == "simulate") return simulate_cmd();
    if (command_ == "rer") return rer_cmd();
    if (command_ == "fim") return fim_cmd(false);
    if (command_ == "rank") return fim_cmd(true);
    if (command_ == "blocks") return blocks_cmd();
    if (command_ == "psd") return psd_cmd();
    throw ValidationError("unknown command '" + command_ + "'");
  }

 private:
  json config() const {
    json c;
    c["command"] = command_;
    c["model"] = opt_.model;
    c["backend"] = opt_.backend;
    c["seed"] = opt_.seed;
    c["replicates"] = opt_.replicates;
    c["events"] = opt_.events ? json(*opt_.events) : json(nullptr);
    c["t_end"] = opt_.t_end ? json(*opt_.t_end) : json(nullptr);
    c["burn_in"] = opt_.burn_in ? json(*opt_.burn_in) : json(nullptr);
    c["window"] = opt_.window ? json(*opt_.window) : json(nullptr);
    c["log_perturb"] = opt_.log_perturb;
    c["dt_sample"] = opt_.dt_sample;
    c["species"] = opt_.species;
    c["rel_tol"] = opt_.rel_tol;
    c["abs_tol"] = opt_.abs_tol;
    c["theta"] = model_ ? json(model_->theta) : json(nullptr);
    return c;
  }

  RunMetadata metadata() const {
    RunMetadata m;
    m.seed = opt_.seed;
    m.config = config();
    m.backend = backend_;
    m.window = window_;
    return m;
  }

  // SSA budget: --window a:b means burn-in a and horizon b; otherwise
  // --t-end/--burn-in/--events, with 1e6 events when nothing is given.
  SimConfig sim_config() const {
    SimConfig cfg;
    cfg.seed = opt_.seed;
    if (window_) {
      if (opt_.t_end || opt_.burn_in) throw ValidationError("use either --window or --t-end/--burn-in");
      cfg.burn_in = window_->begin;
      cfg.t_end = window_->end;
    } else {
      cfg.t_end = opt_.t_end;
      cfg.burn_in = opt_.burn_in.value_or(0.0);
    }
    if (opt_.events) {
      if (!(*opt_.events >= 1.0)) throw ValidationError("--events must be at least 1");
      cfg.max_events = static_cast<std::uint64_t>(std::llround(*opt_.events));
    }
    if (!cfg.t_end && !cfg.max_events) cfg.max_events = 1'000'000;
    cfg.validate();
    return cfg;
  }

  Window meanfield_window() const {
    if (window_) return *window_;
    if (opt_.t_end) return {opt_.burn_in.value_or(0.0), *opt_.t_end};
    throw ValidationError("the meanfield backend needs --window a:b or --t-end");
  }

  OdeSolution solve(const Window& w) const {
    IntegratorOptions io = IntegratorOptions::tolerances(opt_.rel_tol, opt_.abs_tol);
    return integrate(model_->net, model_->theta, to_real_state(model_->x0), w, io);
  }

  // user label wins; otherwise steady when |dx/dt| at the window start is
  // below 1e-6 of the state norm per unit time
  WindowRegime regime(const OdeSolution& sol) const {
    if (opt_.regime) return *opt_.regime == "steady" ? WindowRegime::steady : WindowRegime::transient;
    const double scale = std::max(1.0, sol.states.front().norm());
    return sol.rhs_norm_at_start <= 1e-6 * scale ? WindowRegime::steady : WindowRegime::transient;
  }

  static json integrator_json(const OdeSolution& sol) {
    return {{"steps", sol.steps},
            {"rejected", sol.rejected},
            {"clipped", sol.clipped},
            {"max_error_ratio", sol.max_error_ratio},
            {"rhs_norm_at_window_start", sol.rhs_norm_at_start}};
  }

  void emit(const json& j) const { emit_text(j.dump(2) + "\n"); }

  void emit_text(const std::string& text) const {
    if (opt_.out.empty() || opt_.out == "-") {
      std::cout << text;
      return;
    }
    std::ofstream f(opt_.out);
    if (!f) throw Error("cannot write '" + opt_.out + "'");
    f << text;
    if (!f) throw Error("write to '" + opt_.out + "' failed");
  }

  void simulate_cmd() {
    std::ostringstream os;
    if (backend_ == Backend::meanfield) {
      write_solution_csv(os, model_->net, solve(meanfield_window()));
    } else {
      SimConfig cfg = sim_config();
      const Trajectory traj = record_trajectory(model_->net, model_->theta, model_->x0, cfg);
      if (opt_.grid < 0.0) throw ValidationError("--grid must be nonnegative");
      write_trajectory_csv(os, model_->net, traj, opt_.grid);
    }
    emit_text(os.str());
  }

  void rer_cmd() {
    if (!pert_) throw ValidationError("rer needs at least one --log-perturb name=value");
    auto meta = metadata();
    if (backend_ == Backend::meanfield) {
      const auto sol = solve(meanfield_window());
      meta.window = sol.window;
      meta.regime = regime(sol);
      auto j = rer_to_json(model_->net.parameter_names(), *pert_, rer_meanfield(model_->net, model_->theta, *pert_, sol),
                           std::nan(""), false, sol.window.end - sol.window.begin, 0, meta);
      j["integrator"] = integrator_json(sol);
      return emit(j);
    }
    const auto r = rer_estimate(model_->net, model_->theta, *pert_, model_->x0, sim_config());
    auto j = rer_to_json(model_->net.parameter_names(), *pert_, r.value, r.std_error, r.negative, r.total_time, r.events,
                         meta);
    j["absorbed"] = r.absorbed;
    emit(j);
  }

  void fim_cmd(bool ranking_only) {
    const auto& theta = model_->theta;
    const auto names = model_->net.parameter_names();
    auto meta = metadata();
    Eigen::MatrixXd fim_log, se_log;
    double total_time = 0.0;
    std::uint64_t events = 0;
    json extra = json::object();
    if (backend_ == Backend::meanfield) {
      const auto sol = solve(meanfield_window());
      meta.window = sol.window;
      meta.regime = regime(sol);
      fim_log = fim_meanfield(model_->net, theta, sol);
      total_time = sol.window.end - sol.window.begin;
      extra["integrator"] = integrator_json(sol);
    } else {
      const auto e = ensemble_fim(model_->net, theta, model_->x0, sim_config(), opt_.replicates, opt_.threads);
      fim_log = log_scale_fim(e.mean, theta);
      se_log = log_scale_fim(e.std_error, theta).cwiseAbs();
      total_time = e.total_time;
      events = e.events;
      extra["replicates"] = e.replicates;
    }
    const auto partition = parameter_blocks(dependency_graph(model_->net));
    const auto rep = sensitivity_report(names, fim_log, partition, opt_.threshold);
    if (opt_.table) return emit_text(report_to_table(rep));
    if (ranking_only) {
      json j;
      j["kind"] = "ranking";
      json ranking = json::array();
      for (std::size_t i = 0; i < rep.ranking.size(); ++i) {
        ranking.push_back(
            {{"rank", i + 1}, {"parameter", names[rep.ranking[i].index]}, {"diagonal", rep.ranking[i].score}});
      }
      j["ranking"] = std::move(ranking);
      j["parameters"] = names;
      add_metadata(j, meta);
      j.update(extra);
      return emit(j);
    }
    auto j = fim_to_json(names, fim_log, se_log, true, total_time, events, meta);
    j.update(extra);
    j["report"] = report_to_json(rep);
    emit(j);
  }

  void blocks_cmd() {
    const auto& net = model_->net;
    const auto g = dependency_graph(net);
    const auto partition = parameter_blocks(g);
    if (opt_.table) {
      std::ostringstream os;
      for (std::size_t b = 0; b < partition.size(); ++b) {
        os << "block " << b << ":";
        for (std::size_t p : partition[b]) os << ' ' << net.parameter_names()[p];
        os << '\n';
      }
      return emit_text(os.str());
    }
    json j;
    j["kind"] = "blocks";
    json blocks = json::array();
    for (std::size_t b = 0; b < partition.size(); ++b) {
      json params = json::array(), reactions = json::array();
      std::vector<char> seen(net.num_reactions(), 0);
      for (std::size_t p : partition[b]) {
        params.push_back(net.parameter_names()[p]);
        for (std::size_t r : g.param_reactions[p]) seen[r] = 1;
      }
      for (std::size_t r = 0; r < seen.size(); ++r) {
        if (seen[r]) reactions.push_back(net.reaction(r).name);
      }
      blocks.push_back({{"id", b}, {"size", partition[b].size()}, {"parameters", params}, {"reactions", reactions}});
    }
    j["num_parameters"] = net.num_parameters();
    j["num_reactions"] = net.num_reactions();
    j["blocks"] = std::move(blocks);
    auto meta = metadata();
    add_metadata(j, meta);
    emit(j);
  }

  void psd_cmd() {
    if (backend_ != Backend::ssa) throw ValidationError("psd runs on the ssa backend only");
    if (!(opt_.dt_sample > 0.0)) throw ValidationError("--dt-sample must be positive");
    SimConfig cfg = sim_config();
    if (!cfg.t_end) throw ValidationError("psd needs a time horizon (--t-end or --window)");
    const auto species = select_species(opt_.species, model_->net);
    std::vector<std::string> names;
    for (std::size_t s : species) names.push_back(model_->net.species_names()[s]);
    const auto base = ensemble_psd(model_->net, model_->theta, model_->x0, cfg, opt_.replicates, opt_.dt_sample,
                                   species, opt_.threads);
    if (!pert_) return emit(spectra_to_json(names, base, metadata()));
    const auto theta2 = pert_->apply(model_->theta);
    const auto perturbed =
        ensemble_psd(model_->net, theta2, model_->x0, cfg, opt_.replicates, opt_.dt_sample, species, opt_.threads);
    auto j = spectra_to_json(names, perturbed, metadata());
    json bp = json::object();
    for (std::size_t s = 0; s < base.size(); ++s) bp[names[s]] = base[s].power;
    j["baseline_power"] = std::move(bp);
    j["l1_from_baseline"] = l1_distance(std::span<const Spectrum>(base), std::span<const Spectrum>(perturbed));
    emit(j);
  }

  void pinsker() {
    if (!opt_.f_sup) throw ValidationError("pinsker needs --f-sup");
    double d = 0.0;
    json j;
    j["kind"] = "pinsker";
    if (opt_.rel_entropy) {
      if (opt_.rer || opt_.horizon) throw ValidationError("give either --rel-entropy or --rer with --horizon");
      d = *opt_.rel_entropy;
    } else if (opt_.rer && opt_.horizon) {
      // path relative entropy grows linearly: T times the rate
      d = *opt_.rer * *opt_.horizon;
      j["rer"] = *opt_.rer;
      j["horizon"] = *opt_.horizon;
    } else {
      throw ValidationError("pinsker needs --rel-entropy, or --rer with --horizon");
    }
    j["f_sup"] = *opt_.f_sup;
    j["relative_entropy"] = d;
    j["bound"] = pinsker_bound(*opt_.f_sup, d);
    emit(j);
  }

  std::string command_;
  Options opt_;
  std::optional<Loaded> model_;
  Backend backend_ = Backend::ssa;
  std::optional<Window> window_;
  std::optional<Perturbation> pert_;
};

void print_error(const char* kind, const std::string& message, int code) {
  json j = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pathwise parameter sensitivity for stochastic reaction networks"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub, bool sim) {
    sub->add_option("--model", opt.model, "builtin name (birthdeath, p53, mm-pair, egfr-standin) or reaction file")
        ->required();
    sub->add_option("--backend", opt.backend, "ssa or meanfield")->capture_default_str();
    sub->add_option("--out", opt.out, "output file (default stdout)");
    if (!sim) return;
    sub->add_option("--seed", opt.seed, "master seed")->capture_default_str();
    sub->add_option("--replicates", opt.replicates, "independent replicates")->capture_default_str();
    sub->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
    sub->add_option("--events", opt.events, "event budget after burn-in (accepts 2e6)");
    sub->add_option("--t-end", opt.t_end, "simulated time horizon");
    sub->add_option("--burn-in", opt.burn_in, "time discarded before accumulation");
    sub->add_option("--window", opt.window, "time window a:b");
    sub->add_option("--regime", opt.regime, "label a meanfield window steady or transient");
    sub->add_option("--rtol", opt.rel_tol, "meanfield relative tolerance")->capture_default_str();
    sub->add_option("--atol", opt.abs_tol, "meanfield absolute tolerance")->capture_default_str();
  };

  auto* simulate = app.add_subcommand("simulate", "write a trajectory (ssa) or ODE solution (meanfield) as CSV");
  common(simulate, true);
  simulate->add_option("--grid", opt.grid, "sample on a uniform grid instead of event times");
  auto* rer = app.add_subcommand("rer", "relative entropy rate for a perturbation");
  common(rer, true);
  rer->add_option("--log-perturb", opt.log_perturb, "name=value, theta -> theta (1 + value); repeatable")
      ->allow_extra_args(false);
  auto* fim = app.add_subcommand("fim", "log-scale Fisher information matrix and block report");
  common(fim, true);
  fim->add_option("--threshold", opt.threshold, "identifiability threshold on block eigenvalues");
  fim->add_flag("--table", opt.table, "print the report as a table");
  auto* rank = app.add_subcommand("rank", "parameters ordered by FIM diagonal");
  common(rank, true);
  rank->add_flag("--table", opt.table, "print the report as a table");
  auto* blocks = app.add_subcommand("blocks", "parameter blocks from the dependency graph");
  common(blocks, false);
  blocks->add_flag("--table", opt.table, "plain text output");
  auto* psd = app.add_subcommand("psd", "replicate-averaged power spectral density");
  common(psd, true);
  psd->add_option("--dt-sample", opt.dt_sample, "resampling interval")->capture_default_str();
  psd->add_option("--species", opt.species, "species to analyse (default all)");
  psd->add_option("--log-perturb", opt.log_perturb, "also run perturbed parameters and report the L1 distance")
      ->allow_extra_args(false);
  auto* pinsker = app.add_subcommand("pinsker", "Pinsker bound on |E f - E' f|");
  pinsker->add_option("--f-sup", opt.f_sup, "sup norm of the observable")->required();
  pinsker->add_option("--rel-entropy", opt.rel_entropy, "total relative entropy");
  pinsker->add_option("--rer", opt.rer, "relative entropy rate (multiplied by --horizon)");
  pinsker->add_option("--horizon", opt.horizon, "path length T");
  pinsker->add_option("--out", opt.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what(), 2);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    Runner(command, opt).run();
  } catch (const ParseError& e) {
    print_error(e.kind(), e.what(), 2);
    return 2;
  } catch (const ValidationError& e) {
    print_error(e.kind(), e.what(), 2);
    return 2;
  } catch (const Error& e) {
    print_error(e.kind(), e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what(), 1);
    return 1;
  }
  return 0;
}
