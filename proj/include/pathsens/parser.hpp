#pragma once

// Line-oriented reaction-file format.
//
//   # comment
//   species <name> [initial <int>]
//   param <name> <positive float>
//   reaction <name>: <reactants> -> <products> @ <propensity>
//
// reactants/products are "0" or "+"-separated "<mult>*<species>" terms.
// <propensity> is one or more "+"-separated terms:
//   massaction <param>
//   mm vmax=<param> km=<param> [substrate=<species>] [modifiers=<species>[*<species>...]]
// A mass-action term uses the reaction's reactants. A Michaelis-Menten term
// defaults its substrate to the reaction's single reactant.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pathsens/errors.hpp"
#include "pathsens/model.hpp"

namespace pathsens {

namespace detail {

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '\'' ||
          c == '[' || c == ']' || c == '~')) {
      return false;
    }
  }
  return true;
}

class LineParser {
 public:
  LineParser(std::string_view line, std::size_t line_no) : line_(line), line_no_(line_no) {
    std::size_t i = 0;
    while (i < line_.size()) {
      if (std::isspace(static_cast<unsigned char>(line_[i]))) {
        ++i;
        continue;
      }
      // single-character punctuation tokens
      if (line_[i] == ':' || line_[i] == '@' || line_[i] == '+') {
        tokens_.push_back({line_.substr(i, 1), i + 1});
        ++i;
        continue;
      }
      if (line_[i] == '-' && i + 1 < line_.size() && line_[i + 1] == '>') {
        tokens_.push_back({line_.substr(i, 2), i + 1});
        i += 2;
        continue;
      }
      const std::size_t start = i;
      while (i < line_.size() && !std::isspace(static_cast<unsigned char>(line_[i])) && line_[i] != ':' &&
             line_[i] != '@' && !(line_[i] == '+' && !exponent_sign(start, i)) &&
             !(line_[i] == '-' && i + 1 < line_.size() && line_[i + 1] == '>')) {
        ++i;
      }
      tokens_.push_back({line_.substr(start, i - start), start + 1});
    }
  }

  bool done() const { return pos_ >= tokens_.size(); }
  const Token& peek() const {
    if (done()) fail(line_.size() + 1, "unexpected end of line");
    return tokens_[pos_];
  }
  Token next() {
    const Token& t = peek();
    ++pos_;
    return t;
  }
  void expect(std::string_view text) {
    if (done()) fail(line_.size() + 1, "expected '" + std::string(text) + "'");
    const Token t = next();
    if (t.text != text) fail(t.column, "expected '" + std::string(text) + "', found '" + std::string(t.text) + "'");
  }
  bool accept(std::string_view text) {
    if (!done() && tokens_[pos_].text == text) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::size_t end_column() const { return line_.size() + 1; }

  // '+' inside a numeric token such as 1e+05
  bool exponent_sign(std::size_t start, std::size_t i) const {
    const char first = line_[start];
    if (!(std::isdigit(static_cast<unsigned char>(first)) || first == '.')) return false;
    return i > start && (line_[i - 1] == 'e' || line_[i - 1] == 'E');
  }

  [[noreturn]] void fail(std::size_t column, const std::string& what) const {
    throw ParseError(line_no_, column, what);
  }

 private:
  std::string_view line_;
  std::size_t line_no_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline double parse_real(const Token& t, const LineParser& lp) {
  const std::string s(t.text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    lp.fail(t.column, "expected a number, found '" + s + "'");
  }
  if (used != s.size()) lp.fail(t.column, "expected a number, found '" + s + "'");
  return v;
}

}  // namespace detail

inline ReactionNetwork parse_network(std::string_view text) {
  using detail::LineParser;
  using detail::Token;

  std::vector<std::string> species;
  std::vector<Count> initial;
  std::vector<std::string> params;
  std::vector<double> values;
  std::vector<Reaction> reactions;
  std::unordered_map<std::string, std::size_t> species_index;
  std::unordered_map<std::string, std::size_t> param_index;
  std::unordered_map<std::string, std::size_t> reaction_index;

  struct PendingReaction {
    std::size_t line;
    std::string name;
    std::vector<std::pair<Token, int>> reactants;
    std::vector<std::pair<Token, int>> products;
    struct Term {
      bool mm = false;
      Token rate{};
      Token km{};
      std::optional<Token> substrate;
      std::vector<Token> modifiers;
      std::size_t column = 0;
    };
    std::vector<Term> terms;
    std::string source;
  };
  std::vector<PendingReaction> pending;
  std::vector<std::string> lines;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string raw(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    lines.push_back(raw);
    if (eol == text.size()) break;
  }

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const std::string& raw = lines[li];
    const std::size_t ln = li + 1;
    LineParser lp(raw, ln);
    if (lp.done()) continue;
    const Token head = lp.next();
    if (head.text == "species") {
      const Token name = lp.next();
      if (!detail::is_identifier(name.text)) lp.fail(name.column, "invalid species name '" + std::string(name.text) + "'");
      const std::string n(name.text);
      if (species_index.count(n) || param_index.count(n)) lp.fail(name.column, "duplicate identifier '" + n + "'");
      Count init = 0;
      if (lp.accept("initial")) {
        const Token v = lp.next();
        const double d = detail::parse_real(v, lp);
        if (d < 0 || d != std::floor(d) || d > 9.007199254740992e15) {
          lp.fail(v.column, "initial count must be a nonnegative integer");
        }
        init = static_cast<Count>(d);
      }
      if (!lp.done()) lp.fail(lp.peek().column, "unexpected token '" + std::string(lp.peek().text) + "'");
      species_index[n] = species.size();
      species.push_back(n);
      initial.push_back(init);
    } else if (head.text == "param") {
      const Token name = lp.next();
      if (!detail::is_identifier(name.text)) lp.fail(name.column, "invalid parameter name '" + std::string(name.text) + "'");
      const std::string n(name.text);
      if (species_index.count(n) || param_index.count(n)) lp.fail(name.column, "duplicate identifier '" + n + "'");
      const Token v = lp.next();
      const double d = detail::parse_real(v, lp);
      if (!(d > 0.0) || !std::isfinite(d)) lp.fail(v.column, "parameter '" + n + "' must be positive");
      if (!lp.done()) lp.fail(lp.peek().column, "unexpected token '" + std::string(lp.peek().text) + "'");
      param_index[n] = params.size();
      params.push_back(n);
      values.push_back(d);
    } else if (head.text == "reaction") {
      PendingReaction pr;
      pr.line = ln;
      pr.source = raw;
      const Token name = lp.next();
      if (!detail::is_identifier(name.text)) lp.fail(name.column, "invalid reaction name '" + std::string(name.text) + "'");
      pr.name = std::string(name.text);
      if (reaction_index.count(pr.name)) lp.fail(name.column, "duplicate reaction '" + pr.name + "'");
      reaction_index[pr.name] = pending.size();
      lp.expect(":");
      auto parse_side = [&](std::vector<std::pair<Token, int>>& out, std::string_view terminator) {
        if (!lp.done() && lp.peek().text == "0") {
          lp.next();
          return;
        }
        while (true) {
          if (lp.done()) lp.fail(lp.end_column(), "expected species term");
          const Token t = lp.next();
          if (t.text == terminator) lp.fail(t.column, "expected species term before '" + std::string(terminator) + "'");
          int mult = 1;
          std::string_view name_part = t.text;
          if (const auto star = t.text.find('*'); star != std::string_view::npos) {
            const std::string_view m = t.text.substr(0, star);
            int v = 0;
            auto [ptr, ec] = std::from_chars(m.data(), m.data() + m.size(), v);
            if (ec != std::errc() || ptr != m.data() + m.size() || v < 1) lp.fail(t.column, "invalid multiplicity");
            mult = v;
            name_part = t.text.substr(star + 1);
          }
          if (!detail::is_identifier(name_part)) lp.fail(t.column, "invalid species term '" + std::string(t.text) + "'");
          out.emplace_back(Token{name_part, t.column}, mult);
          if (!lp.accept("+")) break;
        }
      };
      parse_side(pr.reactants, "->");
      lp.expect("->");
      parse_side(pr.products, "@");
      lp.expect("@");
      while (true) {
        const Token kind = lp.next();
        PendingReaction::Term term;
        term.column = kind.column;
        if (kind.text == "massaction") {
          term.rate = lp.next();
        } else if (kind.text == "mm") {
          bool have_vmax = false;
          bool have_km = false;
          while (!lp.done() && lp.peek().text != "+") {
            const Token kv = lp.next();
            const auto eq = kv.text.find('=');
            if (eq == std::string_view::npos) lp.fail(kv.column, "expected key=value, found '" + std::string(kv.text) + "'");
            const std::string_view key = kv.text.substr(0, eq);
            const Token val{kv.text.substr(eq + 1), kv.column + eq + 1};
            if (key == "vmax") {
              term.rate = val;
              have_vmax = true;
            } else if (key == "km") {
              term.km = val;
              have_km = true;
            } else if (key == "substrate") {
              term.substrate = val;
            } else if (key == "modifiers") {
              std::size_t start = 0;
              while (start <= val.text.size()) {
                std::size_t stop = val.text.find('*', start);
                if (stop == std::string_view::npos) stop = val.text.size();
                term.modifiers.push_back(Token{val.text.substr(start, stop - start), val.column + start});
                start = stop + 1;
              }
            } else {
              lp.fail(kv.column, "unknown Michaelis-Menten key '" + std::string(key) + "'");
            }
          }
          if (!have_vmax) lp.fail(kind.column, "mm term requires vmax=<param>");
          if (!have_km) lp.fail(kind.column, "mm term requires km=<param>");
          term.mm = true;
        } else {
          lp.fail(kind.column, "unknown propensity kind '" + std::string(kind.text) + "'");
        }
        pr.terms.push_back(term);
        if (lp.done()) break;
        const Token sep = lp.next();
        if (sep.text != "+") lp.fail(sep.column, "unexpected token '" + std::string(sep.text) + "'");
      }
      pending.push_back(std::move(pr));
    } else {
      lp.fail(head.column, "unknown directive '" + std::string(head.text) + "'");
    }
  }

  if (species.empty()) throw ParseError(line_no, 1, "no species declared");
  if (pending.empty()) throw ParseError(line_no, 1, "no reactions declared");
  if (params.empty()) throw ParseError(line_no, 1, "no parameters declared");

  // Resolve names once every declaration is known.
  for (const auto& pr : pending) {
    auto fail = [&](std::size_t col, const std::string& what) -> void { throw ParseError(pr.line, col, what); };
    auto species_of = [&](const Token& t) {
      auto it = species_index.find(std::string(t.text));
      if (it == species_index.end()) throw ParseError(pr.line, t.column, "unknown species '" + std::string(t.text) + "'");
      return it->second;
    };
    auto param_of = [&](const Token& t) {
      auto it = param_index.find(std::string(t.text));
      if (it == param_index.end()) throw ParseError(pr.line, t.column, "unknown parameter '" + std::string(t.text) + "'");
      return it->second;
    };
    Reaction r;
    r.name = pr.name;
    for (const auto& [t, m] : pr.reactants) r.reactants.push_back({species_of(t), m});
    for (const auto& [t, m] : pr.products) r.products.push_back({species_of(t), m});
    for (const auto& term : pr.terms) {
      PropensityTerm pt;
      if (!term.mm) {
        pt.kind = PropensityKind::mass_action;
        pt.rate = param_of(term.rate);
        pt.factors = r.reactants;
      } else {
        pt.kind = PropensityKind::michaelis_menten;
        pt.rate = param_of(term.rate);
        pt.km = param_of(term.km);
        if (term.substrate) {
          pt.substrate = species_of(*term.substrate);
        } else {
          if (r.reactants.size() != 1 || r.reactants.front().multiplicity != 1) {
            fail(term.column, "mm term needs substrate=<species> unless the reaction has exactly one reactant");
          }
          pt.substrate = r.reactants.front().species;
        }
        for (const auto& mod : term.modifiers) pt.factors.push_back({species_of(mod), 1});
        if (pt.rate == pt.km) fail(term.column, "vmax and km must be different parameters");
        for (const auto& f : pt.factors) {
          if (f.species == pt.substrate) fail(term.column, "modifier repeats the substrate");
        }
      }
      r.propensity.terms.push_back(std::move(pt));
    }
    reactions.push_back(std::move(r));
  }

  try {
    return ReactionNetwork(std::move(species), std::move(initial), std::move(params), std::move(values),
                           std::move(reactions));
  } catch (const ValidationError& e) {
    throw ParseError(line_no, 1, e.what());
  }
}

/// Canonical text form; parse_network(serialize_network(net)) == net.
inline std::string serialize_network(const ReactionNetwork& net) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& sp = net.species_names();
  const auto& pn = net.parameter_names();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    os << "species " << sp[i];
    if (net.initial_counts()[i] != 0) os << " initial " << net.initial_counts()[i];
    os << '\n';
  }
  for (std::size_t p = 0; p < pn.size(); ++p) os << "param " << pn[p] << ' ' << net.parameter_values()[p] << '\n';
  auto side = [&](const std::vector<SpeciesCount>& terms) {
    if (terms.empty()) {
      os << '0';
      return;
    }
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (i) os << " + ";
      if (terms[i].multiplicity != 1) os << terms[i].multiplicity << '*';
      os << sp[terms[i].species];
    }
  };
  for (const auto& r : net.reactions()) {
    os << "reaction " << r.name << ": ";
    side(r.reactants);
    os << " -> ";
    side(r.products);
    os << " @ ";
    for (std::size_t i = 0; i < r.propensity.terms.size(); ++i) {
      const auto& t = r.propensity.terms[i];
      if (i) os << " + ";
      if (t.kind == PropensityKind::mass_action) {
        os << "massaction " << pn[t.rate];
      } else {
        os << "mm vmax=" << pn[t.rate] << " km=" << pn[t.km] << " substrate=" << sp[t.substrate];
        if (!t.factors.empty()) {
          os << " modifiers=";
          for (std::size_t f = 0; f < t.factors.size(); ++f) {
            if (f) os << '*';
            os << sp[t.factors[f].species];
          }
        }
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace pathsens
