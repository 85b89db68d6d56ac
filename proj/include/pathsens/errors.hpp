#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pathsens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const char* kind() const noexcept override { return "parse_error"; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation_error"; }
};

/// Raised when log a_j is differentiated at a state where a_j = 0.
class UndefinedGradient : public Error {
 public:
  explicit UndefinedGradient(std::size_t reaction)
      : Error("log-gradient undefined: propensity of reaction " + std::to_string(reaction) + " is zero"),
        reaction_(reaction) {}
  std::size_t reaction() const noexcept { return reaction_; }
  const char* kind() const noexcept override { return "undefined_gradient"; }

 private:
  std::size_t reaction_;
};

class NegativeCount : public Error {
 public:
  NegativeCount(std::size_t reaction, std::size_t species)
      : Error("reaction " + std::to_string(reaction) + " drives species " + std::to_string(species) +
              " negative"),
        reaction_(reaction),
        species_(species) {}
  std::size_t reaction() const noexcept { return reaction_; }
  std::size_t species() const noexcept { return species_; }
  const char* kind() const noexcept override { return "negative_count"; }

 private:
  std::size_t reaction_;
  std::size_t species_;
};

class CountOverflow : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "count_overflow"; }
};

/// No reaction can fire (a_0 = 0) before anything was accumulated.
class AbsorbingState : public Error {
 public:
  explicit AbsorbingState(double time)
      : Error("absorbing state reached at t = " + std::to_string(time)), time_(time) {}
  double time() const noexcept { return time_; }
  const char* kind() const noexcept override { return "absorbing_state"; }

 private:
  double time_;
};

/// a_j^theta(x) > 0 while the perturbed a_j(x) = 0: the relative entropy is infinite.
class AbsoluteContinuityViolation : public Error {
 public:
  explicit AbsoluteContinuityViolation(std::size_t reaction)
      : Error("absolute continuity violated at reaction " + std::to_string(reaction) +
              ": perturbed propensity vanishes where the nominal one does not"),
        reaction_(reaction) {}
  std::size_t reaction() const noexcept { return reaction_; }
  const char* kind() const noexcept override { return "absolute_continuity_violation"; }

 private:
  std::size_t reaction_;
};

class OffBlockLeak : public Error {
 public:
  OffBlockLeak(std::size_t row, std::size_t col, double value)
      : Error("off-block entry (" + std::to_string(row) + ", " + std::to_string(col) +
              ") = " + std::to_string(value) + " exceeds tolerance"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }
  const char* kind() const noexcept override { return "off_block_leak"; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time) : Error(what + " at t = " + std::to_string(time)), time_(time) {}
  double time() const noexcept { return time_; }
  const char* kind() const noexcept override { return "integration_error"; }

 private:
  double time_;
};

}  // namespace pathsens
