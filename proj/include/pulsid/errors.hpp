#pragma once

#include <stdexcept>
#include <string>

namespace pulsid {

/// Non-finite or out-of-range numeric input.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Caller violated a precondition (ordering, dimensions, admissibility).
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A solver could not produce a solution (singular system, iteration cap).
class SolverFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// No admissible estimate exists for the given data and grid.
class EstimationFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class InputError : public std::runtime_error {
public:
  InputError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace pulsid
