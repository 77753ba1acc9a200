#pragma once

#include <stdexcept>
#include <string>

namespace backcalc {

// Wrong basis/penalty/matrix dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed user input: grids, files, dates, parameters.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A quantity left its mathematical domain (mu <= 0, underflow, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An iterative method failed; `trace` carries the iteration log.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::string trace = {})
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::string& trace() const { return trace_; }

 private:
  std::string trace_;
};

}  // namespace backcalc
