#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bss {

/// Incompatible matrix or block dimensions.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside a law's support or a parameter's admissible range.
class support_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Singular (or numerically singular) linear system.
class solve_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced during evaluation or iteration. Carries the
/// offending sample index when one is known (-1 otherwise).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what, long sample = -1)
      : std::runtime_error(what), sample_(sample) {}
  long sample_index() const { return sample_; }

 private:
  long sample_;
};

/// Iteration blew up; carries the criterion trace up to the failure point.
class divergence_error : public numeric_error {
 public:
  divergence_error(const std::string& what, std::vector<double> trace)
      : numeric_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

/// Requested operation is undefined for the given law or prior.
class unsupported_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace bss
