#pragma once

#include <stdexcept>
#include <string>

namespace qdens {

// Estimator/model (or variant) combinations that are mathematically
// inadmissible, e.g. a conditional estimator on a model whose conditional
// CDF has atoms.  CLI maps this to exit code 3.
class IncompatibilityError : public std::runtime_error {
 public:
  explicit IncompatibilityError(const std::string& what)
      : std::runtime_error(what) {}
};

// A numerical validation failed (reference coverage check, degenerate
// sample, ...).  CLI maps this to exit code 4.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace qdens
