#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdens {

// Uniform evaluation grid over [a,b]: g cell midpoints
// x_k = a + (k + 1/2)(b-a)/g.
struct EvalGrid {
  double a = 0.0;
  double b = 1.0;
  int g = 64;

  void validate() const {
    if (!(a < b) || g < 2)
      throw std::invalid_argument("EvalGrid: need a < b and g >= 2");
  }

  double dx() const { return (b - a) / g; }
  double x(int k) const { return a + (k + 0.5) * dx(); }

  std::vector<double> xs() const {
    validate();
    std::vector<double> out(static_cast<std::size_t>(g));
    for (int k = 0; k < g; ++k) out[static_cast<std::size_t>(k)] = x(k);
    return out;
  }
};

struct DensityEstimate {
  EvalGrid grid;
  std::vector<double> values;  // estimated f(x_k), finite
  std::string estimator;
  std::string sampler;
  std::size_t n = 0;

  void check_finite() const {
    for (double v : values)
      if (!std::isfinite(v))
        throw std::runtime_error("DensityEstimate: non-finite value");
  }
};

}  // namespace qdens
