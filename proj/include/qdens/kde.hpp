#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "qdens/errors.hpp"
#include "qdens/grid.hpp"
#include "qdens/normal.hpp"

// Histogram and Gaussian kernel density estimators with plug-in bandwidth
// selection (Gaussian-reference pilot).

namespace qdens {

// Gaussian kernel constants: mu0_k2 = int k^2 and mu2_k = int x^2 k(x) dx.
struct KernelSpec {
  double mu0_k2 = 0.5 * std::numbers::inv_sqrtpi;  // 1 / (2 sqrt(pi))
  double mu2_k = 1.0;
};

namespace detail {

inline double sample_sd(std::span<const double> sample) {
  const auto n = sample.size();
  if (n < 2) throw std::invalid_argument("need at least 2 samples");
  double mean = 0.0;
  for (double v : sample) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : sample) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

}  // namespace detail

// AMISE-optimal bandwidth h* = (mu0(k^2) / (mu2(k)^2 R(f'') n))^{1/5} with
// the Gaussian-reference pilot R(f'') = 3 / (8 sqrt(pi) sd^5).  For normal
// data this reduces to (4/3n)^{1/5} sd.
inline double plugin_bandwidth(std::span<const double> sample,
                               KernelSpec kernel = {}) {
  const double sd = detail::sample_sd(sample);
  if (!(sd > 0.0))
    throw NumericalError("plugin_bandwidth: degenerate sample (sd = 0)");
  const double r_fpp =
      3.0 / (8.0 * std::sqrt(std::numbers::pi) * std::pow(sd, 5.0));
  const double n = static_cast<double>(sample.size());
  return std::pow(kernel.mu0_k2 / (kernel.mu2_k * kernel.mu2_k * r_fpp * n),
                  0.2);
}

// Histogram bin count from the matching plug-in rule,
// h* = (n R(f')/6)^{-1/3} with the Gaussian-reference R(f') =
// 1 / (4 sqrt(pi) sd^3), clamped to at least one bin.
inline int plugin_bin_count(std::span<const double> sample,
                            const EvalGrid& grid) {
  const double sd = detail::sample_sd(sample);
  if (!(sd > 0.0))
    throw NumericalError("plugin_bin_count: degenerate sample (sd = 0)");
  const double r_fp = 1.0 / (4.0 * std::sqrt(std::numbers::pi) * sd * sd * sd);
  const double h =
      std::pow(static_cast<double>(sample.size()) * r_fp / 6.0, -1.0 / 3.0);
  return std::max(1, static_cast<int>(std::lround((grid.b - grid.a) / h)));
}

// Histogram density over [a,b] with m equal bins: n_j / (n h) on bin j.
// Samples outside [a,b] are ignored (they reduce in-range mass).
inline DensityEstimate histogram_density(std::span<const double> sample,
                                         const EvalGrid& grid, int m_bins) {
  grid.validate();
  if (m_bins < 1) throw std::invalid_argument("histogram: m_bins >= 1");
  if (sample.empty()) throw std::invalid_argument("histogram: empty sample");
  const double h = (grid.b - grid.a) / m_bins;
  std::vector<double> counts(static_cast<std::size_t>(m_bins), 0.0);
  for (double v : sample) {
    if (v < grid.a || v >= grid.b) continue;
    auto bin = static_cast<std::size_t>((v - grid.a) / h);
    if (bin >= counts.size()) bin = counts.size() - 1;
    counts[bin] += 1.0;
  }
  DensityEstimate out;
  out.grid = grid;
  out.estimator = "hist";
  out.n = sample.size();
  out.values.resize(static_cast<std::size_t>(grid.g));
  const double scale = 1.0 / (static_cast<double>(sample.size()) * h);
  for (int k = 0; k < grid.g; ++k) {
    auto bin = static_cast<std::size_t>((grid.x(k) - grid.a) / h);
    if (bin >= counts.size()) bin = counts.size() - 1;
    out.values[static_cast<std::size_t>(k)] = counts[bin] * scale;
  }
  return out;
}

namespace detail {

// Accumulates Gaussian kernel bumps on arbitrary (ascending) abscissae.
// Contributions beyond kKernelCutoff bandwidths are dropped; the omitted
// mass per sample is below phi(8)/h.
inline constexpr double kKernelCutoff = 8.0;

inline void kde_accumulate(std::span<const double> sample,
                           std::span<const double> xs, double h,
                           std::span<double> acc) {
  const auto& table = StdNormalTable::instance();
  const double inv_h = 1.0 / h;
  for (double v : sample) {
    const double lo = v - kKernelCutoff * h;
    const double hi = v + kKernelCutoff * h;
    auto first = std::lower_bound(xs.begin(), xs.end(), lo) - xs.begin();
    for (auto k = static_cast<std::size_t>(first);
         k < xs.size() && xs[k] <= hi; ++k)
      acc[k] += table.pdf((xs[k] - v) * inv_h);
  }
}

}  // namespace detail

// Gaussian KDE: value(x) = (1/(n h)) sum_i k((x - X_i)/h).
inline DensityEstimate kde_density(std::span<const double> sample,
                                   const EvalGrid& grid, double h,
                                   KernelSpec = {}) {
  grid.validate();
  if (!(h > 0.0)) throw std::invalid_argument("kde: bandwidth must be > 0");
  if (sample.empty()) throw std::invalid_argument("kde: empty sample");
  DensityEstimate out;
  out.grid = grid;
  out.estimator = "kde";
  out.n = sample.size();
  out.values.assign(static_cast<std::size_t>(grid.g), 0.0);
  const auto xs = grid.xs();
  detail::kde_accumulate(sample, xs, h, out.values);
  const double scale = 1.0 / (static_cast<double>(sample.size()) * h);
  for (double& v : out.values) v *= scale;
  return out;
}

}  // namespace qdens
