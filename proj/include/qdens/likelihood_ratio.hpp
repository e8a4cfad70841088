#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "qdens/errors.hpp"
#include "qdens/grid.hpp"
#include "qdens/network.hpp"
#include "qdens/normal.hpp"
#include "qdens/pointset.hpp"

// Likelihood-ratio style density estimators.  All of them average summands
// of the form I[X_i <= x] * w_i (times an x-dependent factor), so one
// bucket-accumulator serves the whole family: each point deposits its
// weight in the first abscissa >= X_i and a prefix sum yields the curve.

namespace qdens {

class IndicatorAccumulator {
 public:
  explicit IndicatorAccumulator(std::span<const double> xs)
      : xs_(xs.begin(), xs.end()), buckets_(xs.size(), 0.0) {
    for (std::size_t k = 1; k < xs_.size(); ++k)
      if (!(xs_[k] > xs_[k - 1]))
        throw std::invalid_argument("abscissae must be strictly increasing");
  }

  void add(double x_value, double weight) {
    const auto it = std::lower_bound(xs_.begin(), xs_.end(), x_value);
    if (it == xs_.end()) {
      ++count_;
      return;  // beyond the grid: indicator zero everywhere
    }
    buckets_[static_cast<std::size_t>(it - xs_.begin())] += weight;
    ++count_;
  }

  // out[k] = (1/n) sum_{i : X_i <= x_k} w_i
  std::vector<double> finish() const {
    std::vector<double> out(buckets_.size(), 0.0);
    double run = 0.0;
    const double inv_n = 1.0 / static_cast<double>(count_);
    for (std::size_t k = 0; k < buckets_.size(); ++k) {
      run += buckets_[k];
      out[k] = run * inv_n;
    }
    return out;
  }

  std::size_t count() const { return count_; }

 private:
  std::vector<double> xs_;
  std::vector<double> buckets_;
  std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------
// LRDE: f_hat(x) = I[h(Y) <= x] * S(Y, x) with the score
// S(Y, x) = (s - sum_j (Y_j - mu_j) Y_j / sigma_j^2) / x.  The same formula
// serves both network models (the output map is positively homogeneous in
// both cases); it requires a strictly positive evaluation range.

inline void check_positive_xs(std::span<const double> xs) {
  for (double x : xs)
    if (!(x > 0.0))
      throw std::invalid_argument(
          "lrde/glru: evaluation abscissae must be strictly positive");
}

inline std::vector<double> lrde_values(const PointSet& points,
                                       const NetworkModel& model,
                                       std::span<const double> xs) {
  check_positive_xs(xs);
  IndicatorAccumulator acc(xs);
  const int s = model.dim();
  std::vector<double> y(static_cast<std::size_t>(s));
  for (std::size_t i = 0; i < points.size(); ++i) {
    model.sample_arcs(points.row(i).first(static_cast<std::size_t>(s)), y);
    acc.add(model.output(y), model.lr_score_base(y));
  }
  auto out = acc.finish();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= xs[k];
  return out;
}

inline DensityEstimate lrde_density(const PointSet& points,
                                    const NetworkModel& model,
                                    const EvalGrid& grid) {
  DensityEstimate out;
  out.grid = grid;
  out.estimator = "lrde";
  out.n = points.size();
  out.values = lrde_values(points, model, grid.xs());
  out.check_finite();
  return out;
}

// ---------------------------------------------------------------------------
// GLR-U closed forms.  Each variant averages
//   G(U; x) = -I[h(Y) <= x] * sum_{j in J} (Y_j - mu_j) / sigma_j^2,
// the hidden-coordinate sets being {1,2,3} and {10,11} (1-based) for the
// shortest-path model and {1,4,10} for the max-flow model.

enum class GlruVariant { j1, j2, maxflow };

inline const char* glru_name(GlruVariant v) {
  switch (v) {
    case GlruVariant::j1: return "glru-j1";
    case GlruVariant::j2: return "glru-j2";
    default: return "glru-maxflow";
  }
}

inline std::span<const int> glru_coords(GlruVariant v) {
  static constexpr int j1[] = {0, 1, 2};
  static constexpr int j2[] = {9, 10};
  static constexpr int mf[] = {0, 3, 9};
  switch (v) {
    case GlruVariant::j1: return j1;
    case GlruVariant::j2: return j2;
    default: return mf;
  }
}

inline ModelKind glru_model_kind(GlruVariant v) {
  return v == GlruVariant::maxflow ? ModelKind::max_flow
                                   : ModelKind::shortest_path;
}

inline std::vector<double> glru_values(const PointSet& points,
                                       const NetworkModel& model,
                                       GlruVariant variant,
                                       std::span<const double> xs) {
  if (model.kind() != glru_model_kind(variant))
    throw IncompatibilityError(
        std::string(glru_name(variant)) +
        ": closed form is specific to the " +
        model_name(glru_model_kind(variant)) + " model");
  check_positive_xs(xs);
  IndicatorAccumulator acc(xs);
  const int s = model.dim();
  const auto coords = glru_coords(variant);
  const auto& dists = model.arc_dists();
  std::vector<double> y(static_cast<std::size_t>(s));
  for (std::size_t i = 0; i < points.size(); ++i) {
    model.sample_arcs(points.row(i).first(static_cast<std::size_t>(s)), y);
    double w = 0.0;
    for (int j : coords) {
      const auto& p = dists[static_cast<std::size_t>(j)];
      w += (y[static_cast<std::size_t>(j)] - p.mu) / (p.sigma * p.sigma);
    }
    acc.add(model.output(y), -w);
  }
  return acc.finish();
}

inline DensityEstimate glru_density(const PointSet& points,
                                    const NetworkModel& model,
                                    GlruVariant variant, const EvalGrid& grid) {
  DensityEstimate out;
  out.grid = grid;
  out.estimator = glru_name(variant);
  out.n = points.size();
  out.values = glru_values(points, model, variant, grid.xs());
  out.check_finite();
  return out;
}

// ---------------------------------------------------------------------------
// Coordinate-wise GLR density estimator D_j(x, Y) = I[h(Y) <= x] Psi_j(Y),
//   Psi_j = (dlog f_j(y_j)/dy_j - h_(jj)/h_(j)) / h_(j).
// Requires first and second output derivatives in coordinate j; models
// without such hooks (the min-type network outputs have kinks) cannot
// instantiate it.

template <typename M>
concept GlrDifferentiable = requires(const M& m, std::span<const double> u,
                                     std::span<double> yout,
                                     std::span<const double> y, int j) {
  { m.dim() } -> std::convertible_to<int>;
  m.sample(u, yout);
  { m.value(y) } -> std::convertible_to<double>;
  { m.output_d1(j, y) } -> std::convertible_to<double>;
  { m.output_d2(j, y) } -> std::convertible_to<double>;
  { m.dlogf_dy(j, y) } -> std::convertible_to<double>;
};

// X = sum of independent normals; the reference model with closed-form
// density for validating the GLR machinery.
class IndependentSumModel {
 public:
  explicit IndependentSumModel(std::vector<NormalParams> dists)
      : dists_(std::move(dists)) {}

  int dim() const { return static_cast<int>(dists_.size()); }
  const std::vector<NormalParams>& dists() const { return dists_; }

  void sample(std::span<const double> u, std::span<double> y) const {
    for (std::size_t j = 0; j < dists_.size(); ++j)
      y[j] = dists_[j].mu + dists_[j].sigma * detail::std_normal_quantile(u[j]);
  }

  double value(std::span<const double> y) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < dists_.size(); ++j) acc += y[j];
    return acc;
  }

  double output_d1(int, std::span<const double>) const { return 1.0; }
  double output_d2(int, std::span<const double>) const { return 0.0; }
  double dlogf_dy(int j, std::span<const double> y) const {
    const auto& p = dists_[static_cast<std::size_t>(j)];
    return -(y[static_cast<std::size_t>(j)] - p.mu) / (p.sigma * p.sigma);
  }

  // Density of the sum: normal with summed mean and summed variance.
  double density(double x) const {
    double mu = 0.0, var = 0.0;
    for (const auto& p : dists_) {
      mu += p.mu;
      var += p.sigma * p.sigma;
    }
    return normal_pdf(x, {mu, std::sqrt(var)});
  }

 private:
  std::vector<NormalParams> dists_;
};

template <GlrDifferentiable M>
double glr_psi(const M& model, int j, std::span<const double> y) {
  const double d1 = model.output_d1(j, y);
  if (d1 == 0.0)
    throw NumericalError("glr: output derivative vanished at a sample point");
  return (model.dlogf_dy(j, y) - model.output_d2(j, y) / d1) / d1;
}

template <GlrDifferentiable M>
std::vector<double> glr_values(const PointSet& points, const M& model, int j,
                               std::span<const double> xs) {
  IndicatorAccumulator acc(xs);
  const auto s = static_cast<std::size_t>(model.dim());
  std::vector<double> y(s);
  for (std::size_t i = 0; i < points.size(); ++i) {
    model.sample(points.row(i).first(s), y);
    acc.add(model.value(y), glr_psi(model, j, y));
  }
  return acc.finish();
}

template <GlrDifferentiable M>
DensityEstimate glr_density(const PointSet& points, const M& model, int j,
                            const EvalGrid& grid) {
  DensityEstimate out;
  out.grid = grid;
  out.estimator = "glr";
  out.n = points.size();
  out.values = glr_values(points, model, j, grid.xs());
  out.check_finite();
  return out;
}

// ---------------------------------------------------------------------------
// Control-variate combination of unbiased estimators sharing one target:
// base D_1 plus mean-zero controls C_j = D_j - D_1 with weights fitted by
// least squares on a pilot prefix and applied to the remaining points, so
// the combination stays unbiased.

struct CvCombined {
  double value = 0.0;
  std::vector<double> weights;  // over D_1..D_r, summing to 1
};

namespace detail {

// Solves A w = rhs in place; returns false on a (near-)singular pivot.
inline bool solve_small(std::vector<double>& a, std::vector<double>& rhs) {
  const std::size_t r = rhs.size();
  double scale = 1e-300;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (std::size_t col = 0; col < r; ++col) {
    std::size_t piv = col;
    for (std::size_t row = col + 1; row < r; ++row)
      if (std::abs(a[row * r + col]) > std::abs(a[piv * r + col])) piv = row;
    if (std::abs(a[piv * r + col]) < 1e-12 * scale) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < r; ++c)
        std::swap(a[piv * r + c], a[col * r + c]);
      std::swap(rhs[piv], rhs[col]);
    }
    const double inv = 1.0 / a[col * r + col];
    for (std::size_t row = col + 1; row < r; ++row) {
      const double f = a[row * r + col] * inv;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < r; ++c) a[row * r + c] -= f * a[col * r + c];
      rhs[row] -= f * rhs[col];
    }
  }
  for (std::size_t col = r; col-- > 0;) {
    double v = rhs[col];
    for (std::size_t c = col + 1; c < r; ++c) v -= a[col * r + c] * rhs[c];
    rhs[col] = v / a[col * r + col];
  }
  return true;
}

}  // namespace detail

inline CvCombined cv_combine(std::span<const std::vector<double>> estimators,
                             double pilot_fraction = 0.1) {
  const std::size_t r = estimators.size();
  if (r < 2) throw std::invalid_argument("cv_combine: need at least 2 estimators");
  const std::size_t n = estimators[0].size();
  for (const auto& d : estimators)
    if (d.size() != n)
      throw std::invalid_argument("cv_combine: length mismatch");
  std::size_t pilot = static_cast<std::size_t>(
      pilot_fraction * static_cast<double>(n));
  pilot = std::max<std::size_t>(pilot, 2);
  if (pilot + 1 > n)
    throw std::invalid_argument("cv_combine: too few points for a pilot split");

  const std::size_t q = r - 1;  // number of controls
  std::vector<double> mean(r, 0.0);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < pilot; ++i) mean[j] += estimators[j][i];
    mean[j] /= static_cast<double>(pilot);
  }
  // Pilot covariances of the controls and of each control with the base.
  std::vector<double> cov(q * q, 0.0), b(q, 0.0);
  for (std::size_t i = 0; i < pilot; ++i) {
    const double d0 = estimators[0][i] - mean[0];
    for (std::size_t j = 0; j < q; ++j) {
      const double cj = (estimators[j + 1][i] - estimators[0][i]) -
                        (mean[j + 1] - mean[0]);
      b[j] += cj * d0;
      for (std::size_t l = 0; l <= j; ++l) {
        const double cl = (estimators[l + 1][i] - estimators[0][i]) -
                          (mean[l + 1] - mean[0]);
        cov[j * q + l] += cj * cl;
      }
    }
  }
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t l = j + 1; l < q; ++l) cov[j * q + l] = cov[l * q + j];
  for (double& v : b) v = -v;

  CvCombined out;
  std::vector<double> w = b;
  if (!detail::solve_small(cov, w)) {
    // Degenerate controls: fall back to the plain average of all r.
    out.weights.assign(r, 1.0 / static_cast<double>(r));
    double acc = 0.0;
    for (std::size_t i = pilot; i < n; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < r; ++j) v += estimators[j][i];
      acc += v / static_cast<double>(r);
    }
    out.value = acc / static_cast<double>(n - pilot);
    return out;
  }
  out.weights.resize(r);
  double wsum = 0.0;
  for (std::size_t j = 0; j < q; ++j) wsum += w[j];
  out.weights[0] = 1.0 - wsum;
  for (std::size_t j = 0; j < q; ++j) out.weights[j + 1] = w[j];
  double acc = 0.0;
  for (std::size_t i = pilot; i < n; ++i) {
    double v = estimators[0][i];
    for (std::size_t j = 0; j < q; ++j)
      v += w[j] * (estimators[j + 1][i] - estimators[0][i]);
    acc += v;
  }
  out.value = acc / static_cast<double>(n - pilot);
  return out;
}

// Combined GLR curve: at each abscissa, the control-variate combination of
// the per-coordinate estimators.
template <GlrDifferentiable M>
std::vector<double> glr_cv_values(const PointSet& points, const M& model,
                                  std::span<const int> coords,
                                  std::span<const double> xs,
                                  double pilot_fraction = 0.1) {
  if (coords.size() < 2)
    throw std::invalid_argument("glr_cv: need at least 2 coordinates");
  const std::size_t n = points.size();
  const auto s = static_cast<std::size_t>(model.dim());
  std::vector<double> xvals(n);
  std::vector<double> psi(n * coords.size());
  std::vector<double> y(s);
  for (std::size_t i = 0; i < n; ++i) {
    model.sample(points.row(i).first(s), y);
    xvals[i] = model.value(y);
    for (std::size_t c = 0; c < coords.size(); ++c)
      psi[i * coords.size() + c] = glr_psi(model, coords[c], y);
  }
  std::vector<std::vector<double>> d(coords.size(),
                                     std::vector<double>(n, 0.0));
  std::vector<double> out(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool in = xvals[i] <= xs[k];
      for (std::size_t c = 0; c < coords.size(); ++c)
        d[c][i] = in ? psi[i * coords.size() + c] : 0.0;
    }
    out[k] = cv_combine(d, pilot_fraction).value;
  }
  return out;
}

}  // namespace qdens
