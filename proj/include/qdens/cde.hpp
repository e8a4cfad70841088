#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "qdens/errors.hpp"
#include "qdens/grid.hpp"
#include "qdens/network.hpp"
#include "qdens/normal.hpp"
#include "qdens/pointset.hpp"

// Conditional density estimator for the shortest-path model.  Hiding the
// arcs of a minimal directed cut L that every path crosses exactly once
// makes X = min_{j in L} (P_j + Y_j) conditionally on the other arcs, so
// the conditional CDF is 1 - prod_{j in L} (1 - F_j(x - P_j)) and its
// x-derivative
//
//   f(x | G) = sum_{j in L} f_j(x - P_j) prod_{l != j} (1 - F_l(x - P_l))
//
// is an unbiased, smooth density estimator.  For the max-flow model the
// conditional CDF has atoms (e.g. hiding {Y_10, Y_11} leaves positive
// probability that the flow equals Y_10 + Y_11 exactly), so the estimator
// is biased there and the model is rejected.

namespace qdens {

// Per-replicate accumulator; not safe for concurrent use.
class CdeAccumulator {
 public:
  CdeAccumulator(const NetworkModel& model, const CutSet& cut,
                 std::span<const double> xs)
      : model_(&model), cut_(&cut), xs_(xs.begin(), xs.end()) {
    if (model.kind() != ModelKind::shortest_path)
      throw IncompatibilityError(
          "cde: only the shortest-path model admits the cut-conditional "
          "estimator; the max-flow conditional CDF has atoms, which makes "
          "the estimator biased (use lrde or glru-maxflow instead)");
    if (!cut.exactly_once)
      throw std::invalid_argument(
          "cde: cut must be a minimal directed cut crossed exactly once by "
          "every source-sink path");
    const auto& dists = model.arc_dists();
    for (int a : cut.arcs) {
      mu_.push_back(dists[static_cast<std::size_t>(a)].mu);
      inv_sigma_.push_back(1.0 / dists[static_cast<std::size_t>(a)].sigma);
    }
    acc_.assign(xs_.size(), 0.0);
    pdf_buf_.resize(cut.arcs.size() * xs_.size());
    sur_buf_.resize(cut.arcs.size() * xs_.size());
    count_ = 0;
  }

  // y holds all arcs; entries for cut arcs are never read.
  void add(std::span<const double> y) {
    const auto& table = detail::StdNormalTable::instance();
    const std::size_t nl = mu_.size();
    const std::size_t g = xs_.size();
    double offsets[8];
    model_->network().cut_offsets_into(y, *cut_, offsets);
    for (std::size_t j = 0; j < nl; ++j) {
      const double shift = offsets[j] + mu_[j];
      const double inv_s = inv_sigma_[j];
      double* pdf_row = pdf_buf_.data() + j * g;
      double* sur_row = sur_buf_.data() + j * g;
      for (std::size_t k = 0; k < g; ++k) {
        const auto ps = table.pdf_survival((xs_[k] - shift) * inv_s);
        pdf_row[k] = ps.pdf * inv_s;
        sur_row[k] = ps.survival;
      }
    }
    if (nl == 2) {
      const double* f0 = pdf_buf_.data();
      const double* f1 = pdf_buf_.data() + g;
      const double* s0 = sur_buf_.data();
      const double* s1 = sur_buf_.data() + g;
      for (std::size_t k = 0; k < g; ++k)
        acc_[k] += f0[k] * s1[k] + f1[k] * s0[k];
    } else {
      for (std::size_t k = 0; k < g; ++k) {
        double suffix[8];
        suffix[nl - 1] = 1.0;
        for (std::size_t j = nl - 1; j > 0; --j)
          suffix[j - 1] = suffix[j] * sur_buf_[j * g + k];
        double prefix = 1.0;
        double val = 0.0;
        for (std::size_t j = 0; j < nl; ++j) {
          val += pdf_buf_[j * g + k] * prefix * suffix[j];
          prefix *= sur_buf_[j * g + k];
        }
        acc_[k] += val;
      }
    }
    ++count_;
  }

  std::vector<double> finish() const {
    std::vector<double> out(acc_);
    const double inv_n = 1.0 / static_cast<double>(count_);
    for (double& v : out) v *= inv_n;
    return out;
  }

  std::size_t count() const { return count_; }

 private:
  const NetworkModel* model_;
  const CutSet* cut_;
  std::vector<double> xs_;
  std::vector<double> mu_, inv_sigma_;
  std::vector<double> acc_, pdf_buf_, sur_buf_;
  std::size_t count_ = 0;
};

// Evaluates the conditional density estimator on explicit abscissae.
// Coordinate j of each point drives arc j; cut-arc coordinates are unused.
inline std::vector<double> cde_values(const PointSet& points,
                                      const NetworkModel& model,
                                      const CutSet& cut,
                                      std::span<const double> xs) {
  CdeAccumulator acc(model, cut, xs);
  const auto& dists = model.arc_dists();
  const int s = model.dim();
  if (points.dim() < s)
    throw std::invalid_argument("cde: point dimension below arc count");
  std::vector<double> y(static_cast<std::size_t>(s), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto u = points.row(i);
    for (int j = 0; j < s; ++j) {
      if (cut.mask & (1u << j)) continue;
      const auto ju = static_cast<std::size_t>(j);
      y[ju] = dists[ju].mu +
              dists[ju].sigma * detail::std_normal_quantile(u[ju]);
    }
    acc.add(y);
  }
  return acc.finish();
}

inline DensityEstimate cde_density(const PointSet& points,
                                   const NetworkModel& model,
                                   const CutSet& cut, const EvalGrid& grid) {
  DensityEstimate out;
  out.grid = grid;
  out.estimator = "cde";
  out.n = points.size();
  out.values = cde_values(points, model, cut, grid.xs());
  out.check_finite();
  return out;
}

// The conditional density for one realization (offsets aligned with
// cut.arcs), exposed for tests and quadrature checks.
inline double cde_conditional_density(double x, const NetworkModel& model,
                                      const CutSet& cut,
                                      std::span<const double> offsets) {
  const auto& dists = model.arc_dists();
  double val = 0.0;
  for (std::size_t j = 0; j < cut.arcs.size(); ++j) {
    const auto& pj = dists[static_cast<std::size_t>(cut.arcs[j])];
    double term = normal_pdf(x - offsets[j], pj);
    for (std::size_t l = 0; l < cut.arcs.size(); ++l) {
      if (l == j) continue;
      const auto& pl = dists[static_cast<std::size_t>(cut.arcs[l])];
      term *= normal_survival(x - offsets[l], pl);
    }
    val += term;
  }
  return val;
}

}  // namespace qdens
