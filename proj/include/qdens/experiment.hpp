#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qdens/cde.hpp"
#include "qdens/errors.hpp"
#include "qdens/grid.hpp"
#include "qdens/kde.hpp"
#include "qdens/likelihood_ratio.hpp"
#include "qdens/network.hpp"
#include "qdens/pointset.hpp"
#include "qdens/rng.hpp"

// The measurement harness: replicate an estimator over m independent point
// sets (fresh MC streams or fresh net randomizations), estimate IV / ISB /
// MISE on a grid against a reference density, and fit the MISE convergence
// exponent by log-log regression.
//
// Stream discipline: replicate r at sample size n uses the seed
// derive_seed(master, kTagReplicate, n, r) both for MC points and for net
// randomizations, so a run is fully reproducible from its config.  When
// several estimators are swept together they share the point sets, which
// leaves each estimator's output identical to a solo run.

namespace qdens {

enum class SamplerKind { mc, sobol_lms_shift };

inline const char* sampler_name(SamplerKind s) {
  return s == SamplerKind::mc ? "mc" : "sobol";
}

inline constexpr std::uint64_t kTagReplicate = 0x04;

// ---------------------------------------------------------------------------
// Estimator registry

inline const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names = {
      "kde",  "hist",    "cde-cut1", "cde-cut2",    "lrde",
      "glr",  "glru-j1", "glru-j2",  "glru-maxflow"};
  return names;
}

// Empty string when compatible, otherwise the reason for rejection.
inline std::string estimator_incompatibility(const std::string& estimator,
                                             ModelKind kind) {
  const bool sp = kind == ModelKind::shortest_path;
  if (estimator == "kde" || estimator == "hist" || estimator == "lrde")
    return {};
  if (estimator == "cde-cut1" || estimator == "cde-cut2")
    return sp ? std::string{}
              : "the conditional (cut-hiding) estimator is biased for the "
                "max-flow model: the conditional CDF given the non-cut arcs "
                "has probability atoms";
  if (estimator == "glru-j1" || estimator == "glru-j2")
    return sp ? std::string{}
              : estimator + " is a shortest-path closed form";
  if (estimator == "glru-maxflow")
    return sp ? "glru-maxflow is a max-flow closed form" : std::string{};
  if (estimator == "glr")
    return "glr needs first and second output derivatives in one input "
           "coordinate; min-type network outputs have kinks, so neither "
           "built-in model exposes those hooks";
  return "unknown estimator '" + estimator + "'";
}

inline void require_compatible(const std::string& estimator, ModelKind kind) {
  const std::string why = estimator_incompatibility(estimator, kind);
  if (!why.empty())
    throw IncompatibilityError(estimator + " x " + model_name(kind) + ": " +
                               why);
}

// ---------------------------------------------------------------------------
// Per-replicate estimator evaluation

namespace detail {

class ReplicateEvaluator {
 public:
  virtual ~ReplicateEvaluator() = default;
  virtual void add(std::span<const double> u, std::span<const double> y,
                   double x_out) = 0;
  virtual std::vector<double> finish() = 0;
};

class CdeEvaluator final : public ReplicateEvaluator {
 public:
  CdeEvaluator(const NetworkModel& model, const CutSet& cut,
               std::span<const double> xs)
      : acc_(model, cut, xs) {}
  void add(std::span<const double>, std::span<const double> y,
           double) override {
    acc_.add(y);
  }
  std::vector<double> finish() override { return acc_.finish(); }

 private:
  CdeAccumulator acc_;
};

class LrdeEvaluator final : public ReplicateEvaluator {
 public:
  LrdeEvaluator(const NetworkModel& model, std::span<const double> xs)
      : model_(&model), xs_(xs.begin(), xs.end()), acc_(xs) {
    check_positive_xs(xs);
  }
  void add(std::span<const double>, std::span<const double> y,
           double x_out) override {
    acc_.add(x_out, model_->lr_score_base(y));
  }
  std::vector<double> finish() override {
    auto out = acc_.finish();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= xs_[k];
    return out;
  }

 private:
  const NetworkModel* model_;
  std::vector<double> xs_;
  IndicatorAccumulator acc_;
};

class GlruEvaluator final : public ReplicateEvaluator {
 public:
  GlruEvaluator(const NetworkModel& model, GlruVariant variant,
                std::span<const double> xs)
      : model_(&model), variant_(variant), acc_(xs) {
    if (model.kind() != glru_model_kind(variant))
      throw IncompatibilityError("glru variant/model mismatch");
    check_positive_xs(xs);
  }
  void add(std::span<const double>, std::span<const double> y,
           double x_out) override {
    const auto& dists = model_->arc_dists();
    double w = 0.0;
    for (int j : glru_coords(variant_)) {
      const auto& p = dists[static_cast<std::size_t>(j)];
      w += (y[static_cast<std::size_t>(j)] - p.mu) / (p.sigma * p.sigma);
    }
    acc_.add(x_out, -w);
  }
  std::vector<double> finish() override { return acc_.finish(); }

 private:
  const NetworkModel* model_;
  GlruVariant variant_;
  IndicatorAccumulator acc_;
};

// Collects the output sample, then runs the plug-in KDE (or histogram)
// once the replicate is complete.
class KdeEvaluator final : public ReplicateEvaluator {
 public:
  KdeEvaluator(std::span<const double> xs, std::optional<double> fixed_h)
      : xs_(xs.begin(), xs.end()), fixed_h_(fixed_h) {
    for (std::size_t k = 1; k < xs_.size(); ++k)
      if (!(xs_[k] > xs_[k - 1]))
        throw std::invalid_argument("kde: abscissae must be increasing");
  }
  void add(std::span<const double>, std::span<const double>,
           double x_out) override {
    sample_.push_back(x_out);
  }
  std::vector<double> finish() override {
    const double h = fixed_h_ ? *fixed_h_ : plugin_bandwidth(sample_);
    std::vector<double> out(xs_.size(), 0.0);
    kde_accumulate(sample_, xs_, h, out);
    const double scale = 1.0 / (static_cast<double>(sample_.size()) * h);
    for (double& v : out) v *= scale;
    return out;
  }

 private:
  std::vector<double> xs_;
  std::optional<double> fixed_h_;
  std::vector<double> sample_;
};

class HistEvaluator final : public ReplicateEvaluator {
 public:
  explicit HistEvaluator(const EvalGrid& grid) : grid_(grid) {}
  void add(std::span<const double>, std::span<const double>,
           double x_out) override {
    sample_.push_back(x_out);
  }
  std::vector<double> finish() override {
    return histogram_density(sample_, grid_, plugin_bin_count(sample_, grid_))
        .values;
  }

 private:
  EvalGrid grid_;
  std::vector<double> sample_;
};

struct EvaluatorOptions {
  std::optional<EvalGrid> grid;    // required by "hist"
  std::optional<double> kde_h;     // overrides the plug-in bandwidth
};

inline std::unique_ptr<ReplicateEvaluator> make_evaluator(
    const std::string& name, const NetworkModel& model,
    std::span<const double> xs, const EvaluatorOptions& opts) {
  require_compatible(name, model.kind());
  const Network& net = model.network();
  if (name == "kde") return std::make_unique<KdeEvaluator>(xs, opts.kde_h);
  if (name == "hist") {
    if (!opts.grid)
      throw std::invalid_argument("hist requires a uniform evaluation grid");
    return std::make_unique<HistEvaluator>(*opts.grid);
  }
  if (name == "cde-cut1") {
    static constexpr int arcs[] = {3, 4, 5, 6};
    return std::make_unique<CdeEvaluator>(model, net.cut_by_arcs(arcs), xs);
  }
  if (name == "cde-cut2") {
    static constexpr int arcs[] = {9, 10};
    return std::make_unique<CdeEvaluator>(model, net.cut_by_arcs(arcs), xs);
  }
  if (name == "lrde") return std::make_unique<LrdeEvaluator>(model, xs);
  if (name == "glru-j1")
    return std::make_unique<GlruEvaluator>(model, GlruVariant::j1, xs);
  if (name == "glru-j2")
    return std::make_unique<GlruEvaluator>(model, GlruVariant::j2, xs);
  if (name == "glru-maxflow")
    return std::make_unique<GlruEvaluator>(model, GlruVariant::maxflow, xs);
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

inline const std::vector<std::uint32_t>& builtin_direction_integers(int s) {
  static std::mutex mu;
  static std::map<int, std::vector<std::uint32_t>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(s);
  if (it == cache.end())
    it = cache
             .emplace(s, build_direction_integers(DirectionNumbers::builtin(),
                                                  s))
             .first;
  return it->second;
}

}  // namespace detail

// A replicate's point source per the stream discipline above.
inline PointSource make_replicate_source(SamplerKind sampler, int log2_n,
                                         int s, std::uint64_t master_seed,
                                         int replicate) {
  const std::size_t n = std::size_t{1} << log2_n;
  const std::uint64_t rep_seed = rng::derive_seed(
      master_seed, kTagReplicate, n, static_cast<std::uint64_t>(replicate));
  if (sampler == SamplerKind::mc) return PointSource::mc(n, s, rep_seed);
  const auto& base = detail::builtin_direction_integers(s);
  const auto draw = detail::draw_lms_shift(s, rep_seed);
  std::vector<std::uint32_t> scrambled(base.size());
  for (int d = 0; d < s; ++d) {
    const auto rows = std::span<const std::uint32_t>(draw.rows).subspan(
        static_cast<std::size_t>(d) * kSobolBits, kSobolBits);
    for (int c = 0; c < kSobolBits; ++c) {
      const std::size_t at =
          static_cast<std::size_t>(d) * kSobolBits + static_cast<std::size_t>(c);
      scrambled[at] = detail::apply_row_masks(rows, base[at]);
    }
  }
  return PointSource::sobol(log2_n, s, std::move(scrambled), draw.shifts);
}

// Evaluates every named estimator on one replicate, streaming the points in
// blocks.  Returns one curve (over xs) per estimator.
inline std::vector<std::vector<double>> evaluate_replicate(
    const NetworkModel& model, std::span<const std::string> estimators,
    SamplerKind sampler, int log2_n, int replicate, std::uint64_t master_seed,
    std::span<const double> xs, const detail::EvaluatorOptions& opts = {}) {
  std::vector<std::unique_ptr<detail::ReplicateEvaluator>> evals;
  evals.reserve(estimators.size());
  for (const auto& name : estimators)
    evals.push_back(detail::make_evaluator(name, model, xs, opts));

  const int s = model.dim();
  PointSource src =
      make_replicate_source(sampler, log2_n, s, master_seed, replicate);
  constexpr std::size_t kBlock = 4096;
  std::vector<double> ubuf(kBlock * static_cast<std::size_t>(s));
  std::vector<double> y(static_cast<std::size_t>(s));
  std::size_t remaining = src.size();
  while (remaining > 0) {
    const std::size_t cnt = std::min(kBlock, remaining);
    src.next_block(cnt, ubuf.data());
    for (std::size_t i = 0; i < cnt; ++i) {
      const std::span<const double> u(
          ubuf.data() + i * static_cast<std::size_t>(s),
          static_cast<std::size_t>(s));
      model.sample_arcs(u, y);
      const double x_out = model.output(y);
      for (auto& ev : evals) ev->add(u, y, x_out);
    }
    remaining -= cnt;
  }
  std::vector<std::vector<double>> out;
  out.reserve(evals.size());
  for (auto& ev : evals) out.push_back(ev->finish());
  return out;
}

// ---------------------------------------------------------------------------
// Parallel replicate execution (replicates are the unit of parallelism;
// results land in preassigned slots, so output is independent of the
// thread count).

inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(threads), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct SweepSpec {
  ModelKind model = ModelKind::shortest_path;
  std::vector<std::string> estimators;
  SamplerKind sampler = SamplerKind::mc;
  std::vector<int> log2_ns;
  int replicates = 100;
  std::vector<double> xs;
  std::optional<EvalGrid> grid;  // set when xs are grid midpoints
  std::uint64_t seed = 1;
  int threads = 0;
};

// curves[estimator][n index][replicate] -> values over xs
struct SweepResult {
  std::vector<std::vector<std::vector<std::vector<double>>>> curves;
};

inline SweepResult run_sweep(const SweepSpec& spec) {
  if (spec.estimators.empty() || spec.log2_ns.empty() || spec.replicates < 1)
    throw std::invalid_argument("run_sweep: empty spec");
  for (std::size_t i = 1; i < spec.log2_ns.size(); ++i)
    if (spec.log2_ns[i] <= spec.log2_ns[i - 1])
      throw std::invalid_argument("run_sweep: n values must be increasing");
  const NetworkModel model(spec.model);
  for (const auto& name : spec.estimators)
    require_compatible(name, spec.model);

  SweepResult result;
  result.curves.assign(
      spec.estimators.size(),
      std::vector<std::vector<std::vector<double>>>(
          spec.log2_ns.size(),
          std::vector<std::vector<double>>(
              static_cast<std::size_t>(spec.replicates))));

  detail::EvaluatorOptions opts;
  opts.grid = spec.grid;
  const std::size_t jobs =
      spec.log2_ns.size() * static_cast<std::size_t>(spec.replicates);
  parallel_for(jobs, spec.threads, [&](std::size_t job) {
    const std::size_t ni = job / static_cast<std::size_t>(spec.replicates);
    const int rep = static_cast<int>(job % static_cast<std::size_t>(spec.replicates));
    auto curves = evaluate_replicate(model, spec.estimators, spec.sampler,
                                     spec.log2_ns[ni], rep, spec.seed, spec.xs,
                                     opts);
    for (std::size_t e = 0; e < spec.estimators.size(); ++e)
      result.curves[e][ni][static_cast<std::size_t>(rep)] =
          std::move(curves[e]);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Experiment configuration and the spec-level operations

struct ExperimentConfig {
  ModelKind model = ModelKind::shortest_path;
  std::string estimator = "kde";
  SamplerKind sampler = SamplerKind::mc;
  std::vector<int> log2_ns = {13, 14, 15, 16, 17, 18, 19, 20};
  int replicates = 100;  // m >= 2
  EvalGrid grid;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct ReplicateRuns {
  std::vector<std::size_t> ns;
  std::vector<std::vector<DensityEstimate>> estimates;  // [n index][replicate]
};

inline ReplicateRuns run_replicates(const ExperimentConfig& cfg) {
  if (cfg.replicates < 2)
    throw std::invalid_argument(
        "run_replicates: m >= 2 (variance needs at least two replicates)");
  require_compatible(cfg.estimator, cfg.model);
  SweepSpec spec;
  spec.model = cfg.model;
  spec.estimators = {cfg.estimator};
  spec.sampler = cfg.sampler;
  spec.log2_ns = cfg.log2_ns;
  spec.replicates = cfg.replicates;
  spec.xs = cfg.grid.xs();
  spec.grid = cfg.grid;
  spec.seed = cfg.seed;
  spec.threads = cfg.threads;
  auto swept = run_sweep(spec);

  ReplicateRuns out;
  for (int k : cfg.log2_ns) out.ns.push_back(std::size_t{1} << k);
  out.estimates.resize(cfg.log2_ns.size());
  for (std::size_t ni = 0; ni < cfg.log2_ns.size(); ++ni) {
    out.estimates[ni].reserve(static_cast<std::size_t>(cfg.replicates));
    for (int r = 0; r < cfg.replicates; ++r) {
      DensityEstimate est;
      est.grid = cfg.grid;
      est.estimator = cfg.estimator;
      est.sampler = sampler_name(cfg.sampler);
      est.n = out.ns[ni];
      est.values = std::move(swept.curves[0][ni][static_cast<std::size_t>(r)]);
      est.check_finite();
      out.estimates[ni].push_back(std::move(est));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// MISE decomposition and rate fit

struct MiseBreakdown {
  double iv = 0.0;
  double isb = 0.0;
  double mise = 0.0;
  std::vector<double> mean;
  std::vector<double> variance;
  std::size_t n = 0;
  int m = 0;
};

inline MiseBreakdown estimate_mise_curves(
    std::span<const std::vector<double>> curves, const EvalGrid& grid,
    std::span<const double> ref_values) {
  const auto m = curves.size();
  if (m < 2)
    throw std::invalid_argument("estimate_mise: need at least 2 replicates");
  const auto g = static_cast<std::size_t>(grid.g);
  if (ref_values.size() != g)
    throw std::invalid_argument("estimate_mise: reference/grid mismatch");
  for (const auto& c : curves)
    if (c.size() != g)
      throw std::invalid_argument("estimate_mise: curve/grid mismatch");

  MiseBreakdown out;
  out.n = 0;
  out.m = static_cast<int>(m);
  out.mean.assign(g, 0.0);
  out.variance.assign(g, 0.0);
  for (std::size_t k = 0; k < g; ++k) {
    double mean = 0.0;
    for (const auto& c : curves) mean += c[k];
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (const auto& c : curves) ss += (c[k] - mean) * (c[k] - mean);
    out.mean[k] = mean;
    out.variance[k] = ss / static_cast<double>(m - 1);
  }
  const double dx = grid.dx();
  for (std::size_t k = 0; k < g; ++k) {
    out.iv += dx * out.variance[k];
    const double bias = out.mean[k] - ref_values[k];
    out.isb += dx * bias * bias;
  }
  out.mise = out.iv + out.isb;
  return out;
}

struct RateFit {
  double beta_hat = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  std::size_t n_min = 0;
  std::size_t n_max = 0;
};

// OLS of log2(MISE) on log2(n); beta_hat = -slope.
inline RateFit fit_rate(
    std::span<const std::pair<std::size_t, double>> series) {
  if (series.size() < 3)
    throw std::invalid_argument("fit_rate: need at least 3 (n, MISE) pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [n, mise] : series) {
    if (!(mise > 0.0))
      throw std::invalid_argument("fit_rate: MISE values must be positive");
    const double x = std::log2(static_cast<double>(n));
    const double y = std::log2(mise);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const auto np = static_cast<double>(series.size());
  const double denom = np * sxx - sx * sx;
  const double slope = (np * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / np;
  double ss = 0.0;
  for (const auto& [n, mise] : series) {
    const double x = std::log2(static_cast<double>(n));
    const double resid = std::log2(mise) - (intercept + slope * x);
    ss += resid * resid;
  }
  RateFit out;
  out.beta_hat = -slope;
  out.intercept = intercept;
  out.residual_rms = std::sqrt(ss / np);
  out.n_min = series.front().first;
  out.n_max = series.back().first;
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation interval and reference density

// Shortest path: the fixed interval covering about 95% of the density.
// Max flow: the central 95% interval of a pilot 2^20 MC sample of h(Y),
// quantiles rounded to one decimal (deterministic given the seed).
inline std::pair<double, double> default_interval(ModelKind kind,
                                                  std::uint64_t seed) {
  if (kind == ModelKind::shortest_path) return {128.8, 171.2};
  static std::mutex mu;
  static std::map<std::uint64_t, std::pair<double, double>> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(seed);
    if (it != cache.end()) return it->second;
  }
  const NetworkModel model(kind);
  const std::size_t n = std::size_t{1} << 20;
  auto src = PointSource::mc(n, model.dim(),
                             rng::derive_seed(seed, rng::kTagPilot, n, 0));
  std::vector<double> sample(n);
  std::vector<double> ubuf(4096 * static_cast<std::size_t>(model.dim()));
  std::vector<double> y(static_cast<std::size_t>(model.dim()));
  std::size_t done = 0;
  while (done < n) {
    const std::size_t cnt = std::min<std::size_t>(4096, n - done);
    src.next_block(cnt, ubuf.data());
    for (std::size_t i = 0; i < cnt; ++i) {
      model.sample_arcs(
          std::span<const double>(
              ubuf.data() + i * static_cast<std::size_t>(model.dim()),
              static_cast<std::size_t>(model.dim())),
          y);
      sample[done + i] = model.output(y);
    }
    done += cnt;
  }
  std::sort(sample.begin(), sample.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return sample[lo] * (1.0 - frac) + sample[std::min(lo + 1, n - 1)] * frac;
  };
  const double a = std::round(quantile(0.025) * 10.0) / 10.0;
  const double b = std::round(quantile(0.975) * 10.0) / 10.0;
  std::lock_guard<std::mutex> lock(mu);
  cache[seed] = {a, b};
  return {a, b};
}

inline EvalGrid default_grid(ModelKind kind, std::uint64_t seed, int g = 64) {
  const auto [a, b] = default_interval(kind, seed);
  return EvalGrid{a, b, g};
}

struct ReferenceDensity {
  EvalGrid grid;
  std::vector<double> values;
  ModelKind model = ModelKind::shortest_path;
  std::string estimator;
  int log2_n = 0;
  int replicates = 0;
  std::uint64_t seed = 0;
  double probe_x = 0.0;
  double probe_value = 0.0;
};

struct ReferenceOptions {
  int log2_n = 22;
  int replicates = 16;
  int threads = 0;
  int grid_g = 64;
};

// Expected value and relative tolerance for the shortest-path density near
// its mode, used to validate freshly built references.
inline constexpr double kShortestPathProbeX = 150.08155742793622;
inline constexpr double kShortestPathProbeValue = 0.03688695033381464;

// Averages an unbiased estimator (conditional estimator with the two-arc
// cut for shortest path, LRDE for max flow) over `replicates` independent
// net randomizations at n = 2^log2_n.
inline ReferenceDensity build_reference(ModelKind kind, std::uint64_t seed,
                                        const ReferenceOptions& opts = {}) {
  const bool sp = kind == ModelKind::shortest_path;
  ReferenceDensity ref;
  ref.model = kind;
  ref.estimator = sp ? "cde-cut2" : "lrde";
  ref.log2_n = opts.log2_n;
  ref.replicates = opts.replicates;
  ref.seed = seed;
  ref.grid = default_grid(kind, seed, opts.grid_g);

  std::vector<double> xs = ref.grid.xs();
  std::size_t probe_at = xs.size();
  if (sp) {
    // Insert the probe abscissa keeping xs ascending.
    const auto it =
        std::lower_bound(xs.begin(), xs.end(), kShortestPathProbeX);
    probe_at = static_cast<std::size_t>(it - xs.begin());
    xs.insert(it, kShortestPathProbeX);
  }

  SweepSpec spec;
  spec.model = kind;
  spec.estimators = {ref.estimator};
  spec.sampler = SamplerKind::sobol_lms_shift;
  spec.log2_ns = {opts.log2_n};
  spec.replicates = opts.replicates;
  spec.xs = xs;
  spec.seed = seed;
  spec.threads = opts.threads;
  const auto swept = run_sweep(spec);

  std::vector<double> avg(xs.size(), 0.0);
  for (const auto& curve : swept.curves[0][0])
    for (std::size_t k = 0; k < xs.size(); ++k) avg[k] += curve[k];
  for (double& v : avg) v /= static_cast<double>(opts.replicates);

  if (sp) {
    ref.probe_x = kShortestPathProbeX;
    ref.probe_value = avg[probe_at];
    avg.erase(avg.begin() + static_cast<std::ptrdiff_t>(probe_at));
  }
  ref.values = std::move(avg);

  for (double v : ref.values)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw NumericalError("reference: negative or non-finite density value");
  double mass = 0.0;
  for (double v : ref.values) mass += v;
  mass *= ref.grid.dx();
  if (mass < 0.93 || mass > 0.97)
    throw NumericalError(
        "reference: interval coverage " + std::to_string(mass) +
        " outside [0.93, 0.97]; the evaluation interval should cover about "
        "95% of the density");
  if (sp) {
    const double rel =
        std::abs(ref.probe_value / kShortestPathProbeValue - 1.0);
    if (rel > 0.02)
      throw NumericalError(
          "reference: density at the mode probe differs from the expected "
          "value by " +
          std::to_string(100.0 * rel) + "%");
  }
  return ref;
}

// ---------------------------------------------------------------------------
// CSV rows and (de)serialization

struct MiseRow {
  std::string model;
  std::string estimator;
  std::string sampler;
  std::size_t n = 0;
  int m = 0;
  double iv = 0.0;
  double isb = 0.0;
  double mise = 0.0;
  double neg_log2_mise = 0.0;
};

struct RateRow {
  std::string model;
  std::string estimator;
  std::string sampler;
  double beta_hat = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  std::size_t n_min = 0;
  std::size_t n_max = 0;
};

namespace detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_mise_csv(std::ostream& os, std::span<const MiseRow> rows) {
  os << "model,estimator,sampler,n,m,iv,isb,mise,neg_log2_mise\n";
  for (const auto& r : rows)
    os << r.model << ',' << r.estimator << ',' << r.sampler << ',' << r.n
       << ',' << r.m << ',' << detail::fmt_g17(r.iv) << ','
       << detail::fmt_g17(r.isb) << ',' << detail::fmt_g17(r.mise) << ','
       << detail::fmt_g17(r.neg_log2_mise) << '\n';
}

inline void write_rate_csv(std::ostream& os, std::span<const RateRow> rows) {
  os << "model,estimator,sampler,beta_hat,intercept,residual_rms,n_min,n_max\n";
  for (const auto& r : rows)
    os << r.model << ',' << r.estimator << ',' << r.sampler << ','
       << detail::fmt_g17(r.beta_hat) << ',' << detail::fmt_g17(r.intercept)
       << ',' << detail::fmt_g17(r.residual_rms) << ',' << r.n_min << ','
       << r.n_max << '\n';
}

inline std::vector<MiseRow> read_mise_csv(std::istream& is) {
  std::vector<MiseRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("model,", 0) != 0)
        throw std::invalid_argument("mise csv: unexpected header: " + line);
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string field;
    MiseRow r;
    auto next = [&]() {
      if (!std::getline(ss, field, ','))
        throw std::invalid_argument("mise csv: short row: " + line);
      return field;
    };
    r.model = next();
    r.estimator = next();
    r.sampler = next();
    r.n = std::stoull(next());
    r.m = std::stoi(next());
    r.iv = std::stod(next());
    r.isb = std::stod(next());
    r.mise = std::stod(next());
    r.neg_log2_mise = std::stod(next());
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_reference_csv(std::ostream& os, const ReferenceDensity& ref,
                                bool timestamp_line_suppressed = true,
                                const std::string& timestamp = {}) {
  os << "# qdens reference density\n";
  if (!timestamp_line_suppressed && !timestamp.empty())
    os << "# generated: " << timestamp << '\n';
  os << "# model: " << model_name(ref.model) << '\n'
     << "# estimator: " << ref.estimator << '\n'
     << "# sampler: sobol\n"
     << "# log2_n: " << ref.log2_n << '\n'
     << "# replicates: " << ref.replicates << '\n'
     << "# seed: " << ref.seed << '\n'
     << "# grid_a: " << detail::fmt_g17(ref.grid.a) << '\n'
     << "# grid_b: " << detail::fmt_g17(ref.grid.b) << '\n'
     << "# grid_g: " << ref.grid.g << '\n';
  if (ref.probe_x != 0.0)
    os << "# probe_x: " << detail::fmt_g17(ref.probe_x) << '\n'
       << "# probe_value: " << detail::fmt_g17(ref.probe_value) << '\n';
  os << "x,f_ref\n";
  for (int k = 0; k < ref.grid.g; ++k)
    os << detail::fmt_g17(ref.grid.x(k)) << ','
       << detail::fmt_g17(ref.values[static_cast<std::size_t>(k)]) << '\n';
}

inline ReferenceDensity read_reference_csv(std::istream& is) {
  ReferenceDensity ref;
  std::string line;
  std::map<std::string, std::string> meta;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string key = line.substr(1, colon - 1);
        std::string value = line.substr(colon + 1);
        auto trim = [](std::string& s) {
          while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
            s.erase(s.begin());
          while (!s.empty() && (s.back() == ' ' || s.back() == '\r'))
            s.pop_back();
        };
        trim(key);
        trim(value);
        meta[key] = value;
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("x,", 0) != 0)
        throw std::invalid_argument("reference csv: unexpected header");
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("reference csv: bad row: " + line);
    ref.values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (!meta.count("grid_a") || !meta.count("grid_b") || !meta.count("grid_g"))
    throw std::invalid_argument("reference csv: missing grid metadata");
  ref.grid.a = std::stod(meta["grid_a"]);
  ref.grid.b = std::stod(meta["grid_b"]);
  ref.grid.g = std::stoi(meta["grid_g"]);
  if (meta.count("model"))
    ref.model = meta["model"] == "max-flow" ? ModelKind::max_flow
                                            : ModelKind::shortest_path;
  if (meta.count("estimator")) ref.estimator = meta["estimator"];
  if (meta.count("log2_n")) ref.log2_n = std::stoi(meta["log2_n"]);
  if (meta.count("replicates")) ref.replicates = std::stoi(meta["replicates"]);
  if (meta.count("seed")) ref.seed = std::stoull(meta["seed"]);
  if (meta.count("probe_x")) ref.probe_x = std::stod(meta["probe_x"]);
  if (meta.count("probe_value"))
    ref.probe_value = std::stod(meta["probe_value"]);
  if (ref.values.size() != static_cast<std::size_t>(ref.grid.g))
    throw std::invalid_argument("reference csv: row count != grid_g");
  return ref;
}

inline MiseBreakdown estimate_mise(std::span<const DensityEstimate> reps,
                                   const ReferenceDensity& ref) {
  if (reps.empty())
    throw std::invalid_argument("estimate_mise: no replicates");
  const EvalGrid& grid = reps.front().grid;
  if (grid.a != ref.grid.a || grid.b != ref.grid.b || grid.g != ref.grid.g)
    throw std::invalid_argument("estimate_mise: grid mismatch with reference");
  std::vector<std::vector<double>> curves;
  curves.reserve(reps.size());
  for (const auto& r : reps) {
    if (r.grid.a != grid.a || r.grid.b != grid.b || r.grid.g != grid.g)
      throw std::invalid_argument("estimate_mise: replicate grid mismatch");
    curves.push_back(r.values);
  }
  MiseBreakdown out = estimate_mise_curves(curves, grid, ref.values);
  out.n = reps.front().n;
  return out;
}

}  // namespace qdens
