#include "qdens/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

namespace {

using qdens::build_reference;
using qdens::default_interval;
using qdens::DensityEstimate;
using qdens::estimate_mise;
using qdens::estimate_mise_curves;
using qdens::EvalGrid;
using qdens::ExperimentConfig;
using qdens::fit_rate;
using qdens::ModelKind;
using qdens::ReferenceDensity;
using qdens::ReferenceOptions;
using qdens::run_replicates;
using qdens::run_sweep;
using qdens::SamplerKind;
using qdens::SweepSpec;

ReferenceDensity flat_reference(const EvalGrid& grid, double value) {
  ReferenceDensity ref;
  ref.grid = grid;
  ref.values.assign(static_cast<std::size_t>(grid.g), value);
  return ref;
}

DensityEstimate curve(const EvalGrid& grid, std::vector<double> values) {
  DensityEstimate est;
  est.grid = grid;
  est.values = std::move(values);
  est.n = 100;
  return est;
}

TEST(EstimateMise, ZeroForPerfectReplicates) {
  const EvalGrid grid{0.0, 2.0, 4};
  const auto ref = flat_reference(grid, 0.5);
  std::vector<DensityEstimate> reps = {curve(grid, {0.5, 0.5, 0.5, 0.5}),
                                       curve(grid, {0.5, 0.5, 0.5, 0.5})};
  const auto mise = estimate_mise(reps, ref);
  EXPECT_DOUBLE_EQ(mise.iv, 0.0);
  EXPECT_DOUBLE_EQ(mise.isb, 0.0);
  EXPECT_DOUBLE_EQ(mise.mise, 0.0);
}

TEST(EstimateMise, SymmetricPerturbationIsPureVariance) {
  const EvalGrid grid{0.0, 2.0, 4};
  const auto ref = flat_reference(grid, 0.5);
  const double c = 0.125;
  std::vector<DensityEstimate> reps = {
      curve(grid, {0.5 + c, 0.5 + c, 0.5 + c, 0.5 + c}),
      curve(grid, {0.5 - c, 0.5 - c, 0.5 - c, 0.5 - c})};
  const auto mise = estimate_mise(reps, ref);
  // Unbiased two-sample variance of {+c, -c} is 2 c^2.
  EXPECT_NEAR(mise.iv, 2.0 * c * c * (grid.b - grid.a), 1e-15);
  EXPECT_NEAR(mise.isb, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(mise.mise, mise.iv + mise.isb);
}

TEST(EstimateMise, GridMismatchRejected) {
  const EvalGrid grid{0.0, 2.0, 4};
  const auto ref = flat_reference({0.0, 2.0, 8}, 0.5);
  std::vector<DensityEstimate> reps = {curve(grid, {0.5, 0.5, 0.5, 0.5}),
                                       curve(grid, {0.5, 0.5, 0.5, 0.5})};
  EXPECT_THROW(estimate_mise(reps, ref), std::invalid_argument);
}

TEST(FitRate, ExactPowerLaws) {
  std::vector<std::pair<std::size_t, double>> series;
  for (int k = 13; k <= 20; ++k) {
    const auto n = std::size_t{1} << k;
    series.emplace_back(n, 8.0 / static_cast<double>(n));
  }
  auto fit = fit_rate(series);
  EXPECT_NEAR(fit.beta_hat, 1.0, 1e-12);
  EXPECT_NEAR(fit.intercept, 3.0, 1e-12);
  EXPECT_NEAR(fit.residual_rms, 0.0, 1e-12);
  EXPECT_EQ(fit.n_min, std::size_t{1} << 13);
  EXPECT_EQ(fit.n_max, std::size_t{1} << 20);

  for (auto& [n, mise] : series) mise = std::pow(static_cast<double>(n), -0.8);
  fit = fit_rate(series);
  EXPECT_NEAR(fit.beta_hat, 0.8, 1e-12);

  series.resize(2);
  EXPECT_THROW(fit_rate(series), std::invalid_argument);
  series = {{8192, 1e-3}, {16384, -1e-3}, {32768, 1e-4}};
  EXPECT_THROW(fit_rate(series), std::invalid_argument);
}

TEST(RunReplicates, ShapeAndDeterminism) {
  ExperimentConfig cfg;
  cfg.model = ModelKind::shortest_path;
  cfg.estimator = "lrde";
  cfg.sampler = SamplerKind::mc;
  cfg.log2_ns = {13};
  cfg.replicates = 2;
  cfg.grid = {128.8, 171.2, 64};
  cfg.seed = 5;
  const auto a = run_replicates(cfg);
  ASSERT_EQ(a.estimates.size(), 1u);
  ASSERT_EQ(a.estimates[0].size(), 2u);
  EXPECT_EQ(a.estimates[0][0].values.size(), 64u);
  EXPECT_EQ(a.ns[0], std::size_t{1} << 13);

  const auto b = run_replicates(cfg);
  EXPECT_EQ(a.estimates[0][0].values, b.estimates[0][0].values);
  EXPECT_EQ(a.estimates[0][1].values, b.estimates[0][1].values);

  cfg.sampler = SamplerKind::sobol_lms_shift;
  const auto c = run_replicates(cfg);
  EXPECT_NE(a.estimates[0][0].values, c.estimates[0][0].values);
}

TEST(RunReplicates, IncompatibilityBeforeComputation) {
  ExperimentConfig cfg;
  cfg.model = ModelKind::max_flow;
  cfg.estimator = "cde-cut2";
  cfg.log2_ns = {13};
  cfg.replicates = 2;
  cfg.grid = {20.0, 40.0, 8};
  EXPECT_THROW(run_replicates(cfg), qdens::IncompatibilityError);
  cfg.estimator = "glr";
  EXPECT_THROW(run_replicates(cfg), qdens::IncompatibilityError);
  cfg.estimator = "lrde";
  cfg.replicates = 1;
  EXPECT_THROW(run_replicates(cfg), std::invalid_argument);
}

TEST(RunSweep, SharedPointsMatchSoloRuns) {
  // A joint sweep feeds every estimator the same point sets a solo run
  // would see, so per-estimator outputs are bit-identical.
  SweepSpec spec;
  spec.model = ModelKind::shortest_path;
  spec.estimators = {"cde-cut2", "lrde", "kde"};
  spec.sampler = SamplerKind::sobol_lms_shift;
  spec.log2_ns = {10, 11};
  spec.replicates = 3;
  const EvalGrid grid{128.8, 171.2, 32};
  spec.xs = grid.xs();
  spec.grid = grid;
  spec.seed = 12;
  const auto joint = run_sweep(spec);
  for (std::size_t e = 0; e < spec.estimators.size(); ++e) {
    SweepSpec solo = spec;
    solo.estimators = {spec.estimators[e]};
    const auto alone = run_sweep(solo);
    EXPECT_EQ(joint.curves[e], alone.curves[0]) << spec.estimators[e];
  }
}

TEST(RunSweep, ThreadCountDoesNotChangeResults) {
  SweepSpec spec;
  spec.model = ModelKind::shortest_path;
  spec.estimators = {"cde-cut2"};
  spec.sampler = SamplerKind::mc;
  spec.log2_ns = {10};
  spec.replicates = 4;
  const EvalGrid grid{128.8, 171.2, 16};
  spec.xs = grid.xs();
  spec.grid = grid;
  spec.seed = 3;
  spec.threads = 1;
  const auto seq = run_sweep(spec);
  spec.threads = 4;
  const auto par = run_sweep(spec);
  EXPECT_EQ(seq.curves, par.curves);
}

TEST(DefaultInterval, MaxFlowPilotIsDeterministic) {
  const auto [a1, b1] = default_interval(ModelKind::max_flow, 1);
  const auto [a2, b2] = default_interval(ModelKind::max_flow, 1);
  EXPECT_DOUBLE_EQ(a1, a2);
  EXPECT_DOUBLE_EQ(b1, b2);
  EXPECT_LT(a1, b1);
  EXPECT_GT(a1, 20.0);
  EXPECT_LT(b1, 40.0);
  // one-decimal rounding
  EXPECT_NEAR(a1 * 10.0, std::round(a1 * 10.0), 1e-9);
  const auto [sa, sb] = default_interval(ModelKind::shortest_path, 1);
  EXPECT_DOUBLE_EQ(sa, 128.8);
  EXPECT_DOUBLE_EQ(sb, 171.2);
}

TEST(Reference, SmallScaleBuildValidatesAndRoundTrips) {
  ReferenceOptions opts;
  opts.log2_n = 14;
  opts.replicates = 4;
  const auto ref = build_reference(ModelKind::shortest_path, 2, opts);
  EXPECT_EQ(ref.estimator, "cde-cut2");
  EXPECT_EQ(ref.values.size(), 64u);
  for (double v : ref.values) EXPECT_GE(v, 0.0);
  double mass = 0.0;
  for (double v : ref.values) mass += v * ref.grid.dx();
  EXPECT_GT(mass, 0.93);
  EXPECT_LT(mass, 0.97);
  EXPECT_NEAR(ref.probe_value, qdens::kShortestPathProbeValue,
              0.02 * qdens::kShortestPathProbeValue);

  std::ostringstream os;
  qdens::write_reference_csv(os, ref);
  std::istringstream is(os.str());
  const auto back = qdens::read_reference_csv(is);
  EXPECT_EQ(back.values, ref.values);
  EXPECT_EQ(back.grid.g, ref.grid.g);
  EXPECT_DOUBLE_EQ(back.grid.a, ref.grid.a);
  EXPECT_DOUBLE_EQ(back.grid.b, ref.grid.b);
  EXPECT_EQ(back.estimator, ref.estimator);
  EXPECT_EQ(back.log2_n, ref.log2_n);
  EXPECT_DOUBLE_EQ(back.probe_x, ref.probe_x);
  EXPECT_DOUBLE_EQ(back.probe_value, ref.probe_value);
}

TEST(Reference, IndependentBuildsAgree) {
  // Two references from disjoint seeds differ by well under 0.5% of the
  // density peak, uniformly on the grid (scaled-down protocol).
  ReferenceOptions opts;
  opts.log2_n = 14;
  opts.replicates = 8;
  for (ModelKind kind : {ModelKind::shortest_path, ModelKind::max_flow}) {
    ReferenceOptions o = opts;
    if (kind == ModelKind::max_flow) o.log2_n = 16;
    // Same seed for the max-flow grid (the interval is seed-derived);
    // randomization streams still differ via the replicate seed offset.
    const auto r1 = build_reference(kind, 21, o);
    const auto r2 = build_reference(kind, 22, o);
    double peak = 0.0, sup = 0.0;
    if (kind == ModelKind::max_flow) {
      // Pilot intervals from different seeds can differ in the last
      // decimal; compare only when the grids agree.
      if (r1.grid.a != r2.grid.a || r1.grid.b != r2.grid.b) continue;
    }
    for (std::size_t k = 0; k < r1.values.size(); ++k) {
      peak = std::max(peak, r1.values[k]);
      sup = std::max(sup, std::abs(r1.values[k] - r2.values[k]));
    }
    EXPECT_LT(sup, 0.005 * peak) << model_name(kind);
  }
}

TEST(Reference, MiseAgainstSelfIsTiny) {
  // The cde-cut2 RQMC estimator measured against its own reference gives a
  // tiny MISE and an ISB consistent with zero bias.
  ReferenceOptions opts;
  opts.log2_n = 14;
  opts.replicates = 4;
  const auto ref = build_reference(ModelKind::shortest_path, 2, opts);
  ExperimentConfig cfg;
  cfg.model = ModelKind::shortest_path;
  cfg.estimator = "cde-cut2";
  cfg.sampler = SamplerKind::sobol_lms_shift;
  cfg.log2_ns = {12};
  cfg.replicates = 30;
  cfg.grid = ref.grid;
  cfg.seed = 77;
  const auto runs = run_replicates(cfg);
  const auto mise = estimate_mise(runs.estimates[0], ref);
  EXPECT_DOUBLE_EQ(mise.mise, mise.iv + mise.isb);
  EXPECT_GE(mise.iv, 0.0);
  EXPECT_GE(mise.isb, 0.0);
  EXPECT_LT(mise.mise, 1e-7);
}

TEST(CdeCuts, TwoArcCutHasSmallerIntegratedVariance) {
  ReferenceOptions opts;
  opts.log2_n = 14;
  opts.replicates = 4;
  const auto ref = build_reference(ModelKind::shortest_path, 2, opts);
  SweepSpec spec;
  spec.model = ModelKind::shortest_path;
  spec.estimators = {"cde-cut1", "cde-cut2"};
  spec.sampler = SamplerKind::mc;
  spec.log2_ns = {12};
  spec.replicates = 40;
  spec.xs = ref.grid.xs();
  spec.grid = ref.grid;
  spec.seed = 31;
  const auto swept = run_sweep(spec);
  const auto mise1 =
      estimate_mise_curves(swept.curves[0][0], ref.grid, ref.values);
  const auto mise2 =
      estimate_mise_curves(swept.curves[1][0], ref.grid, ref.values);
  EXPECT_LT(mise2.iv, mise1.iv);
}

TEST(RqmcVsMc, NeverWorseSpotCheck) {
  ReferenceOptions opts;
  opts.log2_n = 14;
  opts.replicates = 4;
  const auto ref = build_reference(ModelKind::shortest_path, 2, opts);
  for (const char* est : {"cde-cut2", "lrde"}) {
    double mise_by_sampler[2];
    for (SamplerKind sampler : {SamplerKind::mc, SamplerKind::sobol_lms_shift}) {
      ExperimentConfig cfg;
      cfg.model = ModelKind::shortest_path;
      cfg.estimator = est;
      cfg.sampler = sampler;
      cfg.log2_ns = {12};
      cfg.replicates = 30;
      cfg.grid = ref.grid;
      cfg.seed = 99;
      const auto runs = run_replicates(cfg);
      mise_by_sampler[sampler == SamplerKind::mc ? 0 : 1] =
          estimate_mise(runs.estimates[0], ref).mise;
    }
    EXPECT_LT(mise_by_sampler[1], mise_by_sampler[0]) << est;
  }
}

TEST(MiseCsv, RoundTrip) {
  std::vector<qdens::MiseRow> rows = {
      {"shortest-path", "kde", "mc", 8192, 100, 1.5e-6, 2.5e-7, 1.75e-6,
       19.124},
      {"max-flow", "lrde", "sobol", 1048576, 100, 1e-7, 1e-9, 1.01e-7, 23.2}};
  std::ostringstream os;
  qdens::write_mise_csv(os, rows);
  std::istringstream is(os.str());
  const auto back = qdens::read_mise_csv(is);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].model, rows[i].model);
    EXPECT_EQ(back[i].estimator, rows[i].estimator);
    EXPECT_EQ(back[i].sampler, rows[i].sampler);
    EXPECT_EQ(back[i].n, rows[i].n);
    EXPECT_EQ(back[i].m, rows[i].m);
    EXPECT_DOUBLE_EQ(back[i].mise, rows[i].mise);
  }
}

}  // namespace
