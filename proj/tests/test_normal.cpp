#include "qdens/normal.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "support/normal_oracle.hpp"

namespace {

using qdens::NormalParams;
using qdens::normal_cdf;
using qdens::normal_pdf;
using qdens::normal_quantile;
using qdens::normal_survival;

TEST(NormalPdf, KnownValues) {
  EXPECT_NEAR(normal_pdf(0.0), 0.3989422804, 1e-10);
  EXPECT_NEAR(normal_pdf(1.0), 0.2419707245, 1e-10);
  // Mode value is 1/(sigma sqrt(2 pi)) for any location.
  for (double sigma : {0.25, 1.0, 3.0, 11.0})
    EXPECT_NEAR(normal_pdf(5.0, {5.0, sigma}), 0.3989422804014327 / sigma,
                1e-14);
}

TEST(NormalCdf, MatchesSeriesOracle) {
  for (double x = -8.0; x <= 8.0; x += 0.0625) {
    const double want = static_cast<double>(qdens_test::cdf_oracle(x));
    EXPECT_NEAR(normal_cdf(x), want, 1e-12) << "x=" << x;
  }
  EXPECT_NEAR(normal_cdf(1.96), 0.9750021049, 1e-9);
  EXPECT_NEAR(normal_cdf(3.0, {3.0, 7.0}), 0.5, 1e-15);
  EXPECT_NEAR(normal_cdf(-40.0), 0.0, 1e-300);
  EXPECT_NEAR(normal_cdf(40.0), 1.0, 1e-16);
}

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.5, {3.0, 2.0}), 3.0, 1e-12);
  EXPECT_NEAR(normal_quantile(0.975), 1.9599640, 1e-7);
  EXPECT_NEAR(normal_quantile(0.975), qdens_test::quantile_oracle(0.975),
              1e-10);
}

TEST(NormalQuantile, DomainErrors) {
  EXPECT_THROW(normal_quantile(0.0), std::domain_error);
  EXPECT_THROW(normal_quantile(1.0), std::domain_error);
  EXPECT_THROW(normal_quantile(-0.25), std::domain_error);
}

TEST(NormalQuantile, CdfResidualBound) {
  // |Phi(quantile(u)) - u| <= 1e-10 across the unit interval, including
  // deep tails.
  for (double u = 1e-12; u < 1.0; u = u < 0.001 ? u * 2.0 : u + 0.001) {
    const double x = normal_quantile(u);
    EXPECT_LE(std::abs(normal_cdf(x) - u), 1e-10) << "u=" << u;
  }
}

TEST(NormalQuantile, RoundTripIdentity) {
  // Above roughly +5.5 sigma the identity is limited by the double
  // quantization of u near 1 (absolute eps/phi(z) in x-space), so the
  // upper end stops at +5 sigma; the lower tail keeps full relative
  // precision down to -8 sigma.
  const NormalParams p{2.0, 3.0};
  for (double x = p.mu - 8.0 * p.sigma; x <= p.mu + 5.0 * p.sigma;
       x += 0.05 * p.sigma) {
    const double u = normal_cdf(x, p);
    if (u <= 0.0 || u >= 1.0) continue;
    EXPECT_NEAR(normal_quantile(u, p), x, 1e-9 * std::max(1.0, std::abs(x)))
        << "x=" << x;
  }
}

TEST(NormalQuantile, Monotone) {
  double prev = -1e300;
  for (double u = 1e-8; u < 1.0; u += 1e-3) {
    const double x = normal_quantile(u);
    EXPECT_GT(x, prev);
    prev = x;
  }
}

TEST(NormalCdf, PdfIsCdfDerivative) {
  // Centered finite difference of the CDF reproduces the pdf.
  const NormalParams p{-1.0, 2.5};
  const double step = 1e-4 * p.sigma;
  for (double x = p.mu - 5.0 * p.sigma; x <= p.mu + 5.0 * p.sigma;
       x += 0.37 * p.sigma) {
    const double fd =
        (normal_cdf(x + step, p) - normal_cdf(x - step, p)) / (2.0 * step);
    EXPECT_NEAR(fd, normal_pdf(x, p), 1e-6);
  }
}

TEST(StdNormalTable, MatchesDirectEvaluation) {
  const auto& table = qdens::detail::StdNormalTable::instance();
  double max_pdf_err = 0.0, max_sur_err = 0.0;
  for (double z = -9.9; z <= 9.9; z += 1e-3) {
    const auto ps = table.pdf_survival(z);
    max_pdf_err = std::max(max_pdf_err, std::abs(ps.pdf - normal_pdf(z)));
    max_sur_err =
        std::max(max_sur_err, std::abs(ps.survival - normal_survival(z)));
  }
  EXPECT_LT(max_pdf_err, 1e-12);
  EXPECT_LT(max_sur_err, 1e-12);
}

}  // namespace
