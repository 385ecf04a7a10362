#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "sphere4/landscape.hpp"
#include "sphere4/optimize.hpp"
#include "sphere4/recovery.hpp"

using namespace sphere4;

namespace {
const Dictionary& lowmu_untf_16x32() {
  static const Dictionary d = make_low_coherence_untf(16, 32, 3);
  return d;
}
}  // namespace

// --- regions -----------------------------------------------------------------

TEST(Region, VanishingCoherenceSendsEverythingToRc) {
  oracle::Gen g(41);
  const Dictionary d = make_untf(6, 12, 41);
  for (int t = 0; t < 50; ++t) {
    const SpherePoint q = SpherePoint::normalize(g.gaussian(6));
    const RegionResult r = classify_region(d, q, {kXiDl, 1e-40, 1.0});
    ASSERT_LT(r.phi_t, 0.0);
    EXPECT_EQ(r.label, Region::R_C);
  }
}

TEST(Region, InfiniteXiIsAlwaysRn) {
  oracle::Gen g(42);
  const Dictionary d = make_untf(6, 12, 42);
  for (int t = 0; t < 20; ++t) {
    const RegionParams p{std::numeric_limits<double>::infinity(), 0.3, 1.0};
    EXPECT_EQ(classify_region(d, SpherePoint::normalize(g.gaussian(6)), p).label, Region::R_N);
    EXPECT_EQ(classify_region(d, SpherePoint::normalize(g.gaussian(6)), p, true).label, Region::R_N);
  }
  EXPECT_THROW(classify_region(d, SpherePoint::basis(6, 0), {0.0, 0.1, 1.0}), std::invalid_argument);
  EXPECT_THROW(classify_region(d, SpherePoint::basis(5, 0), {}), std::invalid_argument);
}

TEST(Region, ColumnOfIncoherentUntfIsInRc) {
  const Dictionary& d = lowmu_untf_16x32();
  const double mu = coherence(d);
  const RegionParams p{0.25, mu, 1.0};
  for (int i = 0; i < d.cols(); ++i) {
    const SpherePoint q = SpherePoint::normalize(d.column(i));
    const Vec z = d.entries().transpose() * q.coords();
    const double lhs = -0.25 * z.array().pow(4).sum();
    const double rhs = -0.25 * std::pow(mu, 2.0 / 3.0) * std::pow(z.array().abs().pow(3).sum(), 2.0 / 3.0);
    const RegionResult r = classify_region(d, q, p);
    EXPECT_NEAR(r.phi_t, lhs, 1e-13);
    EXPECT_NEAR(r.threshold, rhs, 1e-13);
    EXPECT_LT(lhs, rhs);
    EXPECT_EQ(r.label, Region::R_C);
  }
}

TEST(Region, CdlModeAppliesKappaFactor) {
  const Dictionary d = make_untf(4, 8, 43);
  const SpherePoint q = random_sphere_point(4, 43);
  const RegionResult a = classify_region(d, q, {2.0, 0.2, 8.0}, false);
  const RegionResult b = classify_region(d, q, {2.0, 0.2, 8.0}, true);
  EXPECT_NEAR(b.threshold, a.threshold * 16.0, 1e-12 * std::abs(b.threshold));
}

TEST(Region, BoundaryBand) {
  // A = I, q = e₁: φ_T = −1/4, ‖ζ‖₃² = 1 → boundary when ξμ^{2/3} = 1/4.
  const Dictionary d(Mat::Identity(3, 3));
  EXPECT_EQ(classify_region(d, SpherePoint::basis(3, 0), {0.25, 1.0, 1.0}).label, Region::boundary);
  EXPECT_EQ(classify_region(d, SpherePoint::basis(3, 0), {0.2, 1.0, 1.0}).label, Region::R_C);
  EXPECT_EQ(classify_region(d, SpherePoint::basis(3, 0), {0.3, 1.0, 1.0}).label, Region::R_N);
}

// Larger ξ can only shrink R_C.
TEST(Region, ScalingXiShrinksRc) {
  oracle::Gen g(44);
  for (int t = 0; t < 200; ++t) {
    const int n = g.integer(3, 12);
    const Dictionary d = make_untf(n, g.integer(n, 3 * n), 4400 + t);
    const SpherePoint q = SpherePoint::normalize(g.gaussian(n));
    const double xi = g.uniform(0.01, 5.0), c = g.uniform(1.0, 10.0), mu = coherence(d);
    if (classify_region(d, q, {c * xi, mu, 1.0}).label == Region::R_C) {
      EXPECT_EQ(classify_region(d, q, {xi, mu, 1.0}).label, Region::R_C);
    }
  }
}

TEST(Region, XiDefaults) {
  EXPECT_GT(kXiDl, 64.0);
  EXPECT_NEAR(xi_cdl(), 6.0 * std::pow(128.0, 2.0 / 3.0), 1e-12);
  EXPECT_THROW(xi_cdl(0.0, 0.1), std::invalid_argument);
}

// --- cubic intervals --------------------------------------------------------------

TEST(CubicIntervals, DegenerateBetaZero) {
  const CubicIntervals c = cubic_root_intervals(1.0, 0.0);
  EXPECT_EQ(c.i1.lo, 0.0);
  EXPECT_EQ(c.i1.hi, 0.0);
  EXPECT_EQ(c.i2.lo, 1.0);
  EXPECT_EQ(c.i3.hi, -1.0);
  for (double z : {-1.0, 0.0, 1.0}) EXPECT_TRUE(c.contains(z));
  EXPECT_TRUE(c.pairwise_disjoint());
}

TEST(CubicIntervals, AlphaFourBetaOne) {
  const CubicIntervals c = cubic_root_intervals(4.0, 1.0);
  EXPECT_DOUBLE_EQ(c.i1.lo, -0.5);
  EXPECT_DOUBLE_EQ(c.i1.hi, 0.5);
  EXPECT_DOUBLE_EQ(c.i2.lo, 1.5);
  EXPECT_DOUBLE_EQ(c.i2.hi, 2.5);
  EXPECT_DOUBLE_EQ(c.i3.lo, -2.5);
  EXPECT_DOUBLE_EQ(c.i3.hi, -1.5);
  const std::vector<double> roots = oracle::cubic_roots(4.0, 1.0);
  ASSERT_EQ(roots.size(), 3u);
  int per[3] = {0, 0, 0};
  for (double z : roots) {
    per[0] += c.i1.contains(z);
    per[1] += c.i2.contains(z);
    per[2] += c.i3.contains(z);
  }
  EXPECT_EQ(per[0], 1);
  EXPECT_EQ(per[1], 1);
  EXPECT_EQ(per[2], 1);
}

TEST(CubicIntervals, PreconditionBoundary) {
  const CubicIntervals c = cubic_root_intervals(1.0, 0.25);
  const std::vector<double> roots = oracle::cubic_roots(1.0, 0.25);
  ASSERT_EQ(roots.size(), 3u);
  for (double z : roots) EXPECT_TRUE(c.contains(z, 1e-12)) << z;
  EXPECT_THROW(cubic_root_intervals(1.0, 0.26), std::domain_error);
  EXPECT_THROW(cubic_root_intervals(0.0, 0.0), std::domain_error);
  EXPECT_THROW(cubic_root_intervals(-1.0, 0.0), std::domain_error);
}

TEST(CubicIntervals, RandomContainmentProperty) {
  oracle::Gen g(45);
  int violations = 0, overlaps = 0;
  for (int t = 0; t < 10000; ++t) {
    const double alpha = std::pow(10.0, g.uniform(-2.0, 2.0));
    const double bmax = std::pow(alpha, 1.5) / 4.0;
    double beta = g.uniform(-bmax, bmax);
    if (beta == 0.0) beta = bmax * 0.5;
    const CubicIntervals c = cubic_root_intervals(alpha, beta);
    overlaps += !c.pairwise_disjoint();
    const auto roots = oracle::cubic_roots(alpha, beta, 40000);
    if (roots.size() != 3u) ++violations;
    for (double z : roots) violations += !c.contains(z, 1e-10 * std::max(1.0, std::sqrt(alpha)));
  }
  EXPECT_EQ(violations, 0);
  EXPECT_EQ(overlaps, 0);
}

// --- critical-point reports --------------------------------------------------------

TEST(Report, OrthonormalMinimizer) {
  const Dictionary d(Mat::Identity(4, 4));
  const LandscapeReport r = critical_point_report(d, SpherePoint::basis(4, 0));
  EXPECT_EQ(r.alphas, Vec::Ones(4));
  EXPECT_EQ(r.betas, Vec::Zero(4));
  EXPECT_EQ(r.big_count, 1);
  EXPECT_TRUE(r.cubic_residual_ok);
  EXPECT_EQ(r.classification.kind, PointClass::near_solution);
  EXPECT_EQ(r.classification.index, 0);
  EXPECT_DOUBLE_EQ(r.classification.inner_product, 1.0);
  EXPECT_GE(r.hess_min_eig, 0.0);
}

TEST(Report, OrthonormalSaddle) {
  const Dictionary d(Mat::Identity(3, 3));
  const LandscapeReport r = critical_point_report(d, SpherePoint::normalize(Vec{{1, 1, 0}}));
  EXPECT_EQ(r.big_count, 2);
  EXPECT_LT(r.hess_min_eig, 0.0);
  EXPECT_NEAR(r.hess_min_eig, -1.0, 1e-12);
  EXPECT_EQ(r.classification.kind, PointClass::strict_saddle);
  EXPECT_LE(r.cubic_residual, 1e-14);
}

TEST(Report, NonCriticalPoint) {
  const Dictionary d = make_untf(5, 10, 46);
  const LandscapeReport r = critical_point_report(d, random_sphere_point(5, 46));
  EXPECT_GT(r.grad_norm, 1e-6);
  EXPECT_EQ(r.classification.kind, PointClass::non_critical);
}

TEST(Report, AlphasPositiveAndBetasMatchDefinition) {
  oracle::Gen g(47);
  for (int t = 0; t < 30; ++t) {
    const int n = g.integer(2, 10), m = g.integer(n, 3 * n);
    const Dictionary d(g.gaussian(n, m));
    const SpherePoint q = SpherePoint::normalize(g.gaussian(n));
    const LandscapeReport r = critical_point_report(d, q);
    const Mat& a = d.entries();
    const Vec z = a.transpose() * q.coords();
    for (int i = 0; i < m; ++i) {
      const double ni = a.col(i).squaredNorm();
      double b = 0.0;
      for (int j = 0; j < m; ++j) {
        if (j != i) b += a.col(i).dot(a.col(j)) * std::pow(z(j), 3);
      }
      EXPECT_GT(r.alphas(i), 0.0);
      EXPECT_NEAR(r.alphas(i), z.array().pow(4).sum() / ni, 1e-12 * r.alphas(i));
      EXPECT_NEAR(r.betas(i), b / ni, 1e-10 * std::max(1.0, std::abs(b / ni)));
    }
  }
}

// A converged solve on an incoherent K = 3 UNTF is certified near a column.
TEST(Report, ConvergedSolveIsNearSolution) {
  const Dictionary d = make_low_coherence_untf(10, 30, 48);
  const TensorObjective f(d);
  SolveConfig cfg;
  cfg.escape = EigenEscape{};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const SolveResult res = solve(f, random_sphere_point(10, s), cfg);
    ASSERT_EQ(res.termination, Termination::grad_tol);
    const LandscapeReport r = critical_point_report(d, res.q_star);
    EXPECT_TRUE(r.cubic_residual_ok);
    ASSERT_EQ(r.classification.kind, PointClass::near_solution) << "seed " << s;
    EXPECT_GE(r.classification.inner_product, 1.0 - 5e-2);
    EXPECT_EQ(r.classification.index, recovery_error(res.q_star, d).best_index);
  }
}

TEST(Report, BatchOrderIndependentOfThreads) {
  const Dictionary d = make_untf(6, 12, 49);
  std::vector<SpherePoint> qs;
  for (int i = 0; i < 17; ++i) qs.push_back(random_sphere_point(6, 4900 + i));
  const auto one = critical_point_reports(d, qs, {}, 1);
  const auto four = critical_point_reports(d, qs, {}, 4);
  ASSERT_EQ(one.size(), qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    EXPECT_EQ(one[i].grad_norm, four[i].grad_norm);
    EXPECT_EQ(one[i].hess_min_eig, four[i].hess_min_eig);
    EXPECT_EQ(one[i].grad_norm, critical_point_report(d, qs[i]).grad_norm);
  }
}

// No PSD critical point far from every column (the forbidden outcome), over
// 500+ runs on incoherent UNTFs with n ∈ {8..16}, m ∈ {2n, 3n}. The stricter
// "near_solution or strict_saddle" split is asserted for n ≥ 10; at 8×24 the
// generator cannot get μ below ≈ 0.37 and genuine PSD points with inner
// product ≈ 0.72 appear in a few percent of runs.
TEST(Report, NoSpuriousSecondOrderPoints) {
  int runs = 0, forbidden = 0, unclassified_small = 0;
  for (int n : {8, 10, 12, 14, 16}) {
    for (int m : {2 * n, 3 * n}) {
      const Dictionary d = make_low_coherence_untf(n, m, 50 + n + m);
      const TensorObjective f(d);
      SolveConfig cfg;
      cfg.escape = EigenEscape{};
      for (std::uint64_t s = 0; s < 52; ++s) {
        cfg.seed = s;
        const SolveResult res = solve(f, random_sphere_point(n, 7000 + s), cfg);
        if (res.termination != Termination::grad_tol) continue;
        ++runs;
        const LandscapeReport r = critical_point_report(d, res.q_star);
        forbidden += r.best_inner < 0.5 && r.hess_min_eig >= 0.0;
        const bool split = r.classification.kind == PointClass::near_solution ||
                           r.classification.kind == PointClass::strict_saddle;
        if (n >= 10) {
          EXPECT_TRUE(split) << n << "x" << m << " seed " << s;
        } else {
          unclassified_small += !split;
        }
      }
    }
  }
  EXPECT_GE(runs, 500);
  EXPECT_EQ(forbidden, 0);
  EXPECT_LE(unclassified_small, 10);
}

// --- negative curvature certificate -----------------------------------------------

TEST(Certificate, UniformPointOfIdentity) {
  for (int n : {2, 4, 8}) {
    const Dictionary d(Mat::Identity(n, n));
    const SpherePoint q = SpherePoint::normalize(Vec::Ones(n));
    const CurvatureCertificate c = negative_curvature_certificate(d, q, kXiDl, 0.0);
    const double rayleigh = -2.0 / n * (1.0 - 1.0 / n);  // e₁ᵀ(−2/n·P⊥)e₁
    EXPECT_NEAR(c.rayleigh, rayleigh, 1e-12);
    EXPECT_NEAR(c.bound, -4.0 / (n * n), 1e-12);
    EXPECT_EQ(c.holds, rayleigh < -4.0 / (n * n));
    EXPECT_TRUE(c.k_condition);
  }
}

TEST(Certificate, KConditionAtZeroCoherence) {
  for (int n : {3, 5}) {
    for (int m = n; m <= 4 * n; ++m) {
      const Dictionary d = make_untf(n, m, 60 + m);
      const CurvatureCertificate c = negative_curvature_certificate(d, random_sphere_point(n, m), 17.0, 0.0);
      EXPECT_EQ(c.k_condition, m <= 3 * n) << n << "," << m;
    }
  }
}

TEST(Certificate, RequiresUnitColumns) {
  EXPECT_THROW(negative_curvature_certificate(Dictionary(2.0 * Mat::Identity(3, 3)), SpherePoint::basis(3, 0), 1, 0),
               std::invalid_argument);
}

// Random points of R_N for a 12×24 UNTF: the certificate holds wherever the
// K-condition does. (With μ at the Welch bound the K-condition is false, so
// the implication is checked but vacuous at this size.)
TEST(Certificate, HoldsWhereKConditionHolds) {
  const Dictionary d = make_low_coherence_untf(12, 24, 61);
  const double mu = coherence(d);
  int sampled = 0, conditioned = 0;
  for (int s = 0; s < 400 && sampled < 100; ++s) {
    const SpherePoint q = random_sphere_point(12, 6100 + s);
    if (classify_region(d, q, {kXiDl, mu, 1.0}).label != Region::R_N) continue;
    ++sampled;
    const CurvatureCertificate c = negative_curvature_certificate(d, q, kXiDl, mu);
    EXPECT_TRUE(c.in_certificate_region);
    if (c.k_condition) {
      ++conditioned;
      EXPECT_TRUE(c.holds);
    }
  }
  EXPECT_EQ(sampled, 100);
  EXPECT_EQ(conditioned, 0);
}

// Outside the vacuous regime: an orthonormal basis (K = 1, μ = 0) meets the
// K-condition and its R_N points far from any column carry the certificate.
TEST(Certificate, OrthonormalDictionaryFlatPoints) {
  oracle::Gen g(62);
  const Dictionary d(Mat::Identity(12, 12));
  int checked = 0;
  for (int s = 0; s < 200; ++s) {
    const SpherePoint q = SpherePoint::normalize(g.gaussian(12));
    const Vec z = q.coords();
    if (z.cwiseAbs().maxCoeff() > 0.6) continue;
    const CurvatureCertificate c = negative_curvature_certificate(d, q, kXiDl, 0.0);
    ASSERT_TRUE(c.k_condition);
    ++checked;
    EXPECT_TRUE(c.holds) << "sample " << s;
  }
  EXPECT_GT(checked, 100);
}
