#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sphere4/objective.hpp"

using namespace sphere4;

namespace {

SpherePoint unit(const Vec& v) { return SpherePoint::normalize(v); }

// FD helpers in terms of the library's objective, but with oracle difference
// quotients and retraction.
template <class F>
double fd_dir(const F& f, const Vec& q, const Vec& v, double h = 1e-5) {
  return oracle::directional_fd([&](const Vec& x) { return f.value(unit(x)); }, q, v, h);
}

template <class F>
double fd_curv(const F& f, const Vec& q, const Vec& v, double h = 1e-4) {
  return oracle::second_fd([&](const Vec& x) { return f.value(unit(x)); }, q, v, h);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(TensorObjective, IdentityValues) {
  const TensorObjective f(Dictionary(Mat::Identity(4, 4)));
  EXPECT_DOUBLE_EQ(f.value(SpherePoint::basis(4, 0)), -0.25);
  EXPECT_NEAR(f.value(unit(Vec{{1, 1, 0, 0}})), -0.125, 1e-16);
}

TEST(TensorObjective, IdentityCriticalPointsHaveZeroGradient) {
  const TensorObjective f(Dictionary(Mat::Identity(4, 4)));
  EXPECT_LE(rgrad(f, SpherePoint::basis(4, 0)).norm(), 1e-15);
  EXPECT_LE(rgrad(f, unit(Vec{{1, 1, 0, 0}})).norm(), 1e-15);
}

TEST(TensorObjective, HessianAtTrueComponent) {
  const int n = 5;
  const TensorObjective f(Dictionary(Mat::Identity(n, n)));
  const SpherePoint e1 = SpherePoint::basis(n, 0);
  Mat expected = Mat::Identity(n, n);
  expected(0, 0) = 0.0;
  EXPECT_LE((f.rhess(e1) - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((rhess_dense(f, e1) - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TensorObjective, NegativeAwayFromZeroCorrelation) {
  oracle::Gen g(1);
  for (int t = 0; t < 50; ++t) {
    const int n = g.integer(2, 10);
    const Dictionary d = make_untf(n, g.integer(n, 3 * n), t);
    const TensorObjective f(d);
    const double v = f.value(unit(g.gaussian(n)));
    EXPECT_LT(v, 0.0);
    EXPECT_GE(v, -0.25 * d.overcompleteness() * d.overcompleteness() - 1e-12);
  }
}

TEST(OdlObjective, MatchesScalarLoop) {
  const Dictionary d = make_untf(3, 4, 3);
  const ObservationSet y = synth_odl(d, sample_bg(4, 50, 0.1, 3));
  const OdlObjective f(y, 0.1);
  const double c = 1.0 / (12 * 0.1 * 0.9 * 50);
  EXPECT_NEAR(f.coefficient(), c, 1e-16);
  oracle::Gen g(3);
  for (int t = 0; t < 10; ++t) {
    const Vec q = g.unit(3);
    EXPECT_LE(rel(f.value(unit(q)), oracle::quartic_value(y.entries, q, c)), 1e-13);
  }
}

TEST(OdlObjective, NormalizerContract) {
  EXPECT_THROW(odl_normalizer(0.0, 10), std::invalid_argument);
  EXPECT_THROW(odl_normalizer(0.5, 0), std::invalid_argument);
  EXPECT_THROW(QuarticObjective(Mat::Ones(2, 2), 0.0), std::invalid_argument);
}

TEST(Objective, DimensionMismatchRejected) {
  const TensorObjective f(make_untf(3, 4, 1));
  EXPECT_THROW(f.value(SpherePoint::basis(4, 0)), std::invalid_argument);
}

TEST(Objective, DenseHessianGuard) {
  const QuarticObjective f(Mat::Ones(kDenseHessianLimit + 1, 1), 1.0);
  const SpherePoint q = SpherePoint::basis(kDenseHessianLimit + 1, 0);
  EXPECT_THROW(f.rhess(q), std::length_error);
  EXPECT_THROW(rhess_dense(f, q), std::length_error);
  // the Hessian action still works
  EXPECT_EQ(rhess_vec(f, q, Vec::Ones(kDenseHessianLimit + 1)).size(), kDenseHessianLimit + 1);
}

// Finite-difference agreement over ≥100 random instances, n ∈ {3..32}.
TEST(ObjectiveProperty, GradientAndHessianMatchFiniteDifferences) {
  oracle::Gen g(11);
  double worst_g = 0, worst_h = 0;
  for (int t = 0; t < 120; ++t) {
    const int n = g.integer(3, 32);
    const int m = g.integer(n, 3 * n);
    const Mat a = g.gaussian(n, m) / std::sqrt(static_cast<double>(n));
    const QuarticObjective f = t % 2 ? QuarticObjective(a, 0.25) : QuarticObjective(OdlObjective(a, 0.2));
    const Vec q = g.unit(n);
    const SpherePoint sq = unit(q);
    const Vec gr = rgrad(f, sq);
    const Mat h = f.rhess(sq);
    for (int k = 0; k < 5; ++k) {
      const Vec v = g.tangent(q);
      worst_g = std::max(worst_g, rel(gr.dot(v), fd_dir(f, q, v)));
      worst_h = std::max(worst_h, rel(v.dot(h * v), fd_curv(f, q, v)));
    }
  }
  EXPECT_LT(worst_g, 1e-6);
  EXPECT_LT(worst_h, 1e-4);
}

TEST(ObjectiveProperty, TangencyAndSymmetry) {
  oracle::Gen g(12);
  for (int t = 0; t < 100; ++t) {
    const int n = g.integer(3, 32);
    const Dictionary d(g.gaussian(n, g.integer(n, 3 * n)));
    const TensorObjective f(d);
    const SpherePoint q = unit(g.gaussian(n));
    const Vec gr = rgrad(f, q);
    const Mat h = f.rhess(q);
    EXPECT_LE(std::abs(gr.dot(q.coords())), 1e-12 * std::max(1.0, gr.norm()));
    EXPECT_LE((h * q.coords()).norm(), 1e-12 * std::max(1.0, h.norm()));
    EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, h.norm()));
    // action and dense agree
    const Vec v = g.gaussian(n);
    EXPECT_LE((rhess_vec(f, q, v) - h * v).norm(), 1e-12 * std::max(1.0, h.norm() * v.norm()));
    EXPECT_LE((rhess_dense(f, q) - h).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, h.norm()));
    // q ↦ −q
    EXPECT_NEAR(f.value(-q), f.value(q), 1e-14 * std::abs(f.value(q)));
    EXPECT_LE((rgrad(f, -q) + gr).norm(), 1e-13 * std::max(1.0, gr.norm()));
  }
}

TEST(ObjectiveProperty, GradientAtUntfColumnBoundedByCoherence) {
  for (int s = 0; s < 10; ++s) {
    const Dictionary d = make_untf(8, 20, s);
    const TensorObjective f(d);
    const double mu = coherence(d);
    const double amax = d.column_norms().maxCoeff();
    for (int i = 0; i < d.cols(); ++i) {
      const SpherePoint q = unit(d.column(i));
      EXPECT_LE(rgrad(f, q).norm(), d.cols() * mu * amax * amax * amax);
    }
  }
}

// --- expectation -------------------------------------------------------------

TEST(ExpectationGap, ExactFormOnIdentity) {
  // A = I, q = e1, θ = 1/3: E[φ_DL] = −E[x⁴]/(12θ(1−θ)) = −3θ/(12θ(1−θ)) = −3/8.
  const ExpectationGap gap = expectation_gap(Dictionary(Mat::Identity(3, 3)), 1.0 / 3.0, SpherePoint::basis(3, 0), 10, 1);
  EXPECT_NEAR(gap.predicted, -3.0 / 8.0, 1e-15);
  // the literature form: −1/4 − (1/4)·1 = −1/2
  EXPECT_NEAR(gap.predicted_stated, -0.5, 1e-15);
  EXPECT_NEAR(gap.phi_t, -0.25, 1e-15);
}

TEST(ExpectationGap, ThetaToZeroApproachesPhiT) {
  const Dictionary d = make_untf(3, 4, 1);
  const SpherePoint q = random_sphere_point(3, 4);
  const ExpectationGap gap = expectation_gap(d, 1e-9, q, 1, 1);
  EXPECT_NEAR(gap.predicted, gap.phi_t, 1e-8);
  EXPECT_NEAR(gap.predicted_stated, gap.phi_t, 1e-8);
}

TEST(ExpectationGap, MonteCarloWithinFourStandardErrorsOfExactForm) {
  const Dictionary d = make_untf(3, 4, 1);
  for (int s = 0; s < 3; ++s) {
    const SpherePoint q = random_sphere_point(3, 50 + s);
    const ExpectationGap gap = expectation_gap(d, 0.1, q, 100000, 70 + s);
    EXPECT_LE(std::abs(gap.monte_carlo_mean - gap.predicted), 4 * gap.standard_error) << "seed " << s;
  }
}

TEST(ExpectationGap, RejectsBadArguments) {
  const Dictionary d = make_untf(3, 4, 1);
  EXPECT_THROW(expectation_gap(d, 0.1, SpherePoint::basis(3, 0), 0, 1), std::invalid_argument);
  EXPECT_THROW(expectation_gap(d, 0.1, SpherePoint::basis(4, 0), 10, 1), std::invalid_argument);
}
