#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>

#include "sphere4/model.hpp"
#include "sphere4/types.hpp"

namespace sphere4 {

/// Dense Riemannian Hessians are refused above this dimension; use the
/// Hessian action instead.
inline constexpr int kDenseHessianLimit = 4096;

/// Value and Euclidean gradient evaluated in one pass.
struct Evaluation {
  double value = 0.0;
  Vec egrad;
};

/// A smooth function restricted to the unit sphere, exposing Euclidean
/// derivatives. Riemannian quantities are derived generically below.
template <class F>
concept SphereObjective = requires(const F& f, const SpherePoint& q, const Vec& v) {
  { f.dim() } -> std::convertible_to<int>;
  { f.value(q) } -> std::convertible_to<double>;
  { f.evaluate(q) } -> std::same_as<Evaluation>;
  { f.euclidean_hess_vec(q, v) } -> std::convertible_to<Vec>;
};

template <SphereObjective F>
Vec euclidean_grad(const F& f, const SpherePoint& q) {
  return f.evaluate(q).egrad;
}

/// grad f(q) = P_{q⊥} ∇f(q).
template <SphereObjective F>
Vec rgrad(const F& f, const SpherePoint& q) {
  return q.project_tangent(f.evaluate(q).egrad);
}

/// Hess f(q)·v = P_{q⊥}(∇²f(q) − ⟨q, ∇f(q)⟩ I) P_{q⊥} v.
template <SphereObjective F>
Vec rhess_vec(const F& f, const SpherePoint& q, const Vec& v) {
  const Vec u = q.project_tangent(v);
  const double qg = q.coords().dot(f.evaluate(q).egrad);
  return q.project_tangent(f.euclidean_hess_vec(q, u) - qg * u);
}

/// Same as above with a precomputed ⟨q, ∇f(q)⟩.
template <SphereObjective F>
Vec rhess_vec(const F& f, const SpherePoint& q, const Vec& v, double q_dot_egrad) {
  const Vec u = q.project_tangent(v);
  return q.project_tangent(f.euclidean_hess_vec(q, u) - q_dot_egrad * u);
}

/// Dense Riemannian Hessian assembled column by column from the Hessian action.
template <SphereObjective F>
Mat rhess_dense(const F& f, const SpherePoint& q) {
  const int n = f.dim();
  if (n > kDenseHessianLimit) {
    throw std::length_error("rhess: dense Hessian refused for n > 4096, use rhess_vec");
  }
  const double qg = q.coords().dot(f.evaluate(q).egrad);
  Mat h(n, n);
  for (int j = 0; j < n; ++j) h.col(j) = rhess_vec(f, q, Vec::Unit(n, j), qg);
  return 0.5 * (h + h.transpose());
}

// ---------------------------------------------------------------------------
// Quartic objectives  f(q) = −c · Σ_k (m_kᵀ q)⁴
// ---------------------------------------------------------------------------

/// −c·‖Mᵀq‖₄⁴ for a fixed n×N matrix M and coefficient c > 0. Both the
/// asymptotic tensor objective (M = A, c = 1/4) and the finite-sample ODL
/// objective (M = Y, c = 1/(12θ(1−θ)p)) are instances.
class QuarticObjective {
 public:
  QuarticObjective(Mat m, double coeff) : m_(std::move(m)), c_(coeff) {
    if (!(c_ > 0.0)) throw std::invalid_argument("QuarticObjective: coefficient must be > 0");
  }

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(m_.rows()); }
  [[nodiscard]] const Mat& matrix() const noexcept { return m_; }
  [[nodiscard]] double coefficient() const noexcept { return c_; }

  [[nodiscard]] double value(const SpherePoint& q) const {
    check(q);
    const Vec z = m_.transpose() * q.coords();
    return -c_ * z.array().square().square().sum();
  }

  [[nodiscard]] Evaluation evaluate(const SpherePoint& q) const {
    check(q);
    const Vec z = m_.transpose() * q.coords();
    const Eigen::ArrayXd z2 = z.array().square();
    Evaluation e;
    e.value = -c_ * z2.square().sum();
    e.egrad = (-4.0 * c_) * (m_ * (z2 * z.array()).matrix());
    return e;
  }

  /// ∇²f(q)·v = −12c · M diag((Mᵀq)²) Mᵀ v.
  [[nodiscard]] Vec euclidean_hess_vec(const SpherePoint& q, const Vec& v) const {
    check(q);
    const Vec z = m_.transpose() * q.coords();
    const Vec w = m_.transpose() * v;
    return (-12.0 * c_) * (m_ * (z.array().square() * w.array()).matrix());
  }

  /// Closed-form dense Riemannian Hessian
  ///   −P_{q⊥}[12c·M diag(z²) Mᵀ − 4c‖z‖₄⁴ I]P_{q⊥}.
  [[nodiscard]] Mat rhess(const SpherePoint& q) const {
    check(q);
    const int n = dim();
    if (n > kDenseHessianLimit) {
      throw std::length_error("rhess: dense Hessian refused for n > 4096, use rhess_vec");
    }
    const Vec z = m_.transpose() * q.coords();
    const Eigen::ArrayXd z2 = z.array().square();
    const Mat weighted = m_ * z2.sqrt().matrix().asDiagonal();
    Mat inner = (-12.0 * c_) * (weighted * weighted.transpose());
    inner.diagonal().array() += 4.0 * c_ * z2.square().sum();
    const Mat proj = Mat::Identity(n, n) - q.coords() * q.coords().transpose();
    Mat h = proj * inner * proj;
    return 0.5 * (h + h.transpose());
  }

 private:
  void check(const SpherePoint& q) const {
    if (q.dim() != dim()) throw std::invalid_argument("objective: dimension mismatch");
  }

  Mat m_;
  double c_;
};

/// φ_T(q) = −¼‖Aᵀq‖₄⁴.
class TensorObjective : public QuarticObjective {
 public:
  explicit TensorObjective(const Dictionary& d)
      : QuarticObjective(d.entries(), 0.25), k_(d.overcompleteness()) {}
  [[nodiscard]] double overcompleteness() const noexcept { return k_; }

 private:
  double k_;
};

/// Normalizer 1/(12θ(1−θ)p) for p samples.
inline double odl_normalizer(double theta, long long samples) {
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("theta must lie in (0,1)");
  if (samples < 1) throw std::invalid_argument("need at least one sample");
  return 1.0 / (12.0 * theta * (1.0 - theta) * static_cast<double>(samples));
}

/// φ_DL(q) = −c_DL·Σ_k (qᵀy_k)⁴ with c_DL = 1/(12θ(1−θ)p).
class OdlObjective : public QuarticObjective {
 public:
  OdlObjective(const ObservationSet& y, double theta)
      : QuarticObjective(y.entries, odl_normalizer(theta, y.samples())), theta_(theta) {}
  OdlObjective(Mat y, double theta)
      : QuarticObjective(y, odl_normalizer(theta, y.cols())), theta_(theta) {}
  [[nodiscard]] double theta() const noexcept { return theta_; }

 private:
  double theta_;
};

static_assert(SphereObjective<QuarticObjective>);
static_assert(SphereObjective<TensorObjective>);
static_assert(SphereObjective<OdlObjective>);

// ---------------------------------------------------------------------------
// Expectation of the finite-sample objective
// ---------------------------------------------------------------------------

struct ExpectationGap {
  double monte_carlo_mean = 0.0;
  /// Sample standard error of the mean over the p per-sample terms.
  double standard_error = 0.0;
  /// Exact E[φ_DL] = φ_T(q) − θ/(4(1−θ))·‖Aᵀq‖₂⁴ (equals ‖ζ‖₂⁴ = K² on a UNTF).
  double predicted = 0.0;
  /// φ_T(q) − θ/(2(1−θ))·K², the form quoted in the literature. It overstates
  /// the correction by a factor 2; kept for side-by-side reporting.
  double predicted_stated = 0.0;
  double phi_t = 0.0;
};

/// Monte-Carlo estimate of E_X[φ_DL(q)] against its closed form. The p
/// columns of a fresh BG(θ) code are the Monte-Carlo samples.
inline ExpectationGap expectation_gap(const Dictionary& d, double theta, const SpherePoint& q,
                                      int p, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("expectation_gap: p must be >= 1");
  if (q.dim() != d.rows()) throw std::invalid_argument("expectation_gap: dimension mismatch");
  const Vec zeta = q.correlation(d.entries());
  CounterRng rng = CounterRng(seed).split(Purpose::monte_carlo);
  const double scale = 1.0 / (12.0 * theta * (1.0 - theta));
  const int m = d.cols();

  // Welford accumulation of the per-sample terms −(ζᵀx_k)⁴/(12θ(1−θ)).
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < p; ++k) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
      const bool on = rng.bernoulli(theta);
      const double g = rng.normal();
      if (on) s += zeta(i) * g;
    }
    const double t = -scale * s * s * s * s;
    const double delta = t - mean;
    mean += delta / (k + 1);
    m2 += delta * (t - mean);
  }
  ExpectationGap out;
  out.monte_carlo_mean = mean;
  out.standard_error = p > 1 ? std::sqrt(m2 / (p - 1) / p) : 0.0;
  out.phi_t = -0.25 * zeta.array().square().square().sum();
  const double z2 = zeta.squaredNorm();
  out.predicted = out.phi_t - theta / (4.0 * (1.0 - theta)) * z2 * z2;
  const double k = d.overcompleteness();
  out.predicted_stated = out.phi_t - theta / (2.0 * (1.0 - theta)) * k * k;
  return out;
}

}  // namespace sphere4
