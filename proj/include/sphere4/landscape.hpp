#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "sphere4/model.hpp"
#include "sphere4/objective.hpp"
#include "sphere4/optimize.hpp"
#include "sphere4/parallel.hpp"

namespace sphere4 {

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

/// ξ_DL just above 2⁶.
inline constexpr double kXiDl = 65.0;

/// ξ_CDL = C₀·η^{−2/3}.
inline double xi_cdl(double c0 = 6.0, double eta = 1.0 / 128.0) {
  if (!(c0 > 0.0 && eta > 0.0)) throw std::invalid_argument("xi_cdl: C0 and eta must be > 0");
  return c0 * std::pow(eta, -2.0 / 3.0);
}

struct RegionParams {
  double xi = kXiDl;  // +inf labels everything R_N
  double mu = 0.0;
  double kappa = 1.0;  // only used in CDL mode
};

enum class Region { R_N, R_C, boundary };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::R_N: return "R_N";
    case Region::R_C: return "R_C";
    case Region::boundary: return "boundary";
  }
  return "R_N";
}

struct RegionResult {
  Region label = Region::R_N;
  double phi_t = 0.0;      // left-hand side
  double threshold = 0.0;  // −ξ·μ^{2/3}·(κ^{4/3})·‖ζ‖₃²
};

inline constexpr double kRegionBand = 1e-12;

inline RegionResult classify_region(const Dictionary& d, const SpherePoint& q, const RegionParams& params,
                                    bool cdl_mode = false) {
  if (q.dim() != d.rows()) throw std::invalid_argument("classify_region: dimension mismatch");
  if (!(params.xi > 0.0)) throw std::invalid_argument("classify_region: xi must be > 0");
  const Vec zeta = q.correlation(d.entries());
  RegionResult r;
  r.phi_t = -0.25 * zeta.array().square().square().sum();
  if (std::isinf(params.xi)) {
    r.threshold = -std::numeric_limits<double>::infinity();
    r.label = Region::R_N;
    return r;
  }
  const double l3 = std::cbrt(zeta.array().abs().cube().sum());
  double scale = params.xi * std::pow(params.mu, 2.0 / 3.0);
  if (cdl_mode) scale *= std::pow(params.kappa, 4.0 / 3.0);
  r.threshold = -scale * l3 * l3;
  if (std::abs(r.phi_t - r.threshold) <= kRegionBand) {
    r.label = Region::boundary;
  } else {
    r.label = r.phi_t < r.threshold ? Region::R_C : Region::R_N;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cubic f(z) = z³ − αz + β
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  [[nodiscard]] bool contains(double x, double slack = 0.0) const noexcept {
    return x >= lo - slack && x <= hi + slack;
  }
};

struct CubicIntervals {
  Interval i1;  // around 0
  Interval i2;  // around +√α
  Interval i3;  // around −√α

  [[nodiscard]] std::array<Interval, 3> all() const { return {i1, i2, i3}; }
  /// Strictly non-overlapping; false only at the boundary |β| = α^{3/2}/4,
  /// where neighbouring intervals touch.
  [[nodiscard]] bool pairwise_disjoint() const noexcept {
    return i3.hi < i1.lo && i1.hi < i2.lo;
  }
  [[nodiscard]] bool contains(double z, double slack = 0.0) const noexcept {
    return i1.contains(z, slack) || i2.contains(z, slack) || i3.contains(z, slack);
  }
};

/// Intervals I₁ = [−2|β|/α, 2|β|/α], I₂,₃ = ±√α ± 2|β|/α that hold every real
/// root of z³ − αz + β when |β| ≤ α^{3/2}/4.
inline CubicIntervals cubic_root_intervals(double alpha, double beta) {
  if (!(alpha > 0.0)) throw std::domain_error("cubic_root_intervals: alpha must be > 0");
  const double limit = std::pow(alpha, 1.5) / 4.0;
  if (!(std::abs(beta) <= limit * (1.0 + 1e-12))) {
    throw std::domain_error("cubic_root_intervals: |beta| exceeds alpha^{3/2}/4");
  }
  const double r = 2.0 * std::abs(beta) / alpha;
  const double s = std::sqrt(alpha);
  return {{-r, r}, {s - r, s + r}, {-s - r, -s + r}};
}

// ---------------------------------------------------------------------------
// Critical-point report
// ---------------------------------------------------------------------------

enum class PointClass { near_solution, strict_saddle, non_critical, indeterminate };

inline std::string_view to_string(PointClass c) {
  switch (c) {
    case PointClass::near_solution: return "near_solution";
    case PointClass::strict_saddle: return "strict_saddle";
    case PointClass::non_critical: return "non_critical";
    case PointClass::indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

struct Classification {
  PointClass kind = PointClass::indeterminate;
  int index = -1;               // near_solution only
  double inner_product = 0.0;   // |⟨a_i/‖a_i‖, q⟩| for that index
};

struct LandscapeReport {
  RegionResult region;
  double grad_norm = 0.0;
  Vec zeta;
  Vec alphas;
  Vec betas;
  int big_count = 0;              // coordinates with |ζ_i| > 2|β_i|/α_i
  double cubic_residual = 0.0;    // max_i |ζ_i³ − α_iζ_i + β_i| / α_i^{3/2}
  bool cubic_residual_ok = true;  // only meaningful at critical points
  double hess_min_eig = 0.0;
  Vec hess_min_vec;
  bool eig_converged = true;
  double curv_tol = 0.0;
  int best_index = 0;             // argmax_i |⟨a_i/‖a_i‖, q⟩|
  double best_inner = 0.0;
  Classification classification;
};

struct ReportTolerances {
  double grad_tol = 1e-6;
  double curv_tol_rel = 1e-8;  // multiplied by ‖ζ‖₄⁴
  double resid_tol = 1e-4;
};

inline LandscapeReport critical_point_report(const Dictionary& d, const SpherePoint& q,
                                             const RegionParams& params = {},
                                             const ReportTolerances& tol = {}) {
  if (q.dim() != d.rows()) throw std::invalid_argument("critical_point_report: dimension mismatch");
  const TensorObjective phi(d);
  LandscapeReport r;
  r.region = classify_region(d, q, params, false);

  const Mat& a = d.entries();
  const Vec& norms = d.column_norms();
  const Vec zeta = q.correlation(a);
  const Eigen::ArrayXd z3 = zeta.array().cube();
  const double l4 = zeta.array().square().square().sum();
  const Eigen::ArrayXd n2 = norms.array().square();
  r.zeta = zeta;
  r.alphas = (l4 / n2).matrix();
  // Σ_{j≠i} ⟨a_i,a_j⟩ζ_j³ = (Gζ³)_i − ‖a_i‖²ζ_i³
  r.betas = (((d.gram() * z3.matrix()).array() - n2 * z3) / n2).matrix();

  r.grad_norm = rgrad(phi, q).norm();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < zeta.size(); ++i) {
    const double al = r.alphas(i), be = r.betas(i), z = zeta(i);
    if (al > 0.0) {
      worst = std::max(worst, std::abs(z * z * z - al * z + be) / std::pow(al, 1.5));
      if (std::abs(z) > 2.0 * std::abs(be) / al) ++r.big_count;
    }
  }
  r.cubic_residual = worst;
  const bool critical = r.grad_norm < tol.grad_tol;
  r.cubic_residual_ok = !critical || worst <= tol.resid_tol;

  const Eigen::ArrayXd inner = (zeta.array() / norms.array()).abs();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < inner.size(); ++i) {
    if (inner(i) > inner(best) + 1e-12) best = i;  // ties → lowest index
  }
  r.best_index = static_cast<int>(best);
  r.best_inner = inner(best);

  const TangentEigen eig = min_tangent_eigenpair(phi, q);
  r.hess_min_eig = eig.value;
  r.hess_min_vec = eig.vector;
  r.eig_converged = eig.converged;
  r.curv_tol = tol.curv_tol_rel * l4;

  if (!critical) {
    r.classification.kind = PointClass::non_critical;
  } else if (r.hess_min_eig < -r.curv_tol) {
    r.classification.kind = PointClass::strict_saddle;
  } else if (r.big_count == 1) {
    Eigen::Index i = 0;
    for (Eigen::Index j = 0; j < zeta.size(); ++j) {
      if (r.alphas(j) > 0.0 && std::abs(zeta(j)) > 2.0 * std::abs(r.betas(j)) / r.alphas(j)) i = j;
    }
    r.classification = {PointClass::near_solution, static_cast<int>(i), inner(i)};
  } else {
    // 0 big coordinates should not happen at a true critical point; ≥ 2 with
    // PSD curvature contradicts the saddle picture. Both are flagged.
    r.classification.kind = PointClass::indeterminate;
  }
  return r;
}

/// Reports for many points; output order follows input order for any thread count.
inline std::vector<LandscapeReport> critical_point_reports(const Dictionary& d,
                                                           const std::vector<SpherePoint>& qs,
                                                           const RegionParams& params, int threads,
                                                           const ReportTolerances& tol = {}) {
  std::vector<LandscapeReport> out(qs.size());
  parallel_for(static_cast<int>(qs.size()), threads,
               [&](int i) { out[static_cast<std::size_t>(i)] = critical_point_report(d, qs[static_cast<std::size_t>(i)], params, tol); });
  return out;
}

// ---------------------------------------------------------------------------
// Negative curvature in R_N
// ---------------------------------------------------------------------------

struct CurvatureCertificate {
  int index = 0;              // column minimizing a_iᵀ Hess φ_T(q) a_i
  double rayleigh = 0.0;
  double bound = 0.0;         // −4‖ζ‖₄⁴‖ζ‖_∞²
  bool holds = false;         // rayleigh < bound
  bool k_condition = false;   // K ≤ 3/(1 + 6μ + 6ξ^{3/5}μ^{2/5})
  bool in_certificate_region = false;  // ‖ζ‖₄⁴ ≤ ξμ^{2/3}‖ζ‖₃²
};

inline CurvatureCertificate negative_curvature_certificate(const Dictionary& d, const SpherePoint& q,
                                                           double xi, double mu) {
  if (q.dim() != d.rows()) throw std::invalid_argument("negative_curvature_certificate: dimension mismatch");
  if ((d.column_norms().array() - 1.0).abs().maxCoeff() > 1e-8) {
    throw std::invalid_argument("negative_curvature_certificate: columns must be unit norm");
  }
  const TensorObjective phi(d);
  const Mat& a = d.entries();
  const Vec zeta = q.correlation(a);
  const double l4 = zeta.array().square().square().sum();
  const double linf = zeta.cwiseAbs().maxCoeff();
  const double l3 = std::cbrt(zeta.array().abs().cube().sum());

  // aᵢᵀ H aᵢ with H the tangent Hessian, all columns at once
  const Mat h = phi.rhess(q);
  const Vec quad = (a.array() * (h * a).array()).colwise().sum().transpose();
  Eigen::Index idx = 0;
  const double best = quad.minCoeff(&idx);

  CurvatureCertificate c;
  c.index = static_cast<int>(idx);
  c.rayleigh = best;
  c.bound = -4.0 * l4 * linf * linf;
  c.holds = best < c.bound;
  c.k_condition =
      d.overcompleteness() <= 3.0 / (1.0 + 6.0 * mu + 6.0 * std::pow(xi, 0.6) * std::pow(mu, 0.4));
  c.in_certificate_region = l4 <= xi * std::pow(mu, 2.0 / 3.0) * l3 * l3;
  return c;
}

}  // namespace sphere4
