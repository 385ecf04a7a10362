#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sphere4/cdl.hpp"
#include "sphere4/model.hpp"
#include "sphere4/objective.hpp"
#include "sphere4/rng.hpp"

namespace sphere4 {

enum class Method { power, rgd };

inline std::string_view to_string(Method m) { return m == Method::power ? "power" : "rgd"; }

struct FixedStep {
  double tau = 0.1;
};

struct Backtracking {
  double alpha0 = 1.0;
  double shrink = 0.5;
  double c1 = 1e-4;
};

using StepPolicy = std::variant<Backtracking, FixedStep>;

/// Second-order escape along the most negative tangent curvature direction.
struct EigenEscape {
  double curv_tol = 1e-8;
  double step = 0.1;
};

struct SolveConfig {
  Method method = Method::power;
  int max_iters = 10000;
  double grad_tol = 1e-8;
  StepPolicy step = Backtracking{};
  std::optional<EigenEscape> escape;
  std::uint64_t seed = 0;
  bool record_trace = true;

  void validate() const {
    if (!(grad_tol > 0.0)) throw std::invalid_argument("SolveConfig: grad_tol must be > 0");
    if (max_iters < 0) throw std::invalid_argument("SolveConfig: max_iters must be >= 0");
    if (const auto* b = std::get_if<Backtracking>(&step)) {
      if (!(b->alpha0 > 0.0)) throw std::invalid_argument("SolveConfig: alpha0 must be > 0");
      if (!(b->shrink > 0.0 && b->shrink < 1.0)) throw std::invalid_argument("SolveConfig: shrink must lie in (0,1)");
      if (!(b->c1 > 0.0 && b->c1 < 1.0)) throw std::invalid_argument("SolveConfig: c1 must lie in (0,1)");
    } else if (!(std::get<FixedStep>(step).tau > 0.0)) {
      throw std::invalid_argument("SolveConfig: fixed step must be > 0");
    }
    if (escape && !(escape->step > 0.0)) throw std::invalid_argument("SolveConfig: escape step must be > 0");
  }
};

enum class Termination { grad_tol, max_iters, stalled };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::grad_tol: return "grad_tol";
    case Termination::max_iters: return "max_iters";
    case Termination::stalled: return "stalled";
  }
  return "grad_tol";
}

struct SolveResult {
  SpherePoint q_star = SpherePoint::basis(1, 0);
  int iterations = 0;
  double final_grad_norm = 0.0;
  std::vector<double> objective_trace;  // φ at q0, q1, …
  Termination termination = Termination::max_iters;
  int escapes_taken = 0;

  bool operator==(const SolveResult&) const = default;
};

// ---------------------------------------------------------------------------
// Single steps
// ---------------------------------------------------------------------------

/// P_S(q − τ·grad φ(q)).
template <SphereObjective F>
SpherePoint rgd_step(const F& f, const SpherePoint& q, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("rgd_step: tau must be > 0");
  const Vec g = rgrad(f, q);
  return SpherePoint::normalize(q.coords() - tau * g);
}

struct LineSearchResult {
  SpherePoint q;
  double value = 0.0;
  double tau = 0.0;
  bool accepted = false;  // false: step shrank below 1e-16
};

/// Armijo backtracking: accept the first τ = α₀·shrinkʲ with
/// φ(q⁺) ≤ φ(q) − c₁·τ·‖grad‖².
template <SphereObjective F>
LineSearchResult rgd_backtracking_step(const F& f, const SpherePoint& q, const Evaluation& at_q,
                                       const Backtracking& bt) {
  const Vec g = q.project_tangent(at_q.egrad);
  const double g2 = g.squaredNorm();
  for (double tau = bt.alpha0; tau >= 1e-16; tau *= bt.shrink) {
    SpherePoint next = SpherePoint::normalize(q.coords() - tau * g);
    const double v = f.value(next);
    if (v <= at_q.value - bt.c1 * tau * g2) return {std::move(next), v, tau, true};
  }
  return {q, at_q.value, 0.0, false};
}

struct PowerStepResult {
  SpherePoint q;
  bool critical = false;  // ∇φ(q) vanished exactly; q returned unchanged
};

/// q⁺ = P_S(−∇φ(q)), signed so that ⟨q⁺, q⟩ ≥ 0.
inline PowerStepResult power_step_from(const SpherePoint& q, const Vec& egrad) {
  if (!egrad.allFinite()) throw NumericalError("power_step: non-finite gradient");
  if (egrad.squaredNorm() == 0.0) return {q, true};
  Vec d = -egrad;
  if (d.dot(q.coords()) < 0.0) d = -d;
  return {SpherePoint::normalize(std::move(d)), false};
}

template <SphereObjective F>
PowerStepResult power_step(const F& f, const SpherePoint& q) {
  return power_step_from(q, f.evaluate(q).egrad);
}

// ---------------------------------------------------------------------------
// Tangent-space curvature
// ---------------------------------------------------------------------------

/// Orthonormal basis (n × (n−1)) of the tangent space q⊥, from the
/// Householder reflector that maps q to ±e₁.
inline Mat tangent_basis(const SpherePoint& q) {
  const int n = q.dim();
  const Vec& x = q.coords();
  Vec u = x;
  const double s = x(0) >= 0.0 ? 1.0 : -1.0;
  u(0) += s;  // ‖x‖ = 1
  const double un = u.squaredNorm();
  Mat h = Mat::Identity(n, n) - (2.0 / un) * u * u.transpose();
  // Columns 1..n−1 of H are orthogonal to H·e₁ = −s·x.
  return h.rightCols(n - 1);
}

struct TangentEigen {
  double value = 0.0;  // smallest tangent eigenvalue
  Vec vector;          // unit tangent eigenvector (empty when n = 1)
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Tangent dimensions up to this size are handled by a dense eigensolve.
inline constexpr int kDenseTangentLimit = 96;

/// Smallest eigenpair of the Riemannian Hessian restricted to q⊥. Small
/// problems use a dense tangent eigensolve; larger ones Lanczos with full
/// reorthogonalization (capped at `max_iters`, residual `tol`·max(1, |λ|)).
template <SphereObjective F>
TangentEigen min_tangent_eigenpair(const F& f, const SpherePoint& q, std::uint64_t seed = 0,
                                   int max_iters = 200, double tol = 1e-8) {
  const int n = f.dim();
  TangentEigen out;
  if (n == 1) {
    out.converged = true;
    return out;
  }
  const double qg = q.coords().dot(f.evaluate(q).egrad);
  auto hv = [&](const Vec& v) { return rhess_vec(f, q, v, qg); };

  if (n - 1 <= kDenseTangentLimit) {
    const Mat u = tangent_basis(q);
    Mat h(n, n - 1);
    for (int j = 0; j < n - 1; ++j) h.col(j) = hv(u.col(j));
    Mat t = u.transpose() * h;
    t = 0.5 * (t + t.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(t);
    if (es.info() != Eigen::Success) return out;
    out.value = es.eigenvalues()(0);
    out.vector = (u * es.eigenvectors().col(0)).normalized();
    out.converged = true;
    out.iterations = 1;
    out.residual = (hv(out.vector) - out.value * out.vector).norm();
    return out;
  }

  // Lanczos on the tangent space.
  CounterRng rng = CounterRng(seed).split(Purpose::eigensolver);
  Vec start(n);
  for (int i = 0; i < n; ++i) start(i) = rng.normal();
  start = q.project_tangent(start);
  start.normalize();

  const int cap = std::min(max_iters, n - 1);
  Mat v(n, cap + 1);
  std::vector<double> alpha, beta;
  v.col(0) = start;
  for (int k = 0; k < cap; ++k) {
    Vec w = hv(v.col(k));
    const double a = v.col(k).dot(w);
    alpha.push_back(a);
    // full reorthogonalization (twice is enough), including against q
    for (int pass = 0; pass < 2; ++pass) {
      w -= v.leftCols(k + 1) * (v.leftCols(k + 1).transpose() * w);
      w = q.project_tangent(w);
    }
    const double b = w.norm();
    out.iterations = k + 1;

    const int m = k + 1;
    Eigen::SelfAdjointEigenSolver<Mat> es;
    Mat t = Mat::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      t(i, i) = alpha[i];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
    }
    es.compute(t);
    const double theta = es.eigenvalues()(0);
    const double resid = std::abs(b * es.eigenvectors()(m - 1, 0));
    const bool invariant = b <= 1e-14 * std::max(1.0, std::abs(a));
    if (resid <= tol * std::max(1.0, std::abs(theta)) || invariant || m == cap) {
      out.value = theta;
      out.vector = (v.leftCols(m) * es.eigenvectors().col(0)).normalized();
      out.residual = (hv(out.vector) - theta * out.vector).norm();
      out.converged = out.residual <= tol * std::max(1.0, std::abs(theta)) * 10.0 || invariant;
      return out;
    }
    beta.push_back(b);
    v.col(k + 1) = w / b;
  }
  return out;
}

struct EscapeResult {
  std::optional<SpherePoint> point;  // a strictly better point, if one was found
  double lambda_min = 0.0;
  bool eig_converged = false;
};

/// If the smallest tangent curvature is below −curv_tol, moves to the better of
/// P_S(q ± step·v); the step is halved (up to 10 times) until φ decreases.
template <SphereObjective F>
EscapeResult escape_saddle_report(const F& f, const SpherePoint& q, double curv_tol, double step,
                                  std::uint64_t seed = 0) {
  EscapeResult out;
  if (std::isinf(curv_tol) || q.dim() == 1) return out;
  const TangentEigen eig = min_tangent_eigenpair(f, q, seed);
  out.lambda_min = eig.value;
  out.eig_converged = eig.converged;
  if (!eig.converged || !(eig.value < -curv_tol)) return out;
  const double here = f.value(q);
  for (int attempt = 0; attempt <= 10; ++attempt, step *= 0.5) {
    SpherePoint plus = SpherePoint::normalize(q.coords() + step * eig.vector);
    SpherePoint minus = SpherePoint::normalize(q.coords() - step * eig.vector);
    const double vp = f.value(plus), vm = f.value(minus);
    const bool take_plus = vp <= vm;
    if (std::min(vp, vm) < here) {
      out.point = take_plus ? std::move(plus) : std::move(minus);
      return out;
    }
  }
  return out;
}

template <SphereObjective F>
std::optional<SpherePoint> escape_saddle(const F& f, const SpherePoint& q, double curv_tol,
                                         double step, std::uint64_t seed = 0) {
  return escape_saddle_report(f, q, curv_tol, step, seed).point;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

inline constexpr int kStallWindow = 20;
inline constexpr double kStallRelChange = 1e-15;

template <SphereObjective F>
SolveResult solve(const F& f, const SpherePoint& q0, const SolveConfig& cfg) {
  cfg.validate();
  if (q0.dim() != f.dim()) throw std::invalid_argument("solve: dimension mismatch");
  SolveResult res;
  SpherePoint q = q0;
  std::vector<double> recent;  // every iterate's value, for stall detection
  Evaluation e = f.evaluate(q);
  double gnorm = q.project_tangent(e.egrad).norm();
  if (cfg.record_trace) res.objective_trace.push_back(e.value);
  recent.push_back(e.value);
  res.termination = Termination::max_iters;

  int it = 0;
  while (true) {
    if (!std::isfinite(e.value)) throw NumericalError("solve: objective became non-finite");
    if (gnorm <= cfg.grad_tol) {
      res.termination = Termination::grad_tol;
      if (cfg.escape && it < cfg.max_iters) {
        auto esc = escape_saddle(f, q, cfg.escape->curv_tol, cfg.escape->step,
                                 cfg.seed + static_cast<std::uint64_t>(res.escapes_taken));
        if (esc) {
          q = std::move(*esc);
          ++res.escapes_taken;
          ++it;
          e = f.evaluate(q);
          gnorm = q.project_tangent(e.egrad).norm();
          if (cfg.record_trace) res.objective_trace.push_back(e.value);
          recent.assign(1, e.value);
          continue;
        }
      }
      break;
    }
    if (it >= cfg.max_iters) {
      res.termination = Termination::max_iters;
      break;
    }

    if (cfg.method == Method::power) {
      PowerStepResult ps = power_step_from(q, e.egrad);
      if (ps.critical) {  // exactly zero Euclidean gradient
        res.termination = Termination::grad_tol;
        break;
      }
      q = std::move(ps.q);
      e = f.evaluate(q);
    } else if (const auto* bt = std::get_if<Backtracking>(&cfg.step)) {
      LineSearchResult ls = rgd_backtracking_step(f, q, e, *bt);
      if (!ls.accepted) {
        res.termination = Termination::stalled;
        break;
      }
      q = std::move(ls.q);
      e = f.evaluate(q);
    } else {
      q = SpherePoint::normalize(q.coords() - std::get<FixedStep>(cfg.step).tau *
                                                   q.project_tangent(e.egrad));
      e = f.evaluate(q);
    }
    ++it;
    gnorm = q.project_tangent(e.egrad).norm();
    if (cfg.record_trace) res.objective_trace.push_back(e.value);
    recent.push_back(e.value);

    if (gnorm > cfg.grad_tol && static_cast<int>(recent.size()) > kStallWindow) {
      const double old = recent[recent.size() - 1 - kStallWindow];
      const double scale = std::max(std::abs(e.value), std::numeric_limits<double>::min());
      if (std::abs(e.value - old) < kStallRelChange * scale) {
        res.termination = Termination::stalled;
        break;
      }
    }
  }
  res.q_star = q;
  res.iterations = it;
  res.final_grad_norm = gnorm;
  return res;
}

// ---------------------------------------------------------------------------
// Data-driven CDL initialization
// ---------------------------------------------------------------------------

/// P_S(P·y_ℓ). `index` is 0-based; when absent it is drawn uniformly from
/// [0, p) with the given seed.
inline SpherePoint init_cdl(const ObservationSet& y, const Preconditioner& p,
                            std::optional<int> index, std::uint64_t seed) {
  if (y.samples() < 1) throw std::invalid_argument("init_cdl: no measurements");
  if (p.size() != y.rows()) throw std::invalid_argument("init_cdl: preconditioner size mismatch");
  int l = 0;
  if (index) {
    l = *index;
    if (l < 0 || l >= y.samples()) throw std::out_of_range("init_cdl: sample index out of range");
  } else {
    CounterRng rng = CounterRng(seed).split(Purpose::sample_index);
    l = static_cast<int>(rng.below(static_cast<std::uint64_t>(y.samples())));
  }
  const Vec py = p.apply(y.entries.col(l));
  if (!(py.norm() > 0.0)) throw std::domain_error("init_cdl: measurement " + std::to_string(l) + " is zero");
  return SpherePoint::normalize(py);
}

}  // namespace sphere4
