#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sphere4/cdl.hpp"
#include "sphere4/model.hpp"
#include "sphere4/objective.hpp"
#include "sphere4/optimize.hpp"
#include "sphere4/parallel.hpp"

namespace sphere4 {

inline constexpr double kSuccessThreshold = 5e-2;

struct RecoveryOutcome {
  double rho_e = 1.0;
  int best_index = 0;
  bool success = false;
};

/// ρ_e = min_i (1 − |⟨q, a_i/‖a_i‖⟩|); ties within 1e-12 go to the lowest index.
inline RecoveryOutcome recovery_error(const SpherePoint& q, const Mat& a,
                                      double threshold = kSuccessThreshold) {
  if (q.dim() != a.rows()) throw std::invalid_argument("recovery_error: dimension mismatch");
  const Vec norms = a.colwise().norm().transpose();
  if (!(norms.array() > 0.0).all()) throw std::invalid_argument("recovery_error: zero column");
  const Eigen::ArrayXd inner = (q.correlation(a).array() / norms.array()).abs();
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < inner.size(); ++i) {
    if (inner(i) > inner(best) + 1e-12) best = i;
  }
  RecoveryOutcome out;
  out.rho_e = std::clamp(1.0 - inner(best), 0.0, 1.0);
  out.best_index = static_cast<int>(best);
  out.success = out.rho_e < threshold;
  return out;
}

inline RecoveryOutcome recovery_error(const SpherePoint& q, const Dictionary& d,
                                      double threshold = kSuccessThreshold) {
  return recovery_error(q, d.entries(), threshold);
}

// ---------------------------------------------------------------------------
// Full-dictionary coverage
// ---------------------------------------------------------------------------

struct DictionaryCoverage {
  std::vector<int> recovered;  // sorted column indices
  int trials_used = 0;
  std::vector<RecoveryOutcome> per_trial;
  std::vector<int> cumulative;  // |recovered| after each trial

  [[nodiscard]] bool complete(int m) const { return static_cast<int>(recovered.size()) == m; }
};

/// Runs trial_fn(0), trial_fn(1), … until all m columns have been hit by a
/// successful trial or the budget is spent. Trials are evaluated in parallel
/// batches but folded in index order, so the result never depends on the
/// thread count and a larger budget only extends a smaller one.
inline DictionaryCoverage cover_columns(int m, int budget,
                                        const std::function<RecoveryOutcome(int)>& trial_fn,
                                        int threads = 1) {
  if (budget < 1) throw std::invalid_argument("cover_columns: budget must be >= 1");
  if (m < 1) throw std::invalid_argument("cover_columns: m must be >= 1");
  threads = std::max(1, threads);
  DictionaryCoverage cov;
  std::vector<char> hit(static_cast<std::size_t>(m), 0);
  int covered = 0;
  for (int start = 0; start < budget && covered < m; start += threads) {
    const int count = std::min(threads, budget - start);
    std::vector<RecoveryOutcome> batch(static_cast<std::size_t>(count));
    parallel_for(count, threads, [&](int i) { batch[static_cast<std::size_t>(i)] = trial_fn(start + i); });
    for (const RecoveryOutcome& r : batch) {
      if (r.best_index < 0 || r.best_index >= m) throw std::out_of_range("cover_columns: bad column index");
      cov.per_trial.push_back(r);
      ++cov.trials_used;
      if (r.success && !hit[static_cast<std::size_t>(r.best_index)]) {
        hit[static_cast<std::size_t>(r.best_index)] = 1;
        ++covered;
      }
      cov.cumulative.push_back(covered);
      if (covered == m) break;
    }
  }
  for (int i = 0; i < m; ++i) {
    if (hit[static_cast<std::size_t>(i)]) cov.recovered.push_back(i);
  }
  return cov;
}

/// Seed of trial t.
inline std::uint64_t trial_seed(std::uint64_t seed_base, int t) {
  return seed_base + static_cast<std::uint64_t>(t);
}

/// One solve from a uniformly random start, scored against `reference`.
template <SphereObjective F>
RecoveryOutcome random_start_trial(const F& f, const Mat& reference, SolveConfig cfg,
                                   std::uint64_t seed, double threshold = kSuccessThreshold) {
  cfg.seed = seed;
  cfg.record_trace = false;
  const SolveResult res = solve(f, random_sphere_point(f.dim(), seed), cfg);
  return recovery_error(res.q_star, reference, threshold);
}

/// Repeated independent solves (trial t seeded with seed_base + t) until every
/// column of `reference` is found or the budget is exhausted.
template <SphereObjective F>
DictionaryCoverage recover_full(const F& f, const Mat& reference, const SolveConfig& cfg, int budget,
                                std::uint64_t seed_base, int threads = 1,
                                double threshold = kSuccessThreshold) {
  return cover_columns(
      static_cast<int>(reference.cols()), budget,
      [&](int t) { return random_start_trial(f, reference, cfg, trial_seed(seed_base, t), threshold); },
      threads);
}

inline int coverage_budget(int m, double factor = 8.0) {
  return std::max(1, static_cast<int>(std::ceil(factor * m * std::log(static_cast<double>(m)))));
}

// ---------------------------------------------------------------------------
// Filter alignment
// ---------------------------------------------------------------------------

struct Alignment {
  int shift = 0;
  int sign = 1;
  double error = 0.0;  // ‖sign·s_shift[a_true] − a_est‖ after normalization
};

/// Best (ℓ, s) minimizing ‖s·s_ℓ[a_true] − a_est‖, both normalized, from one
/// FFT cross-correlation: ⟨s_ℓ[t], e⟩ = (C_tᵀ e)_ℓ.
inline Alignment align_shift(const Vec& a_est, const Vec& a_true) {
  if (a_est.size() != a_true.size()) throw std::invalid_argument("align_shift: length mismatch");
  const double ne = a_est.norm(), nt = a_true.norm();
  if (!(ne > 0.0 && nt > 0.0)) throw std::invalid_argument("align_shift: zero vector");
  const Vec e = a_est / ne;
  const Vec t = a_true / nt;
  const Vec corr = circular_correlate(t, e);
  Eigen::Index best = 0;
  for (Eigen::Index l = 1; l < corr.size(); ++l) {
    if (std::abs(corr(l)) > std::abs(corr(best)) + 1e-12) best = l;
  }
  Alignment out;
  out.shift = static_cast<int>(best);
  out.sign = corr(best) < 0.0 ? -1 : 1;
  out.error = (out.sign * cyclic_shift(t, best) - e).norm();
  return out;
}

// ---------------------------------------------------------------------------
// CDL filter recovery
// ---------------------------------------------------------------------------

inline constexpr double kFilterTolerance = 0.1;

struct FilterTrial {
  int trial = 0;
  std::uint64_t seed = 0;
  int filter = 0;  // best-matching true filter
  Alignment alignment;
  int iterations = 0;
  Termination termination = Termination::max_iters;
};

struct FilterResult {
  int filter = 0;
  Alignment best;  // best over all trials
  bool recovered = false;
  int found_at_trial = -1;
};

struct FilterRecovery {
  std::vector<FilterResult> filters;
  std::vector<FilterTrial> trials;
  int trials_used = 0;

  [[nodiscard]] bool all_recovered() const {
    return std::all_of(filters.begin(), filters.end(), [](const FilterResult& f) { return f.recovered; });
  }
};

struct FilterRecoveryConfig {
  SolveConfig solver{};
  int budget = 0;  // 0 → 10·K
  double tolerance = kFilterTolerance;
  ScaleConvention convention = ScaleConvention::main_text;
  std::uint64_t seed_base = 0;
  int threads = 1;  // objective-level parallelism
};

/// Per trial: data-driven init → solve → deprecondition → align against every
/// true filter. Stops as soon as all filters are within tolerance.
inline FilterRecovery recover_filters(const ConvProblem& problem, const FilterRecoveryConfig& cfg) {
  const int k = problem.count();
  const int budget = cfg.budget > 0 ? cfg.budget : 10 * k;
  const Preconditioner p = build_preconditioner(problem.measurements, problem.theta, k, cfg.convention);
  const CdlObjective f(problem.measurements, p, problem.theta, k, cfg.threads);

  FilterRecovery out;
  for (int j = 0; j < k; ++j) {
    FilterResult r;
    r.filter = j;
    r.best.error = std::numeric_limits<double>::infinity();
    out.filters.push_back(r);
  }
  for (int t = 0; t < budget && !out.all_recovered(); ++t) {
    const std::uint64_t seed = trial_seed(cfg.seed_base, t);
    SolveConfig sc = cfg.solver;
    sc.seed = seed;
    sc.record_trace = false;
    const SolveResult res = solve(f, init_cdl(problem.measurements, p, std::nullopt, seed), sc);
    const SpherePoint a = deprecondition(res.q_star, p);

    FilterTrial tr;
    tr.trial = t;
    tr.seed = seed;
    tr.iterations = res.iterations;
    tr.termination = res.termination;
    tr.alignment.error = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const Alignment al = align_shift(a.coords(), problem.filters.filter(j));
      if (al.error < tr.alignment.error) {
        tr.alignment = al;
        tr.filter = j;
      }
    }
    FilterResult& fr = out.filters[static_cast<std::size_t>(tr.filter)];
    if (tr.alignment.error < fr.best.error) fr.best = tr.alignment;
    if (!fr.recovered && tr.alignment.error <= cfg.tolerance) {
      fr.recovered = true;
      fr.found_at_trial = t;
    }
    out.trials.push_back(tr);
    ++out.trials_used;
  }
  return out;
}

}  // namespace sphere4
