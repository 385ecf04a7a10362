#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "sphere4/fft.hpp"
#include "sphere4/rng.hpp"
#include "sphere4/types.hpp"

namespace sphere4 {

// ---------------------------------------------------------------------------
// SpherePoint
// ---------------------------------------------------------------------------

/// A unit ℓ²-norm vector. The only way to build one is through `normalize`,
/// so every instance satisfies |‖q‖ − 1| ≤ 1e-12.
class SpherePoint {
 public:
  static SpherePoint normalize(Vec v) {
    const double nrm = v.norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) {
      throw std::domain_error("SpherePoint: cannot project a zero or non-finite vector");
    }
    v /= nrm;
    return SpherePoint(std::move(v));
  }

  /// Canonical basis vector e_i.
  static SpherePoint basis(int n, int i) {
    Vec v = Vec::Zero(n);
    v(i) = 1.0;
    return SpherePoint(std::move(v));
  }

  [[nodiscard]] const Vec& coords() const noexcept { return coords_; }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(coords_.size()); }
  double operator[](int i) const { return coords_(i); }
  SpherePoint operator-() const { return SpherePoint(-coords_); }

  /// Correlation vector ζ = Aᵀq.
  [[nodiscard]] Vec correlation(const Mat& a) const { return a.transpose() * coords_; }

  /// Projection of v onto the tangent space at this point.
  [[nodiscard]] Vec project_tangent(const Vec& v) const { return v - coords_.dot(v) * coords_; }

  friend bool operator==(const SpherePoint& a, const SpherePoint& b) {
    return a.coords_ == b.coords_;
  }

 private:
  explicit SpherePoint(Vec v) : coords_(std::move(v)) {}
  Vec coords_;
};

/// Uniform draw from S^{n-1}.
inline SpherePoint random_sphere_point(int n, CounterRng& rng) {
  Vec v(n);
  do {
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
  } while (v.norm() == 0.0);
  return SpherePoint::normalize(std::move(v));
}

inline SpherePoint random_sphere_point(int n, std::uint64_t seed) {
  CounterRng rng = CounterRng(seed).split(Purpose::init);
  return random_sphere_point(n, rng);
}

// ---------------------------------------------------------------------------
// Dictionary
// ---------------------------------------------------------------------------

/// Outcome of the alternating UNTF construction.
struct UntfStatus {
  bool converged = false;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
};

/// An n×m dictionary (m ≥ n) with cached column norms, Gram matrix, and
/// tight-frame residual ‖(n/m)·AAᵀ − I‖_F.
class Dictionary {
 public:
  explicit Dictionary(Mat entries, std::optional<UntfStatus> untf = std::nullopt)
      : a_(std::move(entries)), untf_(untf) {
    if (a_.rows() < 1 || a_.cols() < a_.rows()) {
      throw std::invalid_argument("Dictionary: need 1 <= n <= m, got n=" +
                                  std::to_string(a_.rows()) + " m=" + std::to_string(a_.cols()));
    }
    if (!a_.allFinite()) throw std::invalid_argument("Dictionary: non-finite entry");
    norms_ = a_.colwise().norm().transpose();
    gram_ = a_.transpose() * a_;
    const double n = static_cast<double>(a_.rows());
    const double m = static_cast<double>(a_.cols());
    tf_residual_ =
        ((n / m) * (a_ * a_.transpose()) - Mat::Identity(a_.rows(), a_.rows())).norm();
  }

  [[nodiscard]] const Mat& entries() const noexcept { return a_; }
  [[nodiscard]] int rows() const noexcept { return static_cast<int>(a_.rows()); }
  [[nodiscard]] int cols() const noexcept { return static_cast<int>(a_.cols()); }
  [[nodiscard]] double overcompleteness() const noexcept {
    return static_cast<double>(a_.cols()) / static_cast<double>(a_.rows());
  }
  [[nodiscard]] auto column(int i) const { return a_.col(i); }
  [[nodiscard]] const Vec& column_norms() const noexcept { return norms_; }
  [[nodiscard]] const Mat& gram() const noexcept { return gram_; }
  [[nodiscard]] double tight_frame_residual() const noexcept { return tf_residual_; }
  [[nodiscard]] double max_column_norm_deviation() const {
    return (norms_.array() - 1.0).abs().maxCoeff();
  }
  [[nodiscard]] const std::optional<UntfStatus>& untf_status() const noexcept { return untf_; }
  /// True when produced by `make_untf` and the construction converged.
  [[nodiscard]] bool is_untf() const noexcept { return untf_ && untf_->converged; }

 private:
  Mat a_;
  Vec norms_;
  Mat gram_;
  double tf_residual_ = 0.0;
  std::optional<UntfStatus> untf_;
};

/// Welch lower bound √((m−n)/((m−1)n)) on the coherence of unit-norm frames.
inline double welch_bound(int n, int m) {
  if (m <= 1) return 0.0;
  return std::sqrt(static_cast<double>(m - n) / (static_cast<double>(m - 1) * n));
}

/// Mutual coherence: max over i ≠ j of |⟨a_i/‖a_i‖, a_j/‖a_j‖⟩|.
inline double coherence(const Dictionary& d) {
  const Vec& nrm = d.column_norms();
  if ((nrm.array() == 0.0).any()) {
    throw std::invalid_argument("coherence: dictionary has a zero column");
  }
  const Mat& g = d.gram();
  double mu = 0.0;
  for (int j = 0; j < d.cols(); ++j) {
    for (int i = j + 1; i < d.cols(); ++i) {
      mu = std::max(mu, std::abs(g(i, j)) / (nrm(i) * nrm(j)));
    }
  }
  return std::min(mu, 1.0);
}

/// Alternating projections from a starting matrix: left-precondition by
/// ((n/m)·AAᵀ)^{-1/2}, then normalize columns, until both constraints hold.
/// The best iterate seen is returned.
inline Dictionary untf_projection(Mat a, int max_iters = 5000, double tol_untf = 1e-10) {
  if (max_iters < 1) throw std::invalid_argument("untf_projection: max_iters must be >= 1");
  if (!(tol_untf > 0.0)) throw std::invalid_argument("untf_projection: tol_untf must be > 0");
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  if (n < 1 || m < n) throw std::invalid_argument("untf_projection: need 1 <= n <= m");
  const double ratio = static_cast<double>(n) / static_cast<double>(m);
  const Mat eye = Mat::Identity(n, n);
  UntfStatus status;
  Mat best = a;
  double best_residual = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= max_iters; ++it) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(ratio * (a * a.transpose()));
    Vec lam = eig.eigenvalues();
    const double floor = 1e-14 * std::max(lam.maxCoeff(), 0.0);
    lam = lam.cwiseMax(floor > 0.0 ? floor : std::numeric_limits<double>::min());
    const Mat inv_sqrt = eig.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                         eig.eigenvectors().transpose();
    a = inv_sqrt * a;
    for (int j = 0; j < m; ++j) {
      const double c = a.col(j).norm();
      if (c > 0.0) a.col(j) /= c;
    }
    const double residual = (ratio * (a * a.transpose()) - eye).norm();
    const double coldev = (a.colwise().norm().array() - 1.0).abs().maxCoeff();
    const double worst = std::max(residual, coldev);
    if (worst < best_residual) {
      best_residual = worst;
      best = a;
    }
    status.iterations = it;
    if (residual <= tol_untf && coldev <= tol_untf) {
      status.converged = true;
      break;
    }
  }
  status.residual = best_residual;
  return Dictionary(std::move(best), status);
}

/// Unit-norm tight frame from a N(0, 1/n) start.
inline Dictionary make_untf(int n, int m, std::uint64_t seed, int max_iters = 5000,
                            double tol_untf = 1e-10) {
  if (n < 1 || m < n) throw std::invalid_argument("make_untf: need 1 <= n <= m");
  CounterRng rng = CounterRng(seed).split(Purpose::dictionary);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  Mat a(n, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = sd * rng.normal();
  return untf_projection(std::move(a), max_iters, tol_untf);
}

/// Lower-coherence UNTF: Gram-matrix alternating projection (off-diagonals
/// clipped to ±target_ratio·Welch bound, then the nearest rank-n Gram with
/// spectrum m/n), followed by the usual UNTF projection. Random UNTFs at small
/// n are quite coherent (μ ≈ 0.4–0.8 for n ≤ 16); this brings μ near the
/// Welch bound.
inline Dictionary make_low_coherence_untf(int n, int m, std::uint64_t seed, double target_ratio = 1.1,
                                          int clip_iters = 1000) {
  if (!(target_ratio > 0.0)) throw std::invalid_argument("make_low_coherence_untf: target_ratio must be > 0");
  Mat a = make_untf(n, m, seed).entries();
  if (m == n) return untf_projection(std::move(a));
  const double cap = target_ratio * welch_bound(n, m);
  const double scale = std::sqrt(static_cast<double>(m) / static_cast<double>(n));
  for (int it = 0; it < clip_iters; ++it) {
    Mat g = a.transpose() * a;
    g = g.cwiseMax(-cap).cwiseMin(cap);
    g.diagonal().setOnes();
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    a = scale * es.eigenvectors().rightCols(n).transpose();
    for (int j = 0; j < m; ++j) {
      const double c = a.col(j).norm();
      if (c > 0.0) a.col(j) /= c;
    }
  }
  return untf_projection(std::move(a));
}

// ---------------------------------------------------------------------------
// Sparse codes and observations
// ---------------------------------------------------------------------------

struct SparseCode {
  Mat entries;  // m×p
  double theta = 0.0;

  [[nodiscard]] double density() const {
    if (entries.size() == 0) return 0.0;
    return static_cast<double>((entries.array() != 0.0).count()) /
           static_cast<double>(entries.size());
  }
};

/// X = B ⊙ G with B ~ Ber(θ), G ~ N(0,1), entrywise independent. Masked
/// entries are exact zeros. Column-major draw order; deterministic in `seed`.
inline SparseCode sample_bg(int m, int p, double theta, CounterRng rng) {
  if (!(theta > 0.0 && theta < 1.0)) {
    throw std::invalid_argument("sample_bg: theta must lie in (0,1)");
  }
  if (m < 0 || p < 0) throw std::invalid_argument("sample_bg: negative shape");
  SparseCode x{Mat::Zero(m, p), theta};
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < m; ++i) {
      const bool on = rng.bernoulli(theta);
      const double g = rng.normal();
      if (on) x.entries(i, j) = g;
    }
  }
  return x;
}

inline SparseCode sample_bg(int m, int p, double theta, std::uint64_t seed) {
  return sample_bg(m, p, theta, CounterRng(seed).split(Purpose::code));
}

struct ObservationSet {
  Mat entries;  // n×p

  [[nodiscard]] int rows() const noexcept { return static_cast<int>(entries.rows()); }
  [[nodiscard]] int samples() const noexcept { return static_cast<int>(entries.cols()); }
};

/// Y = A·X.
inline ObservationSet synth_odl(const Dictionary& d, const SparseCode& x) {
  if (x.entries.rows() != d.cols()) {
    throw std::invalid_argument("synth_odl: dictionary has " + std::to_string(d.cols()) +
                                " columns but code has " + std::to_string(x.entries.rows()) +
                                " rows");
  }
  return ObservationSet{d.entries() * x.entries};
}

// ---------------------------------------------------------------------------
// Scalar diagnostics
// ---------------------------------------------------------------------------

/// |ζ_(1)| / |ζ_(2)| over magnitude-ordered entries. A zero runner-up gives
/// +infinity (maximally spiky), never a division fault.
inline double spikiness(std::span<const double> zeta) {
  if (zeta.size() < 2) throw std::invalid_argument("spikiness: need at least two entries");
  double first = 0.0, second = 0.0;
  for (double z : zeta) {
    const double a = std::abs(z);
    if (a > first) {
      second = first;
      first = a;
    } else if (a > second) {
      second = a;
    }
  }
  if (second == 0.0) return std::numeric_limits<double>::infinity();
  return first / second;
}

inline double spikiness(const Vec& zeta) {
  return spikiness(std::span<const double>(zeta.data(), static_cast<std::size_t>(zeta.size())));
}


// ---------------------------------------------------------------------------
// Filter banks
// ---------------------------------------------------------------------------

/// K filters of length n, stored as the columns of an n×K matrix, together
/// with the singular-value range of the stacked circulant A₀ = [C_{a_1} … C_{a_K}].
/// A₀A₀ᵀ is circulant with eigenvalues Σ_k |â_k(ω)|², so the singular values
/// come from one DFT per filter.
class FilterBank {
 public:
  explicit FilterBank(Mat filters) : filters_(std::move(filters)) {
    if (filters_.rows() < 1 || filters_.cols() < 1) {
      throw std::invalid_argument("FilterBank: need n >= 1 and K >= 1");
    }
    if (!filters_.allFinite()) throw std::invalid_argument("FilterBank: non-finite entry");
    const RealFft fft(length());
    Vec power = Vec::Zero(fft.bins());
    for (int k = 0; k < count(); ++k) {
      power += fft.forward(Vec(filters_.col(k))).cwiseAbs2();
    }
    sigma_max_ = std::sqrt(power.maxCoeff());
    sigma_min_ = std::sqrt(power.minCoeff());
    if (!(sigma_min_ > 0.0)) {
      throw std::domain_error("FilterBank: stacked circulant is rank deficient (sigma_min = 0)");
    }
  }

  [[nodiscard]] const Mat& filters() const noexcept { return filters_; }
  [[nodiscard]] Vec filter(int k) const { return filters_.col(k); }
  [[nodiscard]] int length() const noexcept { return static_cast<int>(filters_.rows()); }
  [[nodiscard]] int count() const noexcept { return static_cast<int>(filters_.cols()); }
  [[nodiscard]] double sigma_min() const noexcept { return sigma_min_; }
  [[nodiscard]] double sigma_max() const noexcept { return sigma_max_; }
  [[nodiscard]] double kappa() const noexcept { return sigma_max_ / sigma_min_; }

  /// Dense A₀ (n × nK).
  [[nodiscard]] Mat stacked_circulant() const {
    const int n = length();
    Mat a0(n, n * count());
    for (int k = 0; k < count(); ++k) a0.middleCols(k * n, n) = circulant_matrix(filter(k));
    return a0;
  }

 private:
  Mat filters_;
  double sigma_min_ = 0.0;
  double sigma_max_ = 0.0;
};

/// K filters drawn uniformly from S^{n-1}. Banks whose stacked circulant is
/// numerically singular (σ_min < 1e-8·σ_max) are redrawn.
inline FilterBank make_filter_bank(int n, int k, std::uint64_t seed) {
  if (n < 1 || k < 1) throw std::invalid_argument("make_filter_bank: need n >= 1 and K >= 1");
  CounterRng rng = CounterRng(seed).split(Purpose::filters);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Mat f(n, k);
    for (int j = 0; j < k; ++j) f.col(j) = random_sphere_point(n, rng).coords();
    try {
      FilterBank bank(std::move(f));
      if (bank.sigma_min() >= 1e-8 * bank.sigma_max()) return bank;
    } catch (const std::domain_error&) {
    }
  }
  throw NumericalError("make_filter_bank: could not draw a well-conditioned filter bank");
}

}  // namespace sphere4
