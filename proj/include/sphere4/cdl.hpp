#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sphere4/fft.hpp"
#include "sphere4/model.hpp"
#include "sphere4/objective.hpp"
#include "sphere4/parallel.hpp"

namespace sphere4 {

// ---------------------------------------------------------------------------
// Circulant operators
// ---------------------------------------------------------------------------

/// C_v held by its generator and half spectrum.
class CirculantOp {
 public:
  explicit CirculantOp(Vec generator)
      : gen_(std::move(generator)), fft_(static_cast<int>(gen_.size())), spec_(fft_.forward(gen_)) {}

  [[nodiscard]] int size() const noexcept { return fft_.size(); }
  [[nodiscard]] const Vec& generator() const noexcept { return gen_; }
  [[nodiscard]] const CVec& spectrum() const noexcept { return spec_; }

  /// C_v·x = v ⊛ x.
  [[nodiscard]] Vec apply(const Vec& x) const {
    return fft_.inverse(spec_.cwiseProduct(fft_.forward(x)));
  }
  /// C_vᵀ·x.
  [[nodiscard]] Vec apply_transpose(const Vec& x) const {
    return fft_.inverse(spec_.conjugate().cwiseProduct(fft_.forward(x)));
  }
  [[nodiscard]] Mat matrix() const { return circulant_matrix(gen_); }

 private:
  Vec gen_;
  RealFft fft_;
  CVec spec_;
};

// ---------------------------------------------------------------------------
// Preconditioner
// ---------------------------------------------------------------------------

/// Normalization of the empirical covariance before the inverse square root.
/// The choices differ only by a positive scalar on P, which cancels after any
/// projection onto the sphere.
///   main_text   : (θK²n·p)⁻¹ YYᵀ
///   appendix_h  : (θn·p)⁻¹ YYᵀ
///   tight_frame : (θKn·p)⁻¹ YYᵀ, whose expectation is K⁻¹A₀A₀ᵀ, so that
///                 P·A₀ is tight with K⁻¹(PA₀)(PA₀)ᵀ → I
enum class ScaleConvention { main_text, appendix_h, tight_frame };

inline std::string_view to_string(ScaleConvention c) {
  switch (c) {
    case ScaleConvention::main_text: return "main_text";
    case ScaleConvention::appendix_h: return "appendix_h";
    case ScaleConvention::tight_frame: return "tight_frame";
  }
  return "main_text";
}

inline ScaleConvention scale_convention_from_string(std::string_view s) {
  if (s == "main_text") return ScaleConvention::main_text;
  if (s == "appendix_h") return ScaleConvention::appendix_h;
  if (s == "tight_frame") return ScaleConvention::tight_frame;
  throw std::invalid_argument("unknown scale convention: " + std::string(s));
}

inline double convention_scale(ScaleConvention c, double theta, int k, int n) {
  switch (c) {
    case ScaleConvention::main_text: return theta * k * k * n;
    case ScaleConvention::appendix_h: return theta * n;
    case ScaleConvention::tight_frame: return theta * k * n;
  }
  return theta * k * k * n;
}

/// Circulant SPD preconditioner P = F⁻¹ diag(ŵ) F with real positive
/// weights ŵ (conjugate-symmetric, stored as the n/2 + 1 half bins).
class Preconditioner {
 public:
  Preconditioner(Vec half_weights, int n, ScaleConvention convention, bool floored = false)
      : w_(std::move(half_weights)), fft_(n), convention_(convention), floored_(floored) {
    if (w_.size() != fft_.bins()) throw std::invalid_argument("Preconditioner: weight count mismatch");
    if (!((w_.array() > 0.0).all() && w_.allFinite())) {
      throw std::invalid_argument("Preconditioner: weights must be finite and positive");
    }
  }

  static Preconditioner identity(int n) {
    return Preconditioner(Vec::Ones(n / 2 + 1), n, ScaleConvention::main_text);
  }

  [[nodiscard]] int size() const noexcept { return fft_.size(); }
  [[nodiscard]] const Vec& half_weights() const noexcept { return w_; }
  /// All n spectral weights.
  [[nodiscard]] Vec weights() const {
    const int n = size();
    Vec full(n);
    for (int k = 0; k < n; ++k) full(k) = k < fft_.bins() ? w_(k) : w_(n - k);
    return full;
  }
  [[nodiscard]] ScaleConvention convention() const noexcept { return convention_; }
  /// True when some power bin was raised to the spectral floor.
  [[nodiscard]] bool floored() const noexcept { return floored_; }

  [[nodiscard]] Vec apply(const Vec& x) const {
    CVec s = fft_.forward(x);
    s.array() *= w_.array();
    return fft_.inverse(s);
  }
  [[nodiscard]] Vec apply_inverse(const Vec& x) const {
    CVec s = fft_.forward(x);
    s.array() /= w_.array();
    return fft_.inverse(s);
  }
  /// Time-domain generator p with P = C_p.
  [[nodiscard]] Vec generator() const { return fft_.inverse(w_.cast<std::complex<double>>()); }
  [[nodiscard]] Mat matrix() const { return circulant_matrix(generator()); }

 private:
  Vec w_;
  RealFft fft_;
  ScaleConvention convention_;
  bool floored_;
};

inline constexpr double kSpectralFloor = 1e-10;

/// ŵ = (scale⁻¹ · (1/p)·Σ_i |ŷ_i|²)^{-1/2}; bins below kSpectralFloor·max are
/// floored and the result is flagged.
inline Preconditioner build_preconditioner(const ObservationSet& y, double theta, int k,
                                           ScaleConvention convention) {
  const int n = y.rows();
  const int p = y.samples();
  if (p < 1) throw std::invalid_argument("build_preconditioner: need p >= 1");
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("build_preconditioner: theta must lie in (0,1)");
  if (k < 1) throw std::invalid_argument("build_preconditioner: K must be >= 1");
  const RealFft fft(n);
  Vec power = Vec::Zero(fft.bins());
  CVec spec(fft.bins());
  for (int i = 0; i < p; ++i) {
    fft.forward(y.entries.col(i).data(), spec.data());
    power += spec.cwiseAbs2();
  }
  power /= static_cast<double>(p);
  const double top = power.maxCoeff();
  if (!(top > 0.0)) throw std::domain_error("build_preconditioner: measurements are all zero");
  bool floored = false;
  for (Eigen::Index b = 0; b < power.size(); ++b) {
    if (power(b) < kSpectralFloor * top) {
      power(b) = kSpectralFloor * top;
      floored = true;
    }
  }
  const double scale = convention_scale(convention, theta, k, n);
  Vec w = (power / scale).cwiseSqrt().cwiseInverse();
  return Preconditioner(std::move(w), n, convention, floored);
}

/// a⋆ = P_S(P⁻¹ q⋆).
inline SpherePoint deprecondition(const SpherePoint& q, const Preconditioner& p) {
  return SpherePoint::normalize(p.apply_inverse(q.coords()));
}

/// Dense P·A₀ = [P C_{a_1} … P C_{a_K}] (n × nK).
inline Mat effective_dictionary(const FilterBank& filters, const Preconditioner& p) {
  const int n = filters.length();
  Mat a(n, n * filters.count());
  for (int k = 0; k < filters.count(); ++k) {
    a.middleCols(k * n, n) = circulant_matrix(p.apply(filters.filter(k)));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Convolutional model
// ---------------------------------------------------------------------------

/// y_i = Σ_k a_k ⊛ x_ik, where column i of `codes` stacks x_i1, …, x_iK.
inline ObservationSet circ_embed(const FilterBank& filters, const Mat& codes) {
  const int n = filters.length();
  const int k = filters.count();
  if (codes.rows() != static_cast<Eigen::Index>(n) * k) {
    throw std::invalid_argument("circ_embed: code length " + std::to_string(codes.rows()) +
                                " != n*K = " + std::to_string(n * k));
  }
  const RealFft fft(n);
  std::vector<CVec> fspec;
  for (int j = 0; j < k; ++j) fspec.push_back(fft.forward(filters.filter(j)));
  ObservationSet y{Mat::Zero(n, codes.cols())};
  CVec acc(fft.bins()), tmp(fft.bins());
  for (Eigen::Index i = 0; i < codes.cols(); ++i) {
    acc.setZero();
    for (int j = 0; j < k; ++j) {
      const Vec x = codes.col(i).segment(static_cast<Eigen::Index>(j) * n, n);
      fft.forward(x.data(), tmp.data());
      acc += fspec[j].cwiseProduct(tmp);
    }
    fft.inverse(acc.data(), y.entries.col(i).data());
  }
  return y;
}

struct ConvProblem {
  FilterBank filters;
  Mat codes;  // nK × p
  ObservationSet measurements;  // n × p
  double theta = 0.0;

  [[nodiscard]] int length() const noexcept { return filters.length(); }
  [[nodiscard]] int count() const noexcept { return filters.count(); }
  [[nodiscard]] int samples() const noexcept { return measurements.samples(); }
};

/// Filters uniform on the sphere, BG(θ) codes, circular measurements.
inline ConvProblem make_conv_problem(int n, int k, double theta, int p, std::uint64_t seed) {
  FilterBank bank = make_filter_bank(n, k, seed);
  SparseCode x = sample_bg(n * k, p, theta, CounterRng(seed).split(Purpose::code));
  ObservationSet y = circ_embed(bank, x.entries);
  return ConvProblem{std::move(bank), std::move(x.entries), std::move(y), theta};
}

// ---------------------------------------------------------------------------
// CDL objective
// ---------------------------------------------------------------------------

/// φ_CDL(q) = −c_CDL · Σ_i ‖C_{y_iᵖ}ᵀ q‖₄⁴, y_iᵖ = P y_i, c_CDL = 1/(12θ(1−θ)np).
///
/// Every per-measurement term costs O(n log n) through the DFT. Measurements
/// are processed in fixed chunks whose partial sums are combined by a
/// pairwise tree, so results are bitwise identical for any thread count.
class CdlObjective {
 public:
  CdlObjective(const ObservationSet& y, const Preconditioner& p, double theta, int k,
               int threads = 1)
      : fft_(y.rows()), theta_(theta), k_(k), samples_(y.samples()), threads_(std::max(1, threads)) {
    if (p.size() != y.rows()) throw std::invalid_argument("CdlObjective: preconditioner size mismatch");
    c_ = 1.0 / (12.0 * theta * (1.0 - theta) * static_cast<double>(y.rows()) *
                static_cast<double>(samples_));
    if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("CdlObjective: theta must lie in (0,1)");
    if (samples_ < 1) throw std::invalid_argument("CdlObjective: need p >= 1");
    spectra_.resize(fft_.bins(), samples_);
    CVec tmp(fft_.bins());
    const Vec& w = p.half_weights();
    for (int i = 0; i < samples_; ++i) {
      fft_.forward(y.entries.col(i).data(), tmp.data());
      spectra_.col(i) = tmp.cwiseProduct(w.cast<std::complex<double>>());
    }
  }

  [[nodiscard]] int dim() const noexcept { return fft_.size(); }
  [[nodiscard]] int samples() const noexcept { return samples_; }
  [[nodiscard]] double normalizer() const noexcept { return c_; }
  [[nodiscard]] double theta() const noexcept { return theta_; }
  [[nodiscard]] int filters() const noexcept { return k_; }

  /// Preconditioned measurement y_iᵖ.
  [[nodiscard]] Vec preconditioned(int i) const { return fft_.inverse(CVec(spectra_.col(i))); }

  [[nodiscard]] double value(const SpherePoint& q) const {
    check(q);
    const CVec qs = fft_.forward(q.coords());
    auto parts = over_chunks<double>([&](int begin, int end) {
      CVec t(fft_.bins());
      Vec z(dim());
      double acc = 0.0;
      for (int i = begin; i < end; ++i) {
        t = spectra_.col(i).conjugate().cwiseProduct(qs);
        fft_.inverse(t.data(), z.data());
        acc += z.array().square().square().sum();
      }
      return acc;
    });
    return -c_ * tree_reduce(std::move(parts), [](double& a, const double& b) { a += b; });
  }

  [[nodiscard]] Evaluation evaluate(const SpherePoint& q) const {
    check(q);
    const CVec qs = fft_.forward(q.coords());
    struct Part {
      double value = 0.0;
      CVec grad;
    };
    auto parts = over_chunks<Part>([&](int begin, int end) {
      Part part{0.0, CVec::Zero(fft_.bins())};
      CVec t(fft_.bins()), u(fft_.bins());
      Vec z(dim()), z3(dim());
      for (int i = begin; i < end; ++i) {
        t = spectra_.col(i).conjugate().cwiseProduct(qs);
        fft_.inverse(t.data(), z.data());
        const Eigen::ArrayXd z2 = z.array().square();
        part.value += z2.square().sum();
        z3 = (z2 * z.array()).matrix();
        fft_.forward(z3.data(), u.data());
        part.grad += spectra_.col(i).cwiseProduct(u);
      }
      return part;
    });
    Part total = tree_reduce(std::move(parts), [](Part& a, const Part& b) {
      a.value += b.value;
      a.grad += b.grad;
    });
    Evaluation e;
    e.value = -c_ * total.value;
    e.egrad = (-4.0 * c_) * fft_.inverse(total.grad);
    return e;
  }

  /// ∇²φ(q)·v = −12c Σ_i C_{y_iᵖ} diag(z_i²) C_{y_iᵖ}ᵀ v with z_i = C_{y_iᵖ}ᵀ q.
  [[nodiscard]] Vec euclidean_hess_vec(const SpherePoint& q, const Vec& v) const {
    check(q);
    if (v.size() != dim()) throw std::invalid_argument("CdlObjective: direction size mismatch");
    const CVec qs = fft_.forward(q.coords());
    const CVec vs = fft_.forward(v);
    auto parts = over_chunks<CVec>([&](int begin, int end) {
      CVec acc = CVec::Zero(fft_.bins());
      CVec t(fft_.bins());
      Vec z(dim()), w(dim()), s(dim());
      for (int i = begin; i < end; ++i) {
        t = spectra_.col(i).conjugate().cwiseProduct(qs);
        fft_.inverse(t.data(), z.data());
        t = spectra_.col(i).conjugate().cwiseProduct(vs);
        fft_.inverse(t.data(), w.data());
        s = (z.array().square() * w.array()).matrix();
        fft_.forward(s.data(), t.data());
        acc += spectra_.col(i).cwiseProduct(t);
      }
      return acc;
    });
    const CVec total = tree_reduce(std::move(parts), [](CVec& a, const CVec& b) { a += b; });
    return (-12.0 * c_) * fft_.inverse(total);
  }

  /// The n × np matrix [C_{y_1ᵖ} … C_{y_pᵖ}], i.e. P·Y in the ODL embedding.
  [[nodiscard]] Mat dense_matrix() const {
    const int n = dim();
    Mat m(n, static_cast<Eigen::Index>(n) * samples_);
    for (int i = 0; i < samples_; ++i) {
      m.middleCols(static_cast<Eigen::Index>(i) * n, n) = circulant_matrix(preconditioned(i));
    }
    return m;
  }

  /// Dense reference: the ODL objective on the materialized matrix. Its
  /// normalizer 1/(12θ(1−θ)·np) equals c_CDL.
  [[nodiscard]] OdlObjective dense_equivalent() const { return OdlObjective(dense_matrix(), theta_); }

 private:
  static constexpr int kChunk = 128;

  template <class T, class Fn>
  std::vector<T> over_chunks(Fn&& fn) const {
    const int chunks = (samples_ + kChunk - 1) / kChunk;
    std::vector<T> parts(static_cast<std::size_t>(chunks));
    parallel_for(chunks, threads_, [&](int c) {
      const int begin = c * kChunk;
      const int end = std::min(samples_, begin + kChunk);
      parts[static_cast<std::size_t>(c)] = fn(begin, end);
    });
    return parts;
  }

  void check(const SpherePoint& q) const {
    if (q.dim() != dim()) throw std::invalid_argument("CdlObjective: dimension mismatch");
  }

  RealFft fft_;
  CMat spectra_;  // half spectra of P y_i, one column per measurement
  double theta_;
  int k_;
  int samples_;
  int threads_;
  double c_ = 0.0;
};

static_assert(SphereObjective<CdlObjective>);

}  // namespace sphere4
