#pragma once

#include <complex>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "sphere4/types.hpp"

namespace sphere4 {

/// Real-input DFT of fixed length n in half-spectrum layout (n/2 + 1 bins).
///
/// Products and sums of half spectra of real signals stay Hermitian, so all
/// circulant arithmetic can run on the half layout. The inverse is scaled by
/// 1/n. Plans live in a thread_local engine, so instances are cheap and can be
/// used concurrently from different threads.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    if (n < 1) throw std::invalid_argument("RealFft: length must be >= 1");
  }

  [[nodiscard]] int size() const noexcept { return n_; }
  [[nodiscard]] int bins() const noexcept { return n_ / 2 + 1; }

  void forward(const double* x, std::complex<double>* out) const {
    if (n_ == 1) {
      out[0] = x[0];
      return;
    }
    engine().fwd(out, x, n_);
  }

  void inverse(const std::complex<double>* spec, double* out) const {
    if (n_ == 1) {
      out[0] = spec[0].real();
      return;
    }
    engine().inv(out, spec, n_);
  }

  [[nodiscard]] CVec forward(const Vec& x) const {
    check(x.size());
    CVec out(bins());
    forward(x.data(), out.data());
    return out;
  }

  [[nodiscard]] Vec inverse(const CVec& spec) const {
    if (spec.size() != bins()) throw std::invalid_argument("RealFft: spectrum size mismatch");
    Vec out(n_);
    inverse(spec.data(), out.data());
    return out;
  }

  /// Full n-bin spectrum (conjugate-symmetric extension of the half layout).
  [[nodiscard]] CVec forward_full(const Vec& x) const {
    const CVec half = forward(x);
    CVec full(n_);
    for (int k = 0; k < n_; ++k) full(k) = k < bins() ? half(k) : std::conj(half(n_ - k));
    return full;
  }

 private:
  void check(Eigen::Index len) const {
    if (len != n_) throw std::invalid_argument("RealFft: input length mismatch");
  }

  static Eigen::FFT<double>& engine() {
    thread_local Eigen::FFT<double> fft = [] {
      Eigen::FFT<double> f;
      f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
      return f;
    }();
    return fft;
  }

  int n_;
};

// ---------------------------------------------------------------------------
// Time-domain circulant helpers (all indices modulo n)
// ---------------------------------------------------------------------------

/// s_ℓ[v]: (s_ℓ[v])_j = v_{(j − ℓ) mod n}.
inline Vec cyclic_shift(const Vec& v, long long shift) {
  const long long n = v.size();
  Vec out(n);
  if (n == 0) return out;
  const long long s = ((shift % n) + n) % n;
  for (long long j = 0; j < n; ++j) out(j) = v((j - s + n) % n);
  return out;
}

/// v̌ = (v_0, v_{n−1}, …, v_1).
inline Vec cyclic_reversal(const Vec& v) {
  const Eigen::Index n = v.size();
  Vec out(n);
  for (Eigen::Index j = 0; j < n; ++j) out(j) = v((n - j) % n);
  return out;
}

/// C_v = [s_0[v] s_1[v] … s_{n−1}[v]].
inline Mat circulant_matrix(const Vec& v) {
  const Eigen::Index n = v.size();
  Mat c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) c.col(j) = cyclic_shift(v, j);
  return c;
}

/// a ⊛ b = C_a·b, computed spectrally.
inline Vec circular_convolve(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("circular_convolve: length mismatch");
  const RealFft fft(static_cast<int>(a.size()));
  return fft.inverse(fft.forward(a).cwiseProduct(fft.forward(b)));
}

/// C_aᵀ·b = ǎ ⊛ b, computed spectrally.
inline Vec circular_correlate(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("circular_correlate: length mismatch");
  const RealFft fft(static_cast<int>(a.size()));
  return fft.inverse(fft.forward(a).conjugate().cwiseProduct(fft.forward(b)));
}

}  // namespace sphere4
