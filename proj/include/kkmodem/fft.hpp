#pragma once

// Thin RAII wrapper over FFTW3 complex-to-complex transforms.
//
// Every Fft owns an aligned in-place work buffer and a forward/inverse plan
// for it. Transforms always run on that buffer, so repeated transforms of the
// same data are bit-identical regardless of where the caller's data lives.

#include <fftw3.h>

#include <algorithm>
#include <cstddef>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "kkmodem/common.hpp"

namespace kkm {

namespace detail {
// The FFTW planner is not reentrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    require(n > 0, "Fft: size must be positive");
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    buf_ = fftw_alloc_complex(n_);
    if (buf_ == nullptr) throw std::bad_alloc();
    const int ni = static_cast<int>(n_);
    fwd_ = fftw_plan_dft_1d(ni, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_1d(ni, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  Fft(Fft&& other) noexcept
      : n_(other.n_),
        buf_(std::exchange(other.buf_, nullptr)),
        fwd_(std::exchange(other.fwd_, nullptr)),
        inv_(std::exchange(other.inv_, nullptr)) {}

  Fft& operator=(Fft&& other) noexcept {
    if (this != &other) {
      release();
      n_ = other.n_;
      buf_ = std::exchange(other.buf_, nullptr);
      fwd_ = std::exchange(other.fwd_, nullptr);
      inv_ = std::exchange(other.inv_, nullptr);
    }
    return *this;
  }

  ~Fft() { release(); }

  std::size_t size() const { return n_; }

  /// The work buffer. forward()/inverse() transform it in place.
  std::span<cplx> data() { return {reinterpret_cast<cplx*>(buf_), n_}; }

  void forward() { fftw_execute(fwd_); }

  /// Inverse transform normalised by 1/n.
  void inverse() {
    fftw_execute(inv_);
    const double s = 1.0 / static_cast<double>(n_);
    for (auto& v : data()) v *= s;
  }

  void forward(std::span<const cplx> in, std::span<cplx> out) {
    load(in);
    forward();
    store(out);
  }

  void inverse(std::span<const cplx> in, std::span<cplx> out) {
    load(in);
    inverse();
    store(out);
  }

 private:
  void load(std::span<const cplx> in) {
    require(in.size() == n_, "Fft: input length mismatch");
    std::copy(in.begin(), in.end(), data().begin());
  }
  void store(std::span<cplx> out) {
    require(out.size() == n_, "Fft: output length mismatch");
    std::copy(data().begin(), data().end(), out.begin());
  }

  void release() {
    if (buf_ == nullptr) return;
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_);
    buf_ = nullptr;
  }

  std::size_t n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

inline std::vector<cplx> fft(std::span<const cplx> x) {
  Fft f(x.size());
  std::vector<cplx> out(x.size());
  f.forward(x, out);
  return out;
}

inline std::vector<cplx> ifft(std::span<const cplx> x) {
  Fft f(x.size());
  std::vector<cplx> out(x.size());
  f.inverse(x, out);
  return out;
}

/// Signed frequency of DFT bin k for an n-point transform at rate fs.
inline double bin_frequency(std::size_t k, std::size_t n, double fs) {
  const double kk = (k <= (n - 1) / 2) ? static_cast<double>(k)
                                        : static_cast<double>(k) - static_cast<double>(n);
  // The Nyquist bin of an even-length transform is reported as -fs/2.
  return kk * fs / static_cast<double>(n);
}

}  // namespace kkm
