#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "kkmodem/common.hpp"

namespace kkm {

/// Uniformly sampled complex baseband waveform. Power is mean |x|^2 in watts
/// when the waveform represents an optical field.
struct ComplexSignal {
  std::vector<cplx> samples;
  double sample_rate_hz = 1.0;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// Real-valued photocurrent or ADC sample stream.
struct RealSignal {
  std::vector<double> samples;
  double sample_rate_hz = 1.0;

  std::size_t size() const { return samples.size(); }
};

/// FIR taps defined at nominal_rate_hz.
struct FirFilter {
  std::vector<cplx> taps;
  double nominal_rate_hz = 1.0;

  std::size_t size() const { return taps.size(); }
};

/// Overlap-save block plan. Each fft_size block re-uses hop samples of history
/// and contributes hop new output samples.
struct BlockPlan {
  std::size_t fft_size = 1024;
  std::size_t hop = 512;
  std::size_t buffer_len = std::size_t{1} << 22;

  static BlockPlan make(std::size_t fft_size, std::size_t buffer_len) {
    BlockPlan p{fft_size, fft_size / 2, buffer_len};
    p.validate();
    return p;
  }

  void validate() const {
    require(fft_size >= 2 && (fft_size & (fft_size - 1)) == 0,
            "BlockPlan: fft_size must be a power of two");
    require(hop * 2 == fft_size, "BlockPlan: hop must equal fft_size / 2");
    require(buffer_len > 0 && buffer_len % hop == 0,
            "BlockPlan: buffer_len must be a positive multiple of hop");
  }

  std::size_t blocks_per_buffer() const { return buffer_len / hop; }
};

template <typename T>
double mean_power(std::span<const T> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

inline double power(const ComplexSignal& s) { return mean_power<cplx>(s.samples); }
inline double power(const RealSignal& s) { return mean_power<double>(s.samples); }

inline double energy(std::span<const cplx> x) {
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc;
}

inline bool all_finite(std::span<const cplx> x) {
  for (const auto& v : x)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void validate(const ComplexSignal& s) {
  require(s.sample_rate_hz > 0.0, "ComplexSignal: sample rate must be positive");
  require(all_finite(s.samples), "ComplexSignal: non-finite sample");
}

inline void validate(const RealSignal& s) {
  require(s.sample_rate_hz > 0.0, "RealSignal: sample rate must be positive");
  require(all_finite(s.samples), "RealSignal: non-finite sample");
}

inline void validate(const FirFilter& f) {
  require(!f.taps.empty(), "FirFilter: needs at least one tap");
  require(f.nominal_rate_hz > 0.0, "FirFilter: nominal rate must be positive");
  require(all_finite(f.taps), "FirFilter: non-finite tap");
}

inline void scale(ComplexSignal& s, double gain) {
  for (auto& v : s.samples) v *= gain;
}

/// Scales s so that its mean power equals target_w.
inline void normalize_power(ComplexSignal& s, double target_w) {
  const double p = power(s);
  require(p > 0.0, "normalize_power: signal has zero power");
  scale(s, std::sqrt(target_w / p));
}

}  // namespace kkm
