#pragma once

// Filter design, overlap-save block convolution, frequency shifting and
// FFT-domain rational resampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "kkmodem/common.hpp"
#include "kkmodem/fft.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

// ---------------------------------------------------------------------------
// Root-raised-cosine design

namespace detail {

inline double rrc_value(double t, double beta) {
  using constants::pi;
  if (std::abs(t) < 1e-12) return 1.0 - beta + 4.0 * beta / pi;
  const double t_sing = 1.0 / (4.0 * beta);
  if (std::abs(std::abs(t) - t_sing) < 1e-9) {
    return beta / std::sqrt(2.0) *
           ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) +
            (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
  }
  const double num = std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta));
  const double den = pi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
  return num / den;
}

}  // namespace detail

/// Symmetric unit-energy root-raised-cosine taps spanning span_symbols symbols
/// (span_symbols * sps + 1 taps). symbol_rate_hz only sets the nominal rate.
inline FirFilter design_rrc(double rolloff, int sps, int span_symbols, double symbol_rate_hz = 1.0) {
  require(rolloff > 0.0 && rolloff <= 1.0, "design_rrc: rolloff must be in (0, 1]");
  require(sps >= 2, "design_rrc: sps must be at least 2");
  require(span_symbols > 0 && span_symbols % 2 == 0, "design_rrc: span_symbols must be a positive even integer");
  require(symbol_rate_hz > 0.0, "design_rrc: symbol rate must be positive");

  const std::size_t n = static_cast<std::size_t>(span_symbols) * static_cast<std::size_t>(sps) + 1;
  const double centre = static_cast<double>(n - 1) / 2.0;
  FirFilter f;
  f.nominal_rate_hz = symbol_rate_hz * sps;
  f.taps.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) - centre) / sps;
    f.taps[i] = detail::rrc_value(t, rolloff);
  }
  // Mirror to make the symmetry exact at the bit level.
  for (std::size_t i = 0; i < n / 2; ++i) f.taps[n - 1 - i] = f.taps[i];
  const double e = std::sqrt(energy(f.taps));
  for (auto& t : f.taps) t /= e;
  return f;
}

/// Single-tap identity filter.
inline FirFilter identity_filter(double rate_hz) { return FirFilter{{cplx{1.0, 0.0}}, rate_hz}; }

/// Inserts factor-1 zeros between taps (same response, periodic in the lower rate).
inline FirFilter zero_stuff(const FirFilter& f, std::size_t factor) {
  require(factor >= 1, "zero_stuff: factor must be >= 1");
  FirFilter out;
  out.nominal_rate_hz = f.nominal_rate_hz * static_cast<double>(factor);
  out.taps.assign((f.taps.size() - 1) * factor + 1, cplx{});
  for (std::size_t i = 0; i < f.taps.size(); ++i) out.taps[i * factor] = f.taps[i];
  return out;
}

/// Full linear convolution of two tap sets.
inline FirFilter cascade(const FirFilter& a, const FirFilter& b) {
  require(a.nominal_rate_hz == b.nominal_rate_hz, "cascade: filters defined at different rates");
  FirFilter out;
  out.nominal_rate_hz = a.nominal_rate_hz;
  out.taps.assign(a.taps.size() + b.taps.size() - 1, cplx{});
  for (std::size_t i = 0; i < a.taps.size(); ++i)
    for (std::size_t j = 0; j < b.taps.size(); ++j) out.taps[i + j] += a.taps[i] * b.taps[j];
  return out;
}

/// DFT of taps zero-padded to fft_size (causal placement, delay = index).
inline std::vector<cplx> fd_response_from_fir(std::span<const cplx> taps, std::size_t fft_size) {
  require(!taps.empty() && taps.size() <= fft_size, "fd_response_from_fir: taps longer than fft_size");
  std::vector<cplx> padded(fft_size, cplx{});
  std::copy(taps.begin(), taps.end(), padded.begin());
  return fft(padded);
}

/// Frequency response of taps evaluated at f (Hz), with the filter's group
/// delay centre removed so symmetric filters read as zero phase.
inline cplx fir_response_at(const FirFilter& f, double freq_hz) {
  const double centre = static_cast<double>(f.taps.size() - 1) / 2.0;
  cplx acc{};
  for (std::size_t i = 0; i < f.taps.size(); ++i) {
    const double ang = -constants::two_pi * freq_hz * (static_cast<double>(i) - centre) / f.nominal_rate_hz;
    acc += f.taps[i] * std::polar(1.0, ang);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Overlap-save

struct OverlapSaveResult {
  ComplexSignal signal;
  std::vector<cplx> tail;
};

/// Block convolution with a frequency-domain response of plan.fft_size bins.
/// The second half of every block is retained. tail carries the last plan.hop
/// input samples between calls (zeros at stream start), so splitting a stream
/// across calls reproduces the single-call output.
inline OverlapSaveResult overlap_save_filter(const ComplexSignal& signal, std::span<const cplx> fd_response,
                                             const BlockPlan& plan, std::span<const cplx> tail) {
  require(fd_response.size() == plan.fft_size, "overlap_save_filter: response length != fft_size");
  require(tail.size() == plan.hop, "overlap_save_filter: tail length != hop");
  require(plan.hop * 2 == plan.fft_size, "overlap_save_filter: hop must be fft_size / 2");

  const std::size_t n = signal.samples.size();
  const std::size_t hop = plan.hop;
  std::vector<cplx> joined;
  joined.reserve(hop + n);
  joined.insert(joined.end(), tail.begin(), tail.end());
  joined.insert(joined.end(), signal.samples.begin(), signal.samples.end());

  OverlapSaveResult res;
  res.signal.sample_rate_hz = signal.sample_rate_hz;
  res.signal.samples.resize(n);
  Fft f(plan.fft_size);
  auto buf = f.data();
  for (std::size_t start = 0; start < n; start += hop) {
    const std::size_t avail = std::min(plan.fft_size, joined.size() - start);
    std::copy(joined.begin() + static_cast<std::ptrdiff_t>(start),
              joined.begin() + static_cast<std::ptrdiff_t>(start + avail), buf.begin());
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(avail), buf.end(), cplx{});
    f.forward();
    for (std::size_t k = 0; k < plan.fft_size; ++k) buf[k] *= fd_response[k];
    f.inverse();
    const std::size_t count = std::min(hop, n - start);
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(hop),
              buf.begin() + static_cast<std::ptrdiff_t>(hop + count),
              res.signal.samples.begin() + static_cast<std::ptrdiff_t>(start));
  }
  res.tail.assign(joined.end() - static_cast<std::ptrdiff_t>(hop), joined.end());
  return res;
}

/// Collects a stream into 2*hop blocks that overlap by hop samples. Block
/// boundaries sit at fixed stream positions, independent of how the input is
/// split across push() calls. History starts as zeros.
template <typename T>
class BlockFramer {
 public:
  explicit BlockFramer(std::size_t hop) : hop_(hop), block_(2 * hop, T{}), fill_(hop) {
    require(hop > 0, "BlockFramer: hop must be positive");
  }

  /// Calls on_block(std::span<const T>) for every completed block.
  template <typename Fn>
  void push(std::span<const T> in, Fn&& on_block) {
    std::size_t pos = 0;
    while (pos < in.size()) {
      const std::size_t take = std::min(in.size() - pos, 2 * hop_ - fill_);
      std::copy(in.begin() + static_cast<std::ptrdiff_t>(pos),
                in.begin() + static_cast<std::ptrdiff_t>(pos + take),
                block_.begin() + static_cast<std::ptrdiff_t>(fill_));
      fill_ += take;
      pos += take;
      if (fill_ == 2 * hop_) {
        on_block(std::span<const T>(block_));
        std::copy(block_.begin() + static_cast<std::ptrdiff_t>(hop_), block_.end(), block_.begin());
        fill_ = hop_;
      }
    }
  }

  std::size_t hop() const { return hop_; }
  std::size_t pending() const { return fill_ - hop_; }

 private:
  std::size_t hop_;
  std::vector<T> block_;
  std::size_t fill_;
};

/// Streaming overlap-save with a fixed frequency-domain response.
class OverlapSaveStream {
 public:
  explicit OverlapSaveStream(std::vector<cplx> fd_response)
      : response_(std::move(fd_response)), framer_(response_.size() / 2), fft_(response_.size()) {
    require(response_.size() >= 2 && response_.size() % 2 == 0, "OverlapSaveStream: response size must be even");
  }

  void push(std::span<const cplx> in, std::vector<cplx>& out) {
    const std::size_t hop = framer_.hop();
    framer_.push(in, [&](std::span<const cplx> block) {
      auto buf = fft_.data();
      std::copy(block.begin(), block.end(), buf.begin());
      fft_.forward();
      for (std::size_t k = 0; k < buf.size(); ++k) buf[k] *= response_[k];
      fft_.inverse();
      out.insert(out.end(), buf.begin() + static_cast<std::ptrdiff_t>(hop), buf.end());
    });
  }

  std::size_t pending() const { return framer_.pending(); }

 private:
  std::vector<cplx> response_;
  BlockFramer<cplx> framer_;
  Fft fft_;
};

// ---------------------------------------------------------------------------
// Frequency shift

namespace detail {
inline double cycle_fraction(double cycles_per_sample, std::uint64_t n) {
  const double x = cycles_per_sample * static_cast<double>(n);
  return x - std::floor(x);
}
}  // namespace detail

/// Multiplies sample n by exp(+j 2 pi delta_f (n + first_index) / fs).
inline ComplexSignal frequency_shift(const ComplexSignal& signal, double delta_f_hz, std::uint64_t first_index = 0) {
  require(std::abs(delta_f_hz) < signal.sample_rate_hz / 2.0, "frequency_shift: |delta_f| must be below Nyquist");
  ComplexSignal out{signal.samples, signal.sample_rate_hz};
  if (delta_f_hz == 0.0) return out;
  const double r = delta_f_hz / signal.sample_rate_hz;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double ph = constants::two_pi * detail::cycle_fraction(r, first_index + i);
    out.samples[i] *= std::polar(1.0, ph);
  }
  return out;
}

/// Phase-continuous oscillator keyed on the absolute stream index.
class Nco {
 public:
  Nco(double delta_f_hz, double sample_rate_hz) : r_(delta_f_hz / sample_rate_hz) {
    require(std::abs(r_) < 0.5, "Nco: |delta_f| must be below Nyquist");
  }

  void mix(std::span<cplx> x) {
    for (auto& v : x) {
      if (r_ != 0.0) v *= std::polar(1.0, constants::two_pi * detail::cycle_fraction(r_, index_));
      ++index_;
    }
  }

  std::uint64_t index() const { return index_; }

 private:
  double r_;
  std::uint64_t index_ = 0;
};

// ---------------------------------------------------------------------------
// Whole-signal frequency-domain helpers (circular)

/// Multiplies the spectrum of the whole signal by response(f).
template <typename Response>
void apply_frequency_response(ComplexSignal& s, Response&& response) {
  if (s.samples.empty()) return;
  Fft f(s.samples.size());
  auto buf = f.data();
  std::copy(s.samples.begin(), s.samples.end(), buf.begin());
  f.forward();
  const std::size_t n = buf.size();
  for (std::size_t k = 0; k < n; ++k) buf[k] *= response(bin_frequency(k, n, s.sample_rate_hz));
  f.inverse();
  std::copy(buf.begin(), buf.end(), s.samples.begin());
}

/// Real-valued zero-phase response applied to a real signal.
template <typename Response>
void apply_frequency_response(RealSignal& s, Response&& response) {
  ComplexSignal c{std::vector<cplx>(s.samples.begin(), s.samples.end()), s.sample_rate_hz};
  apply_frequency_response(c, std::forward<Response>(response));
  for (std::size_t i = 0; i < s.samples.size(); ++i) s.samples[i] = c.samples[i].real();
}

/// Amplitude response of an order-n Gaussian low-pass with -3 dB (power) at
/// bandwidth_hz.
inline double gaussian_lowpass_gain(double f, double bandwidth_hz, int order) {
  const double x = std::abs(f) / bandwidth_hz;
  return std::exp(-0.5 * std::log(2.0) * std::pow(x, 2.0 * order));
}

/// Half-band brick-wall with a raised-cosine edge occupying the top
/// edge_fraction of [0, cutoff].
inline double raised_cosine_edge_gain(double f, double cutoff_hz, double edge_fraction) {
  const double af = std::abs(f);
  const double f1 = cutoff_hz * (1.0 - edge_fraction);
  if (af <= f1) return 1.0;
  if (af >= cutoff_hz) return 0.0;
  return 0.5 * (1.0 + std::cos(constants::pi * (af - f1) / (cutoff_hz - f1)));
}

/// Resamples by up/down in the frequency domain with a brick-wall anti-alias
/// mask (1% raised-cosine edge) at the lower of the two Nyquist rates. The
/// signal is treated as periodic.
inline ComplexSignal resample_rational(const ComplexSignal& signal, int up, int down) {
  require(up >= 1 && down >= 1, "resample_rational: up and down must be >= 1");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  const double fs_out = signal.sample_rate_hz * up / down;
  if (up == down) return signal;

  const std::size_t n = signal.samples.size();
  if (n == 0) return ComplexSignal{{}, fs_out};
  const auto ud = static_cast<std::size_t>(down);
  const std::size_t n_in = ((n + ud - 1) / ud) * ud;
  const std::size_t n_out = n_in / ud * static_cast<std::size_t>(up);

  std::vector<cplx> x(n_in, cplx{});
  std::copy(signal.samples.begin(), signal.samples.end(), x.begin());
  const auto spec = fft(x);
  std::vector<cplx> y(n_out, cplx{});
  const double cutoff = std::min(signal.sample_rate_hz, fs_out) / 2.0;
  const double gain = static_cast<double>(n_out) / static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_in; ++k) {
    const double f = bin_frequency(k, n_in, signal.sample_rate_hz);
    const double a = raised_cosine_edge_gain(f, cutoff, 0.01);
    if (a == 0.0) continue;
    const std::ptrdiff_t signed_k = (k <= (n_in - 1) / 2) ? static_cast<std::ptrdiff_t>(k)
                                                            : static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(n_in);
    const std::size_t j = signed_k >= 0 ? static_cast<std::size_t>(signed_k)
                                        : static_cast<std::size_t>(static_cast<std::ptrdiff_t>(n_out) + signed_k);
    y[j] += spec[k] * (a * gain);
  }
  ComplexSignal out{ifft(y), fs_out};
  out.samples.resize(n * static_cast<std::size_t>(up) / ud);
  return out;
}

inline RealSignal resample_rational(const RealSignal& signal, int up, int down) {
  ComplexSignal c{std::vector<cplx>(signal.samples.begin(), signal.samples.end()), signal.sample_rate_hz};
  const auto r = resample_rational(c, up, down);
  RealSignal out;
  out.sample_rate_hz = r.sample_rate_hz;
  out.samples.resize(r.samples.size());
  for (std::size_t i = 0; i < r.samples.size(); ++i) out.samples[i] = r.samples[i].real();
  return out;
}

/// Resamples between two rates whose ratio is rational at 1 Hz resolution.
template <typename Signal>
Signal resample_to(const Signal& s, double target_rate_hz) {
  const auto a = static_cast<long long>(std::llround(target_rate_hz));
  const auto b = static_cast<long long>(std::llround(s.sample_rate_hz));
  require(a > 0 && b > 0, "resample_to: rates must be positive");
  const long long g = std::gcd(a, b);
  const long long up = a / g;
  const long long down = b / g;
  require(up <= (1 << 20) && down <= (1 << 20), "resample_to: rate ratio too complex");
  return resample_rational(s, static_cast<int>(up), static_cast<int>(down));
}

}  // namespace kkm
