#pragma once

// Minimum-phase QAM transmitter: PRBS bits -> Gray-labelled symbols ->
// RRC-shaped waveform at the DAC rate -> digitally inserted carrier tone.
//
// All waveforms are built by circular convolution, so a generated frame is
// periodic and can be tiled without seams.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "kkmodem/constellation.hpp"
#include "kkmodem/fft.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/prbs.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

struct TxConfig {
  int format = 4;  // QAM order
  double baud_hz = 1e9;
  double rolloff = 0.01;
  int rrc_span_symbols = 256;
  double dac_rate_hz = 12e9;
  double tone_freq_hz = 0.516e9;
  double cspr_db = 10.0;
  std::size_t n_symbols = std::size_t{1} << 20;
  int prbs_degree = 23;
  std::uint64_t prbs_seed = 1;

  int sps() const { return static_cast<int>(std::lround(dac_rate_hz / baud_hz)); }

  void validate() const {
    make_constellation(format);
    require(baud_hz > 0.0, "TxConfig: baud must be positive");
    require(rolloff > 0.0 && rolloff <= 1.0, "TxConfig: rolloff must be in (0, 1]");
    require(std::abs(dac_rate_hz / baud_hz - sps()) < 1e-9 && sps() >= 2,
            "TxConfig: dac rate must be an integer multiple (>= 2) of the baud rate");
    require(std::abs(tone_freq_hz) > baud_hz * (1.0 + rolloff) / 2.0,
            "TxConfig: tone must lie outside the signal band");
    require(std::abs(tone_freq_hz) < dac_rate_hz / 2.0, "TxConfig: tone beyond Nyquist");
    require(n_symbols > 0, "TxConfig: n_symbols must be positive");
  }
};

/// RRC pulse shaping at cfg.dac_rate_hz. Symbol k peaks at sample k * sps;
/// the frame wraps circularly.
inline ComplexSignal shape(std::span<const cplx> symbols, const TxConfig& cfg) {
  cfg.validate();
  const int sps = cfg.sps();
  const auto taps = design_rrc(cfg.rolloff, sps, cfg.rrc_span_symbols, cfg.baud_hz);
  const std::size_t m = symbols.size() * static_cast<std::size_t>(sps);
  ComplexSignal out{std::vector<cplx>(m, cplx{}), cfg.dac_rate_hz};
  if (m == 0) return out;

  std::vector<cplx> up(m, cplx{});
  for (std::size_t k = 0; k < symbols.size(); ++k) up[k * static_cast<std::size_t>(sps)] = symbols[k];
  std::vector<cplx> h(m, cplx{});
  const auto centre = static_cast<std::ptrdiff_t>((taps.taps.size() - 1) / 2);
  for (std::size_t i = 0; i < taps.taps.size(); ++i) {
    std::ptrdiff_t j = (static_cast<std::ptrdiff_t>(i) - centre) % static_cast<std::ptrdiff_t>(m);
    if (j < 0) j += static_cast<std::ptrdiff_t>(m);
    h[static_cast<std::size_t>(j)] += taps.taps[i];
  }
  Fft f(m);
  std::vector<cplx> hu(m), hh(m);
  f.forward(up, hu);
  f.forward(h, hh);
  for (std::size_t k = 0; k < m; ++k) hu[k] *= hh[k];
  f.inverse(hu, out.samples);
  return out;
}

/// Adds A exp(j 2 pi f_tone t) with 10 log10(A^2 / power(signal)) = cspr_db.
inline ComplexSignal add_carrier(const ComplexSignal& signal, double tone_freq_hz, double cspr_db) {
  require(std::abs(tone_freq_hz) < signal.sample_rate_hz / 2.0, "add_carrier: tone beyond Nyquist");
  const double amp = std::sqrt(db_to_lin(cspr_db) * power(signal));
  ComplexSignal out = signal;
  const double r = tone_freq_hz / signal.sample_rate_hz;
  for (std::size_t n = 0; n < out.samples.size(); ++n)
    out.samples[n] += std::polar(amp, constants::two_pi * detail::cycle_fraction(r, n));
  return out;
}

namespace detail {

struct ToneSplit {
  std::vector<cplx> spectrum;
  std::vector<bool> in_window;
  double tone_power = 0.0;
  double rest_power = 0.0;
};

inline ToneSplit split_tone(const ComplexSignal& signal, double tone_freq_hz, double window_hz) {
  require(signal.samples.size() >= (1u << 14), "measure_cspr: need at least 2^14 samples");
  const std::size_t n = signal.samples.size();
  const double bin = signal.sample_rate_hz / static_cast<double>(n);
  require(2.0 * window_hz / bin >= 2.0, "measure_cspr: tone window spans fewer than 3 FFT bins");
  ToneSplit t;
  t.spectrum = fft(signal.samples);
  t.in_window.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = bin_frequency(k, n, signal.sample_rate_hz);
    const double p = std::norm(t.spectrum[k]);
    t.in_window[k] = std::abs(f - tone_freq_hz) <= window_hz;
    (t.in_window[k] ? t.tone_power : t.rest_power) += p;
  }
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  t.tone_power /= nn;
  t.rest_power /= nn;
  return t;
}

}  // namespace detail

/// Carrier-to-signal power ratio (dB): power within +-window_hz of the tone
/// over the remaining power. +inf when nothing remains.
inline double measure_cspr(const ComplexSignal& signal, double tone_freq_hz, double window_hz = 2e6) {
  const auto t = detail::split_tone(signal, tone_freq_hz, window_hz);
  if (t.rest_power <= 0.0) return std::numeric_limits<double>::infinity();
  return lin_to_db(t.tone_power / t.rest_power);
}

/// Signal with the spectral window around the tone zeroed.
inline ComplexSignal remove_carrier(const ComplexSignal& signal, double tone_freq_hz, double window_hz = 2e6) {
  auto t = detail::split_tone(signal, tone_freq_hz, window_hz);
  for (std::size_t k = 0; k < t.spectrum.size(); ++k)
    if (t.in_window[k]) t.spectrum[k] = cplx{};
  return ComplexSignal{ifft(t.spectrum), signal.sample_rate_hz};
}

/// Fraction of samples where the tone-removed signal magnitude exceeds the
/// tone amplitude, i.e. where the sufficient minimum-phase condition fails.
inline double mp_violation_fraction(const ComplexSignal& signal, double tone_freq_hz, double window_hz = 2e6) {
  auto t = detail::split_tone(signal, tone_freq_hz, window_hz);
  const double amp = std::sqrt(t.tone_power);
  for (std::size_t k = 0; k < t.spectrum.size(); ++k)
    if (t.in_window[k]) t.spectrum[k] = cplx{};
  const auto payload = ifft(t.spectrum);
  std::size_t count = 0;
  for (const auto& v : payload)
    if (std::abs(v) > amp) ++count;
  return payload.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(payload.size());
}

struct TxFrame {
  std::vector<std::uint8_t> bits;
  std::vector<cplx> symbols;
  ComplexSignal payload;   // shaped signal without carrier
  ComplexSignal waveform;  // payload + carrier at the DAC rate
};

inline TxFrame generate_tx(const TxConfig& cfg) {
  cfg.validate();
  const auto c = make_constellation(cfg.format);
  TxFrame f;
  f.bits = prbs_generate(cfg.prbs_degree, cfg.prbs_seed, cfg.n_symbols * static_cast<std::size_t>(c.bits_per_symbol()));
  f.symbols = qam_map(f.bits, c);
  f.payload = shape(f.symbols, cfg);
  f.waveform = add_carrier(f.payload, cfg.tone_freq_hz, cfg.cspr_db);
  return f;
}

}  // namespace kkm
