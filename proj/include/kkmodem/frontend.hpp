#pragma once

// Direct-detection front end: optical bandpass, square-law photodiode with a
// Gaussian electrical response, and a uniform mid-rise ADC.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "kkmodem/channel.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

struct FrontendConfig {
  double obpf_bandwidth_hz = 5e9;  // full width; 0 disables the filter
  int obpf_order = 8;              // super-Gaussian order of the flat-top passband
  double pd_bandwidth_hz = 6.5e9;
  int pd_filter_order = 4;
  double adc_rate_hz = 4e9;
  double adc_bandwidth_hz = 1e9;  // 0 gives an ideal anti-alias response
  int adc_filter_order = 4;
  int adc_bits = 12;
  std::optional<double> adc_full_scale;  // unset: 3x RMS of the photocurrent
  double auto_scale_rms_multiple = 3.0;
  bool quantization_enabled = true;
  double electrical_noise_std = 0.0;  // additive Gaussian noise on the photocurrent

  void validate() const {
    require(adc_bits >= 4 && adc_bits <= 16, "FrontendConfig: adc_bits must be in [4, 16]");
    require(pd_bandwidth_hz > 0.0 && adc_rate_hz > 0.0, "FrontendConfig: rates must be positive");
    require(obpf_bandwidth_hz >= 0.0 && adc_bandwidth_hz >= 0.0, "FrontendConfig: bandwidths must be >= 0");
    require(pd_filter_order >= 1 && adc_filter_order >= 1 && obpf_order >= 1, "FrontendConfig: filter orders must be >= 1");
    require(!adc_full_scale || *adc_full_scale > 0.0, "FrontendConfig: full scale must be positive");
    require(electrical_noise_std >= 0.0, "FrontendConfig: noise std must be >= 0");
  }
};

/// Photocurrent I = |E|^2 (unit responsivity) after the optical bandpass,
/// low-pass filtered by the photodiode response.
inline RealSignal photodetect(const ComplexSignal& signal, const FrontendConfig& cfg) {
  cfg.validate();
  require(signal.sample_rate_hz >= 2.0 * cfg.pd_bandwidth_hz,
          "photodetect: sample rate must be at least twice the photodiode bandwidth");
  ComplexSignal field = signal;
  if (cfg.obpf_bandwidth_hz > 0.0 && cfg.obpf_bandwidth_hz / 2.0 < signal.sample_rate_hz / 2.0) {
    const double half = cfg.obpf_bandwidth_hz / 2.0;
    const int order = cfg.obpf_order;
    apply_frequency_response(field, [half, order](double f) { return cplx{gaussian_lowpass_gain(f, half, order), 0.0}; });
  }
  RealSignal i;
  i.sample_rate_hz = signal.sample_rate_hz;
  i.samples.resize(field.samples.size());
  for (std::size_t n = 0; n < field.samples.size(); ++n) i.samples[n] = std::norm(field.samples[n]);
  const double bw = cfg.pd_bandwidth_hz;
  const int order = cfg.pd_filter_order;
  apply_frequency_response(i, [bw, order](double f) { return cplx{gaussian_lowpass_gain(f, bw, order), 0.0}; });
  return i;
}

/// Adds white Gaussian noise of the given standard deviation to a photocurrent.
inline RealSignal add_electrical_noise(const RealSignal& current, double std_dev, std::uint64_t seed) {
  RealSignal out = current;
  if (std_dev == 0.0) return out;
  auto rng = detail::make_rng(seed, 0xE1EC);
  std::normal_distribution<double> n(0.0, std_dev);
  for (auto& v : out.samples) v += n(rng);
  return out;
}

struct AdcResult {
  RealSignal signal;  // reconstruction levels at adc_rate_hz
  std::vector<std::int16_t> codes;
  double full_scale = 0.0;
  double lsb = 0.0;
  double clip_fraction = 0.0;

  /// Value of code c is (c + 0.5) * lsb.
  double level(std::int16_t c) const { return (static_cast<double>(c) + 0.5) * lsb; }
};

/// Mid-rise quantiser over [-full_scale, full_scale): code = floor(x / lsb)
/// saturated to the signed adc_bits range.
inline AdcResult quantize(const RealSignal& x, int bits, double full_scale) {
  require(bits >= 4 && bits <= 16, "quantize: bits must be in [4, 16]");
  require(full_scale > 0.0, "quantize: full scale must be positive");
  AdcResult r;
  r.full_scale = full_scale;
  r.lsb = 2.0 * full_scale / static_cast<double>(1 << bits);
  const long lo = -(1L << (bits - 1));
  const long hi = (1L << (bits - 1)) - 1;
  r.signal.sample_rate_hz = x.sample_rate_hz;
  r.signal.samples.resize(x.samples.size());
  r.codes.resize(x.samples.size());
  std::size_t clipped = 0;
  for (std::size_t n = 0; n < x.samples.size(); ++n) {
    long c = static_cast<long>(std::floor(x.samples[n] / r.lsb));
    if (c < lo || c > hi) {
      ++clipped;
      c = std::clamp(c, lo, hi);
    }
    r.codes[n] = static_cast<std::int16_t>(c);
    r.signal.samples[n] = r.level(r.codes[n]);
  }
  r.clip_fraction = x.samples.empty() ? 0.0 : static_cast<double>(clipped) / static_cast<double>(x.samples.size());
  return r;
}

/// Resamples to adc_rate_hz, applies the anti-alias response and quantises.
/// With quantization disabled, signal holds the filtered samples and codes is
/// empty.
inline AdcResult adc_quantize(const RealSignal& current, const FrontendConfig& cfg) {
  cfg.validate();
  RealSignal x = resample_to(current, cfg.adc_rate_hz);
  if (cfg.adc_bandwidth_hz > 0.0) {
    const double bw = cfg.adc_bandwidth_hz;
    const int order = cfg.adc_filter_order;
    apply_frequency_response(x, [bw, order](double f) { return cplx{gaussian_lowpass_gain(f, bw, order), 0.0}; });
  }
  const double fs = cfg.adc_full_scale.value_or([&] {
    const double rms = std::sqrt(power(current));
    return rms > 0.0 ? cfg.auto_scale_rms_multiple * rms : 1.0;
  }());
  if (!cfg.quantization_enabled) {
    AdcResult r;
    r.signal = std::move(x);
    r.full_scale = fs;
    return r;
  }
  return quantize(x, cfg.adc_bits, fs);
}

}  // namespace kkm
