#pragma once

// Single-channel model of a multi-span amplified fiber link.
//
// Field samples are in sqrt(W). One polarisation is simulated; ASE is added
// with the co-polarised spectral density 0.5 * NF * h * nu * G per amplifier,
// and every OSNR in this module refers to that polarisation.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "kkmodem/fft.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

struct FiberSpan {
  double length_km = 100.0;
  double loss_db_per_km = 0.154;
  double dispersion_ps_nm_km = 20.0;
  double gamma_per_W_km = 0.8;
  double aeff_um2 = 112.0;  // informational

  /// Power attenuation coefficient in 1/km.
  double alpha_per_km() const { return loss_db_per_km * std::log(10.0) / 10.0; }
  double loss_db() const { return loss_db_per_km * length_km; }

  void validate() const {
    require(length_km >= 0.0, "FiberSpan: length must be >= 0");
    require(loss_db_per_km >= 0.0, "FiberSpan: loss must be >= 0");
    require(gamma_per_W_km >= 0.0, "FiberSpan: gamma must be >= 0");
  }
};

/// Kerr coefficient 2 pi n2 / (lambda Aeff) in 1/(W km).
inline double gamma_from_aeff(double aeff_um2, double lambda_nm, double n2_m2_per_W = 2.6e-20) {
  return constants::two_pi * n2_m2_per_W / (lambda_nm * 1e-9 * aeff_um2 * 1e-12) * 1e3;
}

struct LinkConfig {
  std::vector<FiberSpan> spans = std::vector<FiberSpan>(100);
  double total_launch_dbm = 20.0;
  double rel_launch_db = 0.0;
  // The total launch power is shared by this many channels; the simulated
  // test channel sits at the per-channel share plus rel_launch_db.
  int reference_channels = 80;
  double edfa_noise_figure_db = 5.0;
  double center_wavelength_nm = 1550.116;
  int monitor_every_n_spans = 20;
  bool nonlinearity_enabled = false;
  double ssfm_step_km = 1.0;
  double phase_noise_linewidth_hz = 100e3;
  bool ase_enabled = true;

  double launch_power_dbm() const {
    return total_launch_dbm - lin_to_db(static_cast<double>(reference_channels)) + rel_launch_db;
  }
  double launch_power_w() const { return dbm_to_watt(launch_power_dbm()); }

  double length_km(std::size_t n_spans) const {
    double l = 0.0;
    for (std::size_t i = 0; i < n_spans && i < spans.size(); ++i) l += spans[i].length_km;
    return l;
  }
  double total_length_km() const { return length_km(spans.size()); }

  /// Sum of D * L over the first n_spans spans (ps/nm).
  double accumulated_dispersion_ps_nm(std::size_t n_spans) const {
    double d = 0.0;
    for (std::size_t i = 0; i < n_spans && i < spans.size(); ++i) d += spans[i].dispersion_ps_nm_km * spans[i].length_km;
    return d;
  }

  /// Span counts after which a monitor copy is taken (always includes the end).
  std::vector<std::size_t> monitor_span_counts() const {
    std::vector<std::size_t> out;
    if (monitor_every_n_spans > 0)
      for (std::size_t n = static_cast<std::size_t>(monitor_every_n_spans); n <= spans.size();
           n += static_cast<std::size_t>(monitor_every_n_spans))
        out.push_back(n);
    if (out.empty() || out.back() != spans.size()) out.push_back(spans.size());
    return out;
  }

  void validate() const {
    require(!spans.empty(), "LinkConfig: span list is empty");
    for (const auto& s : spans) s.validate();
    require(std::isfinite(total_launch_dbm) && std::isfinite(rel_launch_db), "LinkConfig: launch power must be finite");
    require(reference_channels >= 1, "LinkConfig: reference_channels must be >= 1");
    require(ssfm_step_km > 0.0, "LinkConfig: ssfm step must be positive");
    require(phase_noise_linewidth_hz >= 0.0, "LinkConfig: linewidth must be >= 0");
  }
};

namespace detail {

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x6b6bu};
  return std::mt19937_64(seq);
}

/// exp(-j pi D lambda^2 L f^2 / c) over length_m with D in ps/nm/km.
inline double cd_phase_coefficient(double dispersion_ps_nm_km, double length_m, double lambda_nm) {
  const double d = dispersion_ps_nm_km * 1e-6;  // s/m^2
  const double lam = lambda_nm * 1e-9;
  return constants::pi * d * lam * lam * length_m / constants::speed_of_light;
}

inline void add_complex_gaussian(std::span<cplx> x, double variance, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  for (auto& v : x) {
    const double re = n(rng);
    const double im = n(rng);
    v += cplx{re, im};
  }
}

inline double photon_energy(double lambda_nm) {
  return constants::planck * constants::speed_of_light / (lambda_nm * 1e-9);
}

}  // namespace detail

/// All-pass chromatic dispersion H(f) = exp(-j pi D lambda^2 L f^2 / c).
/// Negating D gives the exact inverse.
inline ComplexSignal apply_cd(const ComplexSignal& signal, double dispersion_ps_nm_km, double length_km,
                              double lambda_nm) {
  require(!signal.samples.empty(), "apply_cd: empty signal");
  ComplexSignal out = signal;
  const double k = detail::cd_phase_coefficient(dispersion_ps_nm_km, length_km * 1e3, lambda_nm);
  if (k == 0.0) return out;
  apply_frequency_response(out, [k](double f) { return std::polar(1.0, -k * f * f); });
  return out;
}

/// Group delay D lambda^2 L f / c (seconds) at offset frequency f.
inline double cd_group_delay_s(double dispersion_ps_nm_km, double length_km, double lambda_nm, double f_hz) {
  const double lam = lambda_nm * 1e-9;
  return dispersion_ps_nm_km * 1e-6 * lam * lam * length_km * 1e3 * f_hz / constants::speed_of_light;
}

/// Loads circular white Gaussian noise so that power(signal) over the noise
/// power inside ref_bandwidth_hz equals osnr_db. +inf leaves the signal as is.
inline ComplexSignal add_ase(const ComplexSignal& signal, double osnr_db, std::uint64_t seed,
                             double ref_bandwidth_hz = 12.5e9) {
  ComplexSignal out = signal;
  if (std::isinf(osnr_db) && osnr_db > 0) return out;
  require(std::isfinite(osnr_db), "add_ase: osnr must be finite or +inf");
  const double density = power(signal) / (db_to_lin(osnr_db) * ref_bandwidth_hz);
  auto rng = detail::make_rng(seed, 0xA5E);
  detail::add_complex_gaussian(out.samples, density * signal.sample_rate_hz, rng);
  return out;
}

/// Symmetric split-step propagation over one span: half linear step, Kerr
/// phase over the step, half linear step. Loss is part of the linear step and
/// the Kerr phase uses the loss-weighted step length, so CW light acquires
/// exactly gamma * P * L_eff.
inline ComplexSignal ssfm_span(const ComplexSignal& signal, const FiberSpan& span, double step_km, double lambda_nm) {
  require(step_km > 0.0, "ssfm_span: step must be positive");
  span.validate();
  const std::size_t n = signal.samples.size();
  require(n > 0, "ssfm_span: empty signal");
  ComplexSignal out{std::vector<cplx>(n), signal.sample_rate_hz};
  if (span.length_km == 0.0) {
    out.samples = signal.samples;
    return out;
  }
  const auto steps = static_cast<std::size_t>(std::ceil(span.length_km / step_km - 1e-9));
  const double h_km = span.length_km / static_cast<double>(steps);
  const double alpha = span.alpha_per_km();
  const double gamma = span.gamma_per_W_km;
  const double dz_eff = alpha > 0.0 ? (2.0 / alpha) * std::sinh(alpha * h_km / 2.0) : h_km;

  const double k_half = detail::cd_phase_coefficient(span.dispersion_ps_nm_km, h_km * 1e3 / 2.0, lambda_nm);
  const double a_half = std::exp(-alpha * h_km / 4.0);
  std::vector<cplx> half(n), full(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = bin_frequency(k, n, signal.sample_rate_hz);
    half[k] = std::polar(a_half, -k_half * f * f);
    full[k] = half[k] * half[k];
  }

  Fft fft_plan(n);
  auto buf = fft_plan.data();
  std::copy(signal.samples.begin(), signal.samples.end(), buf.begin());
  fft_plan.forward();
  for (std::size_t k = 0; k < n; ++k) buf[k] *= half[k];
  for (std::size_t s = 0; s < steps; ++s) {
    fft_plan.inverse();
    if (gamma > 0.0) {
      const double g = gamma * dz_eff;
      for (auto& v : buf) v *= std::polar(1.0, g * std::norm(v));
    }
    fft_plan.forward();
    const auto& op = (s + 1 == steps) ? half : full;
    for (std::size_t k = 0; k < n; ++k) buf[k] *= op[k];
  }
  fft_plan.inverse();
  std::copy(buf.begin(), buf.end(), out.samples.begin());
  return out;
}

/// Multiplies by exp(j theta[n]) with theta a Wiener process whose increments
/// have variance 2 pi linewidth / fs.
inline ComplexSignal wiener_phase_noise(const ComplexSignal& signal, double linewidth_hz, std::uint64_t seed) {
  require(linewidth_hz >= 0.0, "wiener_phase_noise: linewidth must be >= 0");
  ComplexSignal out = signal;
  if (linewidth_hz == 0.0) return out;
  auto rng = detail::make_rng(seed, 0x9A5E);
  std::normal_distribution<double> inc(0.0, std::sqrt(constants::two_pi * linewidth_hz / signal.sample_rate_hz));
  double theta = 0.0;
  for (auto& v : out.samples) {
    v *= std::polar(1.0, theta);
    theta += inc(rng);
  }
  return out;
}

struct LinkOutput {
  ComplexSignal final_signal;
  std::map<double, ComplexSignal> monitors;  // keyed by distance in km
};

/// Per-amplifier ASE variance per complex sample at sample rate fs.
inline double amplifier_noise_variance(const FiberSpan& span, double noise_figure_db, double lambda_nm, double fs) {
  const double gain = db_to_lin(span.loss_db());
  return 0.5 * db_to_lin(noise_figure_db) * detail::photon_energy(lambda_nm) * gain * fs;
}

/// Launches signal at the test-channel power and propagates span by span.
/// Each span is followed by an amplifier whose gain equals the span loss and
/// which adds ASE when enabled. Copies are taken after every
/// monitor_every_n_spans spans and at the end of the link.
inline LinkOutput propagate_link(const ComplexSignal& signal, const LinkConfig& link, std::uint64_t seed) {
  link.validate();
  validate(signal);
  ComplexSignal x = signal;
  normalize_power(x, link.launch_power_w());
  x = wiener_phase_noise(x, link.phase_noise_linewidth_hz, seed);

  const auto monitor_counts = link.monitor_span_counts();
  auto want_monitor = [&](std::size_t count) {
    return std::find(monitor_counts.begin(), monitor_counts.end(), count) != monitor_counts.end();
  };

  LinkOutput res;
  const std::size_t n = x.samples.size();
  const double fs = x.sample_rate_hz;
  const double lambda = link.center_wavelength_nm;
  double distance = 0.0;

  if (link.nonlinearity_enabled) {
    for (std::size_t i = 0; i < link.spans.size(); ++i) {
      const auto& span = link.spans[i];
      x = ssfm_span(x, span, link.ssfm_step_km, lambda);
      scale(x, std::sqrt(db_to_lin(span.loss_db())));
      if (link.ase_enabled) {
        auto rng = detail::make_rng(seed, 1000 + i);
        detail::add_complex_gaussian(x.samples, amplifier_noise_variance(span, link.edfa_noise_figure_db, lambda, fs),
                                     rng);
      }
      distance += span.length_km;
      if (want_monitor(i + 1)) res.monitors.emplace(distance, x);
    }
    res.final_signal = x;
    return res;
  }

  // Linear link: stay in the frequency domain. White noise is added bin-wise
  // with the variance of the DFT of time-domain white noise.
  Fft f(n);
  auto buf = f.data();
  std::copy(x.samples.begin(), x.samples.end(), buf.begin());
  f.forward();
  for (std::size_t i = 0; i < link.spans.size(); ++i) {
    const auto& span = link.spans[i];
    const double k = detail::cd_phase_coefficient(span.dispersion_ps_nm_km, span.length_km * 1e3, lambda);
    // Loss and the amplifier gain cancel exactly.
    for (std::size_t b = 0; b < n; ++b) {
      const double fr = bin_frequency(b, n, fs);
      buf[b] *= std::polar(1.0, -k * fr * fr);
    }
    if (link.ase_enabled) {
      auto rng = detail::make_rng(seed, 1000 + i);
      detail::add_complex_gaussian(
          buf, amplifier_noise_variance(span, link.edfa_noise_figure_db, lambda, fs) * static_cast<double>(n), rng);
    }
    distance += span.length_km;
    if (want_monitor(i + 1)) {
      ComplexSignal m{std::vector<cplx>(n), fs};
      Fft g(n);
      g.inverse(buf, m.samples);
      res.monitors.emplace(distance, std::move(m));
    }
  }
  res.final_signal = res.monitors.rbegin()->second;
  return res;
}

}  // namespace kkm
