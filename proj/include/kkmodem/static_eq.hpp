#pragma once

// Static chromatic-dispersion equalizer and 4 -> 2 samples-per-symbol
// resampling in one frequency-domain pass.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kkmodem/channel.hpp"
#include "kkmodem/fft.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

struct StaticTapsReport {
  double accumulated_dispersion_ps_nm = 0.0;
  double tap_span_s = 0.0;
  double group_delay_spread_s = 0.0;
  double coverage_ratio = 0.0;  // tap span over the in-band group-delay spread
  std::optional<std::string> warning;
};

/// Inverse-CD taps for accumulated_dispersion_ps_nm, designed by sampling
/// exp(+j pi D lambda^2 f^2 / c) on a 4096-point grid at tap_rate_hz and
/// keeping the central n_taps with a Hann window. band_hz is the full signal
/// bandwidth used for the coverage check. A nonempty extra_gain(f) multiplies
/// the sampled response, e.g. to undo a known front-end roll-off.
inline FirFilter inverse_cd_taps(double accumulated_dispersion_ps_nm, double lambda_nm, std::size_t n_taps,
                                 double tap_rate_hz, double band_hz, StaticTapsReport* report = nullptr,
                                 const std::function<double(double)>& extra_gain = {}) {
  require(n_taps % 2 == 1, "compute_static_taps: n_taps must be odd");
  require(tap_rate_hz > 0.0 && band_hz > 0.0, "compute_static_taps: rates must be positive");
  std::size_t grid = 4096;
  while (grid < 4 * n_taps) grid *= 2;
  const double lam = lambda_nm * 1e-9;
  const double k = constants::pi * accumulated_dispersion_ps_nm * 1e-3 * lam * lam / constants::speed_of_light;
  std::vector<cplx> h(grid);
  for (std::size_t b = 0; b < grid; ++b) {
    const double f = bin_frequency(b, grid, tap_rate_hz);
    h[b] = std::polar(extra_gain ? extra_gain(f) : 1.0, k * f * f);
  }
  const auto impulse = ifft(h);
  FirFilter out;
  out.nominal_rate_hz = tap_rate_hz;
  out.taps.resize(n_taps);
  const auto half = static_cast<std::ptrdiff_t>(n_taps / 2);
  for (std::size_t i = 0; i < n_taps; ++i) {
    std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) - half;
    if (j < 0) j += static_cast<std::ptrdiff_t>(grid);
    const double w = 0.5 * (1.0 - std::cos(constants::two_pi * static_cast<double>(i + 1) / static_cast<double>(n_taps + 1)));
    out.taps[i] = impulse[static_cast<std::size_t>(j)] * w;
  }
  if (report) {
    report->accumulated_dispersion_ps_nm = accumulated_dispersion_ps_nm;
    report->tap_span_s = static_cast<double>(n_taps) / tap_rate_hz;
    report->group_delay_spread_s =
        std::abs(accumulated_dispersion_ps_nm) * 1e-3 * lam * lam * band_hz / constants::speed_of_light;
    report->coverage_ratio = report->group_delay_spread_s > 0.0
                                 ? report->tap_span_s / report->group_delay_spread_s
                                 : std::numeric_limits<double>::infinity();
    if (report->coverage_ratio < 1.0)
      report->warning = "static equalizer span covers only " + std::to_string(report->coverage_ratio) +
                        " of the dispersive delay spread";
  }
  return out;
}

/// Static taps for the full link at sps samples per symbol.
inline FirFilter compute_static_taps(const LinkConfig& link, double symbol_rate_hz, double rolloff,
                                     std::size_t n_taps = 203, int sps = 2, StaticTapsReport* report = nullptr) {
  return inverse_cd_taps(link.accumulated_dispersion_ps_nm(link.spans.size()), link.center_wavelength_nm, n_taps,
                         symbol_rate_hz * sps, symbol_rate_hz * (1.0 + rolloff), report);
}

/// Least-squares taps h minimising sum_k |sum_i h_i x[sps k + c - i] - ref_k|^2
/// over the given symbols, where c = n_taps / 2. x is at sps samples per
/// symbol, aligned so that x[sps k] is the sample of symbol k. Symbols whose
/// window leaves x are skipped.
inline FirFilter refine_static_taps_ls(std::span<const cplx> x, std::span<const cplx> reference, std::size_t n_taps,
                                       int sps, double tap_rate_hz, double ridge = 1e-9) {
  require(n_taps % 2 == 1, "refine_static_taps_ls: n_taps must be odd");
  const auto c = static_cast<std::ptrdiff_t>(n_taps / 2);
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < reference.size(); ++k) {
    const auto centre = static_cast<std::ptrdiff_t>(k) * sps;
    if (centre - c >= 0 && centre + c < static_cast<std::ptrdiff_t>(x.size())) rows.push_back(k);
  }
  require(rows.size() >= 2 * n_taps, "refine_static_taps_ls: not enough training symbols");
  const auto nt = static_cast<Eigen::Index>(n_taps);
  Eigen::MatrixXcd a(static_cast<Eigen::Index>(rows.size()), nt);
  Eigen::VectorXcd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto centre = static_cast<std::ptrdiff_t>(rows[r]) * sps;
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_taps); ++i)
      a(static_cast<Eigen::Index>(r), i) = x[static_cast<std::size_t>(centre + c - i)];
    b(static_cast<Eigen::Index>(r)) = reference[rows[r]];
  }
  Eigen::MatrixXcd normal = a.adjoint() * a;
  normal.diagonal().array() += ridge * normal.diagonal().real().mean();
  const Eigen::VectorXcd h = normal.ldlt().solve(a.adjoint() * b);
  FirFilter out;
  out.nominal_rate_hz = tap_rate_hz;
  out.taps.assign(h.data(), h.data() + h.size());
  return out;
}

/// Streaming FD filter plus exact 2:1 decimation. Filter taps are defined at
/// the input rate and must have an odd length with an even centre index. Each
/// block is transformed once, multiplied, folded to half size and
/// inverse-transformed at half size. The filter's centre delay is removed so
/// output m is the filtered input at 2m.
class StaticEqualizer {
 public:
  StaticEqualizer(const FirFilter& taps_at_input_rate, std::size_t fft_size)
      : n_(fft_size), framer_(fft_size / 2), fwd_(fft_size), inv_(fft_size / 2) {
    require((fft_size & (fft_size - 1)) == 0 && fft_size >= 8, "StaticEqualizer: fft_size must be a power of two");
    require(taps_at_input_rate.taps.size() % 2 == 1, "StaticEqualizer: tap count must be odd");
    require(taps_at_input_rate.taps.size() <= fft_size / 2 + 1, "StaticEqualizer: taps longer than block overlap");
    centre_ = (taps_at_input_rate.taps.size() - 1) / 2;
    require(centre_ % 2 == 0, "StaticEqualizer: centre tap index must be even");
    response_ = fd_response_from_fir(taps_at_input_rate.taps, fft_size);
  }

  void push(std::span<const cplx> in, std::vector<cplx>& out) {
    consumed_ += in.size();
    feed(in, out);
  }

  void flush(std::vector<cplx>& out) {
    const std::size_t hop = framer_.hop();
    const std::size_t pad = hop - framer_.pending() + centre_ + hop;
    std::vector<cplx> zeros(pad, cplx{});
    feed(zeros, out);
  }

  std::size_t fft_size() const { return n_; }

 private:
  void feed(std::span<const cplx> in, std::vector<cplx>& out) {
    const std::uint64_t target = consumed_ / 2;
    framer_.push(in, [&](std::span<const cplx> block) {
      auto buf = fwd_.data();
      std::copy(block.begin(), block.end(), buf.begin());
      fwd_.forward();
      auto half = inv_.data();
      const std::size_t h = n_ / 2;
      for (std::size_t k = 0; k < h; ++k) half[k] = 0.5 * (buf[k] * response_[k] + buf[k + h] * response_[k + h]);
      inv_.inverse();
      for (std::size_t m = h / 2; m < h; ++m) {
        if (skipped_ < centre_ / 2) {
          ++skipped_;
          continue;
        }
        if (emitted_ < target) {
          out.push_back(half[m]);
          ++emitted_;
        }
      }
    });
  }

  std::size_t n_;
  std::size_t centre_ = 0;
  std::vector<cplx> response_;
  BlockFramer<cplx> framer_;
  Fft fwd_;
  Fft inv_;
  std::uint64_t consumed_ = 0;
  std::uint64_t emitted_ = 0;
  std::size_t skipped_ = 0;
};

/// Smallest power-of-two FFT whose overlap holds taps.
inline std::size_t static_eq_fft_size(std::size_t n_taps, std::size_t minimum = 1024) {
  std::size_t n = minimum;
  while (n / 2 + 1 < n_taps) n *= 2;
  return n;
}

/// Whole-signal static equalization from 4 to 2 samples per symbol. taps may
/// be given at the output rate (zero-stuffed by 2) or at the input rate.
inline ComplexSignal static_equalize_and_resample(const ComplexSignal& x, const FirFilter& taps,
                                                  std::size_t fft_size = 0) {
  FirFilter t = taps;
  if (std::abs(taps.nominal_rate_hz - x.sample_rate_hz / 2.0) < 1e-6 * x.sample_rate_hz) t = zero_stuff(taps, 2);
  require(std::abs(t.nominal_rate_hz - x.sample_rate_hz) < 1e-6 * x.sample_rate_hz,
          "static_equalize_and_resample: taps must be defined at the input or output rate");
  if (fft_size == 0) fft_size = static_eq_fft_size(t.taps.size());
  StaticEqualizer eq(t, fft_size);
  ComplexSignal out{{}, x.sample_rate_hz / 2.0};
  out.samples.reserve(x.samples.size() / 2);
  eq.push(x.samples, out.samples);
  eq.flush(out.samples);
  return out;
}

}  // namespace kkm
