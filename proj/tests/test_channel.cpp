#include <gtest/gtest.h>

#include "kkmodem/channel.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/txdsp.hpp"
#include "oracles.hpp"

using namespace kkm;

namespace {

constexpr double kLambda = 1550.116;
constexpr double kC = 299792458.0;

// White complex noise confined to |f| < half_band by a brick-wall mask.
ComplexSignal band_limited(std::size_t n, double fs, double half_band, std::uint64_t seed) {
  ComplexSignal x{oracle::random_complex(n, seed), fs};
  apply_frequency_response(x, [half_band](double f) { return std::abs(f) < half_band ? cplx{1, 0} : cplx{}; });
  return x;
}

// |x|^2-weighted mean time in seconds.
double centroid_s(const ComplexSignal& x) {
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < x.samples.size(); ++n) {
    const double p = std::norm(x.samples[n]);
    num += p * static_cast<double>(n);
    den += p;
  }
  return num / den / x.sample_rate_hz;
}

LinkConfig quiet_link(std::size_t n_spans) {
  LinkConfig l;
  l.spans.assign(n_spans, FiberSpan{});
  l.phase_noise_linewidth_hz = 0.0;
  l.ase_enabled = false;
  return l;
}

// Estimated OSNR (12.5 GHz reference) of an optical capture, given the same
// capture without noise: noise is the difference, density from its mean power.
double osnr_from_difference(const ComplexSignal& noisy, const ComplexSignal& clean) {
  double pn = 0.0;
  for (std::size_t i = 0; i < noisy.samples.size(); ++i) pn += std::norm(noisy.samples[i] - clean.samples[i]);
  pn /= static_cast<double>(noisy.samples.size());
  const double density = pn / noisy.sample_rate_hz;
  return 10.0 * std::log10(power(clean) / (density * 12.5e9));
}

}  // namespace

TEST(ApplyCd, ZeroLengthIsIdentity) {
  const auto x = band_limited(4096, 16e9, 1e9, 1);
  EXPECT_LT(oracle::max_abs_diff(apply_cd(x, 20.0, 0.0, kLambda).samples, x.samples), 1e-12);
}

TEST(ApplyCd, InversePairAndUnitary) {
  const auto x = band_limited(8192, 16e9, 1e9, 2);
  for (double l : {100.0, 2000.0, 10000.0}) {
    const auto y = apply_cd(x, 20.0, l, kLambda);
    EXPECT_NEAR(oracle::energy(y.samples) / oracle::energy(x.samples), 1.0, 1e-10);
    const auto z = apply_cd(y, -20.0, l, kLambda);
    EXPECT_LT(oracle::rel_error(z.samples, x.samples), 1e-9);
  }
}

TEST(ApplyCd, GroupDelayMatchesAnalyticSlope) {
  // Narrow Gaussian pulses at the band edges; their centroids move by
  // D lambda^2 L f / c, about +-0.81 ns at 10,000 km.
  const double fs = 4e9, sigma = 20e-9, l_km = 10000.0;
  const std::size_t n = 1 << 16;
  const double lam = kLambda * 1e-9;
  for (double f0 : {-0.505e9, 0.505e9}) {
    ComplexSignal x{std::vector<cplx>(n), fs};
    const double t0 = static_cast<double>(n / 2) / fs;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs - t0;
      x.samples[i] = std::polar(std::exp(-t * t / (2 * sigma * sigma)), 2.0 * oracle::pi * f0 * t);
    }
    const auto y = apply_cd(x, 20.0, l_km, kLambda);
    const double expected = 20.0e-6 * lam * lam * l_km * 1e3 * f0 / kC;
    EXPECT_NEAR(centroid_s(y) - centroid_s(x), expected, 0.01 * std::abs(expected)) << f0;
  }
  const double spread = 2.0 * 20.0e-6 * lam * lam * 1e7 * 0.505e9 / kC;
  EXPECT_NEAR(spread, 1.6e-9, 0.05e-9);
}

TEST(AddAse, InfiniteOsnrIsIdentity) {
  const auto x = band_limited(4096, 16e9, 1e9, 3);
  EXPECT_EQ(add_ase(x, std::numeric_limits<double>::infinity(), 1).samples, x.samples);
  EXPECT_THROW(add_ase(x, std::nan(""), 1), ParameterError);
}

TEST(AddAse, SpectralOsnrEstimateMatchesTarget) {
  // Signal confined to +-0.5 GHz; noise density taken from the empty bins.
  const double fs = 16e9;
  const std::size_t n = 1 << 18;
  const auto x = band_limited(n, fs, 0.5e9, 4);
  for (double target : {15.0, 25.0, 35.0}) {
    const auto y = add_ase(x, target, 7);
    const auto spec = fft(y.samples);
    double out = 0.0, total = 0.0;
    std::size_t n_out = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double p = std::norm(spec[k]) / (static_cast<double>(n) * static_cast<double>(n));
      total += p;
      if (std::abs(bin_frequency(k, n, fs)) > 1e9) {
        out += p;
        ++n_out;
      }
    }
    const double density = out / (static_cast<double>(n_out) * fs / static_cast<double>(n));
    const double ps = total - density * fs;
    EXPECT_NEAR(10.0 * std::log10(ps / (density * 12.5e9)), target, 0.2) << target;
  }
}

TEST(AddAse, ReferenceBandwidthScalesDensity) {
  const auto x = band_limited(1 << 16, 16e9, 0.5e9, 5);
  const auto a = add_ase(x, 20.0, 9, 12.5e9);
  const auto b = add_ase(x, 20.0, 9, 6.25e9);
  // Same seed: the noise realisations differ only by their scale, sqrt(2).
  std::vector<cplx> na(x.samples.size()), nb(x.samples.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    na[i] = a.samples[i] - x.samples[i];
    nb[i] = b.samples[i] - x.samples[i];
  }
  EXPECT_NEAR(oracle::energy(nb) / oracle::energy(na), 2.0, 1e-9);
  EXPECT_EQ(add_ase(x, 20.0, 9).samples, a.samples);
}

TEST(Ssfm, LinearLimitEqualsCdPlusLoss) {
  FiberSpan s;
  s.gamma_per_W_km = 0.0;
  const auto x = band_limited(1 << 14, 16e9, 1e9, 6);
  const auto y = ssfm_span(x, s, 1.0, kLambda);
  auto ref = apply_cd(x, s.dispersion_ps_nm_km, s.length_km, kLambda);
  scale(ref, std::pow(10.0, -s.loss_db() / 20.0));
  EXPECT_LT(oracle::rel_error(y.samples, ref.samples), 1e-9);
  EXPECT_THROW(ssfm_span(x, s, 0.0, kLambda), ParameterError);
  EXPECT_THROW(ssfm_span(x, s, -1.0, kLambda), ParameterError);
}

TEST(Ssfm, ContinuousWaveSpmPhase) {
  FiberSpan s;
  const double p = 10e-3;
  ComplexSignal x{std::vector<cplx>(4096, cplx{std::sqrt(p), 0.0}), 16e9};
  const auto y = ssfm_span(x, s, 1.0, kLambda);
  const double alpha = s.loss_db_per_km * std::log(10.0) / 10.0;
  const double l_eff = (1.0 - std::exp(-alpha * s.length_km)) / alpha;
  const double expected = s.gamma_per_W_km * p * l_eff;
  for (std::size_t i = 0; i < y.samples.size(); i += 512)
    EXPECT_NEAR(std::arg(y.samples[i] / x.samples[i]), expected, 0.01 * expected);
}

TEST(Ssfm, HalvingStepConverges) {
  TxConfig tc;
  tc.n_symbols = 2000;
  auto field = resample_to(generate_tx(tc).waveform, 16e9);
  LinkConfig l;
  normalize_power(field, l.launch_power_w());
  FiberSpan s;
  const auto a = ssfm_span(field, s, 1.0, kLambda);
  const auto b = ssfm_span(field, s, 0.5, kLambda);
  EXPECT_LT(oracle::rel_error(a.samples, b.samples), 1e-4);
}

TEST(PropagateLink, NoiselessLinearLinkIsInvertible) {
  const auto x = band_limited(1 << 14, 16e9, 0.6e9, 8);
  const auto l = quiet_link(1);
  const auto out = propagate_link(x, l, 1);
  auto back = apply_cd(out.final_signal, -20.0, 100.0, kLambda);
  scale(back, std::sqrt(power(x) / l.launch_power_w()));
  EXPECT_LT(oracle::rel_error(back.samples, x.samples), 1e-6);
}

TEST(PropagateLink, NonlinearPathWithZeroGammaIsInvertible) {
  const auto x = band_limited(1 << 14, 16e9, 0.6e9, 9);
  auto l = quiet_link(2);
  l.nonlinearity_enabled = true;
  for (auto& s : l.spans) s.gamma_per_W_km = 0.0;
  const auto out = propagate_link(x, l, 1);
  auto back = apply_cd(out.final_signal, -20.0, 200.0, kLambda);
  scale(back, std::sqrt(power(x) / l.launch_power_w()));
  EXPECT_LT(oracle::rel_error(back.samples, x.samples), 1e-6);
}

TEST(PropagateLink, OsnrFallsTenDbPerDecadeOfSpans) {
  const auto x = band_limited(1 << 15, 16e9, 0.6e9, 10);
  double osnr[2];
  const std::size_t counts[2] = {10, 100};
  for (int i = 0; i < 2; ++i) {
    auto l = quiet_link(counts[i]);
    l.monitor_every_n_spans = 0;
    const auto clean = propagate_link(x, l, 3).final_signal;
    l.ase_enabled = true;
    const auto noisy = propagate_link(x, l, 3).final_signal;
    osnr[i] = osnr_from_difference(noisy, clean);
  }
  EXPECT_NEAR(osnr[1] - osnr[0], -10.0, 0.3);
}

TEST(PropagateLink, DefaultMonitorDistances) {
  LinkConfig l;
  std::vector<double> km;
  for (auto n : l.monitor_span_counts()) km.push_back(l.length_km(n));
  EXPECT_EQ(km, (std::vector<double>{2000, 4000, 6000, 8000, 10000}));

  auto q = quiet_link(10);
  q.monitor_every_n_spans = 4;
  const auto out = propagate_link(band_limited(4096, 16e9, 0.6e9, 11), q, 1);
  std::vector<double> got;
  for (const auto& [d, s] : out.monitors) got.push_back(d);
  EXPECT_EQ(got, (std::vector<double>{400, 800, 1000}));
}

TEST(PropagateLink, RejectsEmptyLinkAndIsSeedDeterministic) {
  LinkConfig l;
  l.spans.clear();
  const auto x = band_limited(4096, 16e9, 0.6e9, 12);
  EXPECT_THROW(propagate_link(x, l, 1), ParameterError);
  LinkConfig d;
  d.spans.assign(3, FiberSpan{});
  const auto a = propagate_link(x, d, 5).final_signal;
  const auto b = propagate_link(x, d, 5).final_signal;
  const auto c = propagate_link(x, d, 6).final_signal;
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(PropagateLink, LaunchPowerSharesTotalAcrossChannels) {
  LinkConfig l;
  EXPECT_NEAR(l.launch_power_dbm(), 20.0 - 10.0 * std::log10(80.0), 1e-12);
  l.rel_launch_db = -3.0;
  EXPECT_NEAR(l.launch_power_dbm(), 20.0 - 10.0 * std::log10(80.0) - 3.0, 1e-12);
}

TEST(PhaseNoise, ZeroLinewidthIsIdentity) {
  const auto x = band_limited(4096, 16e9, 0.6e9, 13);
  EXPECT_EQ(wiener_phase_noise(x, 0.0, 1).samples, x.samples);
  EXPECT_THROW(wiener_phase_noise(x, -1.0, 1), ParameterError);
}

TEST(PhaseNoise, IncrementVarianceIsLinearInLag) {
  const double fs = 16e9, lw = 100e3;
  const std::size_t n = 1'000'000;
  ComplexSignal ones{std::vector<cplx>(n, cplx{1.0, 0.0}), fs};
  const auto y = wiener_phase_noise(ones, lw, 21);
  std::vector<double> theta(n);
  theta[0] = std::arg(y.samples[0]);
  for (std::size_t i = 1; i < n; ++i) theta[i] = theta[i - 1] + std::arg(y.samples[i] * std::conj(y.samples[i - 1]));
  for (std::size_t k : {1u, 10u, 100u}) {
    double s = 0.0, s2 = 0.0;
    const std::size_t m = n - k;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = theta[i + k] - theta[i];
      s += d;
      s2 += d * d;
    }
    const double var = s2 / m - (s / m) * (s / m);
    const double expected = 2.0 * oracle::pi * lw * static_cast<double>(k) / fs;
    EXPECT_NEAR(var / expected, 1.0, 0.05) << k;
  }
}
