#include <gtest/gtest.h>

#include "kkmodem/frontend.hpp"
#include "kkmodem/txdsp.hpp"
#include "oracles.hpp"

using namespace kkm;

namespace {

ComplexSignal band_limited(std::size_t n, double fs, double half_band, std::uint64_t seed) {
  ComplexSignal x{oracle::random_complex(n, seed), fs};
  apply_frequency_response(x, [half_band](double f) { return std::abs(f) < half_band ? cplx{1, 0} : cplx{}; });
  return x;
}

RealSignal sine(std::size_t n, double fs, double f, double amplitude) {
  RealSignal s{std::vector<double>(n), fs};
  for (std::size_t i = 0; i < n; ++i) s.samples[i] = amplitude * std::sin(2.0 * oracle::pi * f * static_cast<double>(i) / fs);
  return s;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST(Photodetect, ConstantFieldGivesConstantCurrent) {
  const double a = 0.37;
  ComplexSignal e{std::vector<cplx>(8192, std::polar(a, 1.1)), 16e9};
  const auto i = photodetect(e, FrontendConfig{});
  for (double v : i.samples) ASSERT_NEAR(v, a * a, 1e-12);
}

TEST(Photodetect, TwoToneBeat) {
  const double fs = 16e9, f1 = 0.1e9, f2 = 0.6e9, a = 1.0, b = 0.5;
  const std::size_t n = 16000;  // whole cycles of both tones
  ComplexSignal e{std::vector<cplx>(n), fs};
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    e.samples[k] = std::polar(a, 2.0 * oracle::pi * f1 * t) + std::polar(b, 2.0 * oracle::pi * f2 * t);
  }
  const auto i = photodetect(e, FrontendConfig{});
  EXPECT_NEAR(oracle::dft_at(i.samples, 0.0, fs).real(), a * a + b * b, 0.01 * (a * a + b * b));
  // A real cosine of amplitude 2ab has DFT magnitude ab at +-|f1 - f2|.
  EXPECT_NEAR(2.0 * std::abs(oracle::dft_at(i.samples, f2 - f1, fs)), 2.0 * a * b, 0.01 * 2.0 * a * b);
}

TEST(Photodetect, SquareLawIsNonNegativeWithTransparentFilters) {
  FrontendConfig cfg;
  cfg.obpf_bandwidth_hz = 0.0;
  cfg.pd_bandwidth_hz = 8e9;
  cfg.pd_filter_order = 64;
  const auto e = band_limited(1 << 14, 16e9, 1e9, 1);
  const auto i = photodetect(e, cfg);
  const double peak = max_abs(i.samples);
  for (double v : i.samples) ASSERT_GE(v, -1e-12 * peak);
}

TEST(Photodetect, PhaseInsensitive) {
  const auto e = band_limited(1 << 14, 16e9, 1e9, 2);
  const auto i0 = photodetect(e, FrontendConfig{});
  const double peak = max_abs(i0.samples);
  for (double phi : {0.3, 1.7, -2.9}) {
    ComplexSignal r = e;
    for (auto& v : r.samples) v *= std::polar(1.0, phi);
    const auto i1 = photodetect(r, FrontendConfig{});
    for (std::size_t k = 0; k < i0.samples.size(); ++k) ASSERT_NEAR(i1.samples[k], i0.samples[k], 1e-12 * peak);
  }
}

TEST(Photodetect, DcEqualsMeanIntensity) {
  const auto e = band_limited(1 << 15, 16e9, 1e9, 3);
  const auto i = photodetect(e, FrontendConfig{});
  double m = 0.0;
  for (double v : i.samples) m += v;
  m /= static_cast<double>(i.samples.size());
  EXPECT_NEAR(m / power(e), 1.0, 1e-3);
}

TEST(Photodetect, RejectsLowSampleRate) {
  ComplexSignal e{std::vector<cplx>(1024, cplx{1, 0}), 8e9};
  EXPECT_THROW(photodetect(e, FrontendConfig{}), ParameterError);
  FrontendConfig bad;
  bad.adc_bits = 3;
  EXPECT_THROW(bad.validate(), ParameterError);
}

TEST(GaussianResponse, MinusThreeDbAtBandwidth) {
  for (int order : {1, 4, 8}) EXPECT_NEAR(gaussian_lowpass_gain(6.5e9, 6.5e9, order), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(gaussian_lowpass_gain(0.0, 6.5e9, 4), 1.0);
}

TEST(Adc, ZerosQuantiseToHalfLsb) {
  FrontendConfig cfg;
  cfg.adc_full_scale = 1.0;
  const auto r = adc_quantize(RealSignal{std::vector<double>(4096, 0.0), 4e9}, cfg);
  EXPECT_DOUBLE_EQ(r.lsb, 2.0 / 4096.0);
  for (double v : r.signal.samples) {
    ASSERT_LE(std::abs(v), 1.0 / 4096.0);
    ASSERT_DOUBLE_EQ(std::abs(v), r.lsb / 2.0);
  }
  EXPECT_EQ(r.clip_fraction, 0.0);
}

TEST(Adc, FullScaleSineSqnr) {
  // Incommensurate frequency so the error decorrelates from the signal.
  const double fs = 4e9, f = 0.1234567e9, full = 1.0;
  const auto x = sine(1 << 20, fs, f, full * (1.0 - 1e-9));
  const auto q = quantize(x, 12, full);
  double ps = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < x.samples.size(); ++i) {
    ps += x.samples[i] * x.samples[i];
    const double e = q.signal.samples[i] - x.samples[i];
    pe += e * e;
  }
  EXPECT_NEAR(10.0 * std::log10(ps / pe), 6.02 * 12 + 1.76, 0.5);
  EXPECT_EQ(q.clip_fraction, 0.0);
}

TEST(Adc, ErrorBoundedByHalfLsb) {
  const auto x = sine(100000, 4e9, 0.0377e9, 0.9);
  const auto q = quantize(x, 12, 1.0);
  for (std::size_t i = 0; i < x.samples.size(); ++i) ASSERT_LE(std::abs(q.signal.samples[i] - x.samples[i]), q.lsb / 2 + 1e-15);
  for (std::size_t i = 0; i < x.samples.size(); ++i) ASSERT_DOUBLE_EQ(q.level(q.codes[i]), q.signal.samples[i]);
}

TEST(Adc, ClipDutyForDoubleAmplitudeSine) {
  const auto x = sine(1 << 20, 4e9, 0.0123457e9, 2.0);
  const auto q = quantize(x, 12, 1.0);
  EXPECT_NEAR(q.clip_fraction, oracle::sine_clip_duty(2.0, 1.0), 2e-3);
  EXPECT_NEAR(oracle::sine_clip_duty(2.0, 1.0), 2.0 / 3.0, 1e-12);
}

TEST(Adc, ResamplesToAdcRateAndFilters) {
  FrontendConfig cfg;
  cfg.adc_full_scale = 1.0;
  const auto x = sine(16000 * 4, 16e9, 0.25e9, 0.5);
  const auto r = adc_quantize(x, cfg);
  EXPECT_DOUBLE_EQ(r.signal.sample_rate_hz, 4e9);
  EXPECT_EQ(r.signal.samples.size(), 16000u);
  // 0.25 GHz sits well inside the 1 GHz anti-alias response.
  EXPECT_NEAR(2.0 * std::abs(oracle::dft_at(r.signal.samples, 0.25e9, 4e9)), 0.5 * gaussian_lowpass_gain(0.25e9, 1e9, 4), 1e-3);
}

TEST(Adc, AutoScaleKeepsMinimumPhaseSignalsUnclipped) {
  TxConfig tc;
  tc.n_symbols = 20000;
  tc.format = 16;
  for (double cspr : {6.0, 10.0}) {
    tc.cspr_db = cspr;
    const auto field = resample_to(generate_tx(tc).waveform, 16e9);
    const auto r = adc_quantize(photodetect(field, FrontendConfig{}), FrontendConfig{});
    EXPECT_LT(r.clip_fraction, 1e-4) << cspr;
  }
}

TEST(Adc, ElectricalNoiseHook) {
  RealSignal x{std::vector<double>(200000, 0.0), 4e9};
  const auto y = add_electrical_noise(x, 0.1, 3);
  double s2 = 0.0;
  for (double v : y.samples) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / y.samples.size()), 0.1, 0.002);
  EXPECT_EQ(add_electrical_noise(x, 0.0, 3).samples, x.samples);
}
