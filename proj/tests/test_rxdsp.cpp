#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "kkmodem/channel.hpp"
#include "kkmodem/frontend.hpp"
#include "kkmodem/pipeline.hpp"
#include "kkmodem/txdsp.hpp"
#include "oracles.hpp"

using namespace kkm;

namespace {

constexpr double kTone = 0.516e9;
constexpr double kLambda = 1550.116;

// 8000 symbols hold a whole number of tone cycles.
TxFrame make_tx(int format, double cspr, std::size_t n_symbols = 8000) {
  TxConfig t;
  t.format = format;
  t.cspr_db = cspr;
  t.n_symbols = n_symbols;
  return generate_tx(t);
}

RealSignal square_law(const ComplexSignal& e) {
  RealSignal i{std::vector<double>(e.samples.size()), e.sample_rate_hz};
  for (std::size_t n = 0; n < e.samples.size(); ++n) i.samples[n] = std::norm(e.samples[n]);
  return i;
}

// Payload-relative reconstruction error (dB) away from the frame edges.
double kk_error_db(const TxFrame& tx) {
  const auto e = resample_to(tx.waveform, 4e9);
  const auto rec = kk_reconstruct(square_law(e), 1024, Sideband::lower);
  const auto truth = frequency_shift(e, -kTone);
  const double a = std::sqrt(power(tx.waveform) - power(tx.payload));
  double err = 0.0, pp = 0.0;
  for (std::size_t n = 1024; n + 1024 < e.samples.size(); ++n) {
    err += std::norm(rec.samples[n] - truth.samples[n]);
    pp += std::norm(truth.samples[n] - a);
  }
  return 10.0 * std::log10(err / pp);
}

RxPipelineConfig small_rx(int format, std::size_t buffer_len = std::size_t{1} << 15) {
  RxPipelineConfig rc;
  rc.kk_plan = BlockPlan::make(1024, buffer_len);
  rc.format = format;
  rc.static_taps = inverse_cd_taps(0.0, kLambda, 203, 2e9, 1.01e9);
  return rc;
}

// Ideal front end: no optical filter, transparent photodiode, no quantisation.
std::vector<double> ideal_adc(const TxFrame& tx) {
  FrontendConfig fe;
  fe.obpf_bandwidth_hz = 0.0;
  fe.pd_bandwidth_hz = 8e9;
  fe.pd_filter_order = 32;
  fe.adc_bandwidth_hz = 0.0;
  fe.quantization_enabled = false;
  const auto i = photodetect(resample_to(tx.waveform, 16e9), fe);
  return adc_quantize(i, fe).signal.samples;
}

cplx dtft(std::span<const cplx> h, double f, double fs, double centre) {
  cplx acc{};
  for (std::size_t i = 0; i < h.size(); ++i)
    acc += h[i] * std::polar(1.0, -2.0 * oracle::pi * f * (static_cast<double>(i) - centre) / fs);
  return acc;
}

std::vector<cplx> qpsk_symbols(std::size_t n, std::uint64_t seed) {
  const auto c = make_constellation(4);
  std::mt19937_64 rng(seed);
  std::vector<cplx> s(n);
  for (auto& v : s) v = c.points[rng() % 4];
  return s;
}

// Symbol k at sample 2k; odd samples carry the midpoint.
ComplexSignal two_sps(std::span<const cplx> s) {
  ComplexSignal x{std::vector<cplx>(2 * s.size()), 2e9};
  for (std::size_t k = 0; k < s.size(); ++k) {
    x.samples[2 * k] = s[k];
    x.samples[2 * k + 1] = 0.5 * (s[k] + s[(k + 1) % s.size()]);
  }
  return x;
}

double mse_db(std::span<const cplx> soft, std::span<const cplx> ref, std::size_t from) {
  double e = 0.0;
  for (std::size_t k = from; k < soft.size(); ++k) e += std::norm(soft[k] - ref[k]);
  return 10.0 * std::log10(e / static_cast<double>(soft.size() - from));
}

}  // namespace

// ---------------------------------------------------------------------------
// Buffering

TEST(StreamBuffers, TwoBuffersCarryHopTail) {
  const auto plan = BlockPlan::make(1024, std::size_t{1} << 22);
  std::vector<double> x(std::size_t{1} << 23);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  const auto s = stream_buffers(x, plan);
  ASSERT_EQ(s.buffers.size(), 2u);
  EXPECT_EQ(s.buffers[1].tail.size(), 512u);
  EXPECT_EQ(s.buffers[1].tail.data(), x.data() + (std::size_t{1} << 22) - 512);
  EXPECT_EQ(s.buffers[0].tail.size(), 512u);
  for (double v : s.buffers[0].tail) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(s.buffers[1].padded());
  EXPECT_EQ(plan.blocks_per_buffer(), 8192u);
}

TEST(StreamBuffers, FinalPartialBufferIsPaddedAndMarked) {
  const auto plan = BlockPlan::make(1024, 4096);
  std::vector<double> x(10000, 1.0);
  const auto s = stream_buffers(x, plan);
  ASSERT_EQ(s.buffers.size(), 3u);
  EXPECT_TRUE(s.buffers[2].padded());
  EXPECT_EQ(s.buffers[2].valid_length, 10000u - 8192u);
  EXPECT_EQ(s.buffers[2].samples.size(), 4096u);
  EXPECT_THROW(stream_buffers(std::vector<double>(100), plan), ParameterError);
}

TEST(KkReconstruct, BufferedCallsWithTailEqualSingleCall) {
  const auto tx = make_tx(16, 10.0);
  const auto i = square_law(resample_to(tx.waveform, 4e9));
  const auto plan = BlockPlan::make(1024, 8192);
  const std::vector<double> zeros(plan.hop, 0.0);
  const auto whole = kk_reconstruct(i, plan, zeros, Sideband::lower);
  const std::size_t cut = 8192 * 2;
  RealSignal a{{i.samples.begin(), i.samples.begin() + cut}, 4e9};
  RealSignal b{{i.samples.begin() + cut, i.samples.end()}, 4e9};
  const auto ra = kk_reconstruct(a, plan, zeros, Sideband::lower);
  const auto rb = kk_reconstruct(b, plan, ra.tail, Sideband::lower);
  std::vector<cplx> joined = ra.field.samples;
  joined.insert(joined.end(), rb.field.samples.begin(), rb.field.samples.end());
  ASSERT_EQ(joined.size(), whole.field.samples.size());
  for (std::size_t n = 0; n < joined.size(); ++n) ASSERT_EQ(joined[n], whole.field.samples[n]) << n;
}

// ---------------------------------------------------------------------------
// KK

TEST(Kk, ConstantIntensityGivesRealField) {
  RealSignal i{std::vector<double>(8192, 2.25), 4e9};
  const auto e = kk_reconstruct(i, 1024, Sideband::lower);
  ASSERT_EQ(e.samples.size(), i.samples.size());
  // The stream edges see zero padding; the interior is exact.
  for (std::size_t n = 1024; n + 1024 < e.samples.size(); ++n) {
    ASSERT_NEAR(e.samples[n].real(), 1.5, 1e-12);
    ASSERT_NEAR(e.samples[n].imag(), 0.0, 1e-12);
  }
}

TEST(Kk, MinimumPhaseFieldIsRecovered) { EXPECT_LT(kk_error_db(make_tx(16, 12.0)), -30.0); }

TEST(Kk, ErrorNonIncreasingInCspr) {
  double prev = 1e9;
  for (double cspr : {4.0, 6.0, 8.0, 10.0, 12.0}) {
    const double e = kk_error_db(make_tx(16, cspr));
    EXPECT_LE(e, prev) << cspr;
    prev = e;
  }
}

TEST(Kk, HilbertMultiplierSigns) {
  const auto up = hilbert_multiplier(16, Sideband::upper, 0);
  const auto lo = hilbert_multiplier(16, Sideband::lower, 0);
  EXPECT_EQ(up[0], cplx{});
  EXPECT_EQ(up[8], cplx{});
  EXPECT_EQ(up[3], cplx(0, -1));
  EXPECT_EQ(up[12], cplx(0, 1));
  EXPECT_EQ(lo[3], cplx(0, 1));
  EXPECT_EQ(sideband_for_tone(kTone), Sideband::lower);
}

TEST(Kk, NonPositiveSamplesAreClampedAndZeroBlocksFlagged) {
  RealSignal i{std::vector<double>(8192, 1.0), 4e9};
  for (std::size_t n = 3000; n < 3010; ++n) i.samples[n] = -0.01;
  auto count = [](const RealSignal& x, std::vector<KkBlockDiagnostics>& d) {
    const auto e = kk_reconstruct(x, 1024, Sideband::lower, &d);
    EXPECT_TRUE(all_finite(e.samples));
    std::size_t c = 0;
    for (const auto& b : d) c += b.clamp_count;
    return c;
  };
  std::vector<KkBlockDiagnostics> d;
  RealSignal clean{std::vector<double>(8192, 1.0), 4e9};
  // The zero history and flush padding at the stream edges clamp as well;
  // each interior sample sits in two overlapping blocks.
  EXPECT_EQ(count(i, d) - count(clean, d), 20u);

  RealSignal z{std::vector<double>(4096, 0.0), 4e9};
  kk_reconstruct(z, 1024, Sideband::lower, &d);
  ASSERT_FALSE(d.empty());
  EXPECT_TRUE(d.front().zero_block);
}

TEST(Kk, StageMatchesAnyPushPattern) {
  const auto i = square_law(resample_to(make_tx(4, 10.0).waveform, 4e9));
  KkStage a(1024, Sideband::lower), b(1024, Sideband::lower);
  std::vector<cplx> oa, ob;
  a.push(i.samples, oa);
  a.flush(oa);
  std::mt19937 rng(3);
  for (std::size_t pos = 0; pos < i.samples.size();) {
    const std::size_t n = std::min<std::size_t>(i.samples.size() - pos, rng() % 3000);
    b.push(std::span<const double>(i.samples).subspan(pos, n), ob);
    pos += n;
  }
  b.flush(ob);
  EXPECT_EQ(oa, ob);
}

// ---------------------------------------------------------------------------
// Downshift

TEST(Downshift, IdentityAndInversePair) {
  ComplexSignal x{oracle::random_complex(4096, 1), 4e9};
  EXPECT_EQ(downshift_dc(x, 0.0).samples, x.samples);
  const auto y = downshift_dc(downshift_dc(x, kTone), -kTone);
  EXPECT_LT(oracle::max_abs_diff(y.samples, x.samples), 1e-12);
}

TEST(Downshift, PayloadCentredAtDc) {
  const auto tx = make_tx(16, 12.0, 16000);
  const auto e = kk_reconstruct(square_law(resample_to(tx.waveform, 4e9)), 1024, Sideband::lower);
  // Interior only (the stream edges see zero padding), carrier removed as
  // its mean, Hann window against leakage from the cut.
  const std::size_t edge = 2048;
  ComplexSignal m{{e.samples.begin() + edge, e.samples.end() - edge}, 4e9};
  cplx mean{};
  for (const auto& v : m.samples) mean += v;
  mean /= static_cast<double>(m.samples.size());
  for (auto& v : m.samples) v -= mean;
  auto d = downshift_dc(m, kTone, edge);
  const double len = static_cast<double>(d.samples.size());
  for (std::size_t n = 0; n < d.samples.size(); ++n)
    d.samples[n] *= 0.5 * (1.0 - std::cos(2.0 * oracle::pi * static_cast<double>(n) / len));
  const auto spec = fft(d.samples);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = bin_frequency(k, spec.size(), 4e9);
    if (std::abs(f) > 0.505e9) continue;
    num += f * std::norm(spec[k]);
    den += std::norm(spec[k]);
  }
  EXPECT_NEAR(num / den, 0.0, 5e6);
}

// ---------------------------------------------------------------------------
// Static equalizer

TEST(StaticTaps, ZeroDispersionIsCentreSpike) {
  LinkConfig l;
  for (auto& s : l.spans) s.length_km = 0.0;
  const auto f = compute_static_taps(l, 1e9, 0.01);
  ASSERT_EQ(f.taps.size(), 203u);
  EXPECT_DOUBLE_EQ(f.nominal_rate_hz, 2e9);
  for (std::size_t i = 0; i < f.taps.size(); ++i) {
    if (i == 101) EXPECT_NEAR(std::abs(f.taps[i] - 1.0), 0.0, 1e-12);
    else EXPECT_LE(std::abs(f.taps[i]), 1e-6) << i;
  }
  EXPECT_THROW(inverse_cd_taps(0.0, kLambda, 202, 2e9, 1.01e9), ParameterError);
}

TEST(StaticTaps, ExtraGainScalesResponse) {
  const auto plain = inverse_cd_taps(20.0 * 3000.0, kLambda, 203, 2e9, 1.01e9);
  const auto twice = inverse_cd_taps(20.0 * 3000.0, kLambda, 203, 2e9, 1.01e9, nullptr, [](double) { return 2.0; });
  for (std::size_t i = 0; i < plain.taps.size(); ++i) ASSERT_NEAR(std::abs(twice.taps[i] - 2.0 * plain.taps[i]), 0.0, 1e-12);
}

TEST(StaticTaps, CoverageAtTenThousandKm) {
  LinkConfig l;
  StaticTapsReport rep;
  compute_static_taps(l, 1e9, 0.01, 203, 2, &rep);
  const double lam = kLambda * 1e-9;
  const double spread = 20e-6 * lam * lam * 1e7 * 1.01e9 / 299792458.0;
  EXPECT_NEAR(rep.group_delay_spread_s, spread, 1e-3 * spread);
  EXPECT_NEAR(spread, 1.6e-9, 0.1e-9);
  EXPECT_DOUBLE_EQ(rep.tap_span_s, 101.5e-9);
  EXPECT_GT(rep.coverage_ratio, 50.0);
  EXPECT_FALSE(rep.warning.has_value());

  StaticTapsReport bad;
  inverse_cd_taps(2e7, kLambda, 203, 2e9, 1.01e9, &bad);
  EXPECT_LT(bad.coverage_ratio, 1.0);
  EXPECT_TRUE(bad.warning.has_value());
}

TEST(StaticTaps, CascadeWithFibreIsFlat) {
  const double lam = kLambda * 1e-9;
  for (double km : {2000.0, 10000.0}) {
    const double acc = 20.0 * km;
    const auto f = inverse_cd_taps(acc, kLambda, 203, 2e9, 1.01e9);
    double worst_db = 0.0, worst_phase = 0.0;
    for (double fr = -0.5e9; fr <= 0.5e9; fr += 5e6) {
      const double k = oracle::pi * acc * 1e-3 * lam * lam / 299792458.0;
      const cplx fibre = std::polar(1.0, -k * fr * fr);
      const cplx total = fibre * dtft(f.taps, fr, 2e9, 101.0);
      worst_db = std::max(worst_db, std::abs(20.0 * std::log10(std::abs(total))));
      worst_phase = std::max(worst_phase, std::abs(std::arg(total)));
    }
    EXPECT_LT(worst_db, 0.2) << km;
    EXPECT_LT(worst_phase, 0.05) << km;
  }
}

TEST(StaticEq, OutputRateAndAllPassDecimation) {
  ComplexSignal x{oracle::random_complex(20000, 4), 4e9};
  const auto y = static_equalize_and_resample(x, identity_filter(2e9));
  EXPECT_DOUBLE_EQ(y.sample_rate_hz, 2e9);
  ASSERT_EQ(y.samples.size(), 10000u);
  for (std::size_t m = 0; m < y.samples.size(); ++m) ASSERT_LT(std::abs(y.samples[m] - x.samples[2 * m]), 1e-12);
}

TEST(StaticEq, EqualsFilterThenResample) {
  // Band-limited to +-0.6 GHz so 2:1 decimation is alias free.
  ComplexSignal x{oracle::random_complex(1 << 15, 5), 4e9};
  apply_frequency_response(x, [](double f) { return std::abs(f) < 0.6e9 ? cplx{1, 0} : cplx{}; });
  const auto taps = inverse_cd_taps(20.0 * 4000.0, kLambda, 203, 2e9, 1.01e9);
  const auto y = static_equalize_and_resample(x, taps);
  // Oracle: direct convolution with the zero-stuffed taps, centre delay
  // removed, then band-limited 1:2 resampling.
  const auto t4 = zero_stuff(taps, 2);
  const auto full = oracle::convolve(x.samples, t4.taps);
  const std::size_t c = (t4.taps.size() - 1) / 2;
  ComplexSignal filtered{{full.begin() + static_cast<std::ptrdiff_t>(c),
                          full.begin() + static_cast<std::ptrdiff_t>(c + x.samples.size())},
                         4e9};
  const auto ref = resample_rational(filtered, 1, 2);
  ASSERT_EQ(ref.samples.size(), y.samples.size());
  std::vector<cplx> a(y.samples.begin() + 1024, y.samples.end() - 1024);
  std::vector<cplx> b(ref.samples.begin() + 1024, ref.samples.end() - 1024);
  EXPECT_LT(oracle::rel_error(a, b), 1e-6);
}

TEST(StaticEq, StreamingMatchesWholeSignal) {
  ComplexSignal x{oracle::random_complex(30000, 6), 4e9};
  const auto taps = zero_stuff(inverse_cd_taps(20.0 * 3000.0, kLambda, 203, 2e9, 1.01e9), 2);
  const auto whole = static_equalize_and_resample(x, taps, 1024);
  StaticEqualizer eq(taps, 1024);
  std::vector<cplx> out;
  std::mt19937 rng(7);
  for (std::size_t pos = 0; pos < x.samples.size();) {
    const std::size_t n = std::min<std::size_t>(x.samples.size() - pos, rng() % 2500);
    eq.push(std::span<const cplx>(x.samples).subspan(pos, n), out);
    pos += n;
  }
  eq.flush(out);
  EXPECT_EQ(out, whole.samples);
}

// ---------------------------------------------------------------------------
// DDLMS

TEST(Ddlms, IdealQpskConverges) {
  const auto s = qpsk_symbols(30000, 8);
  DdlmsConfig cfg;
  auto st = EqualizerState::centre_spike(cfg);
  const auto out = ddlms_wl(two_sps(s), cfg, make_constellation(4), st, s);
  ASSERT_EQ(out.soft.size(), s.size());
  EXPECT_LT(mse_db(out.soft, s, 15000), -25.0);
  for (std::size_t k = 0; k < s.size(); ++k) ASSERT_EQ(out.decisions[k], s[k]) << k;
  EXPECT_TRUE(st.finite());
  EXPECT_EQ(st.symbols, s.size());
}

TEST(Ddlms, WidelyLinearRemovesIqImbalance) {
  const auto s = qpsk_symbols(40000, 9);
  std::vector<cplx> imb(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) imb[k] = 0.9 * s[k] + 0.1 * std::conj(s[k]);
  const auto x = two_sps(imb);
  const auto c = make_constellation(4);
  double mse[2];
  for (int wl = 0; wl < 2; ++wl) {
    DdlmsConfig cfg;
    cfg.widely_linear = wl == 1;
    auto st = EqualizerState::centre_spike(cfg);
    const auto out = ddlms_wl(x, cfg, c, st, s);
    mse[wl] = mse_db(out.soft, s, 20000);
    if (wl == 1) {
      std::size_t errors = 0;
      for (std::size_t k = 20000; k < s.size(); ++k) errors += out.decisions[k] != s[k];
      EXPECT_EQ(errors, 0u);
    }
  }
  EXPECT_GE(mse[0] - mse[1], 10.0);
}

TEST(Ddlms, ZeroStepFreezesTaps) {
  const auto s = qpsk_symbols(5000, 10);
  DdlmsConfig cfg;
  cfg.mu = 0.0;
  cfg.auto_gain = false;
  cfg.data_aided_init = false;
  cfg.timing_phase = 0;
  auto st = EqualizerState::centre_spike(cfg);
  const auto init = st;
  const auto x = two_sps(s);
  const auto out = ddlms_wl(x, cfg, make_constellation(4), st, s);
  EXPECT_EQ(st.w, init.w);
  EXPECT_EQ(st.g, init.g);
  for (std::size_t k = 0; k < s.size(); ++k) ASSERT_EQ(out.soft[k], x.samples[2 * k]);
}

TEST(Ddlms, DivergenceGuardFreezesTaps) {
  const auto s = qpsk_symbols(3000, 11);
  auto x = two_sps(s);
  for (auto& v : x.samples) v *= 100.0;
  DdlmsConfig cfg;
  cfg.auto_gain = false;
  cfg.data_aided_init = false;
  cfg.mu = 0.0;
  auto st = EqualizerState::centre_spike(cfg);
  ddlms_wl(x, cfg, make_constellation(4), st);
  EXPECT_TRUE(st.diverged);
}

TEST(Ddlms, DeterministicAndPushInvariant) {
  const auto s = qpsk_symbols(20000, 12);
  ComplexSignal x = two_sps(s);
  for (auto& v : x.samples) v *= std::polar(0.7, 0.4);
  DdlmsConfig cfg;
  const auto c = make_constellation(4);
  auto s1 = EqualizerState::centre_spike(cfg), s2 = s1;
  const auto a = ddlms_wl(x, cfg, c, s1, s);
  const auto b = ddlms_wl(x, cfg, c, s2, s);
  EXPECT_EQ(a.soft, b.soft);
  EXPECT_EQ(s1.w, s2.w);

  DdlmsEqualizer eq(cfg, c, s, EqualizerState::centre_spike(cfg));
  DdlmsOutput o;
  std::mt19937 rng(13);
  for (std::size_t pos = 0; pos < x.samples.size();) {
    const std::size_t n = std::min<std::size_t>(x.samples.size() - pos, rng() % 5000);
    eq.push(std::span<const cplx>(x.samples).subspan(pos, n), o);
    pos += n;
  }
  eq.flush(o);
  EXPECT_EQ(o.soft, a.soft);
  EXPECT_EQ(eq.state().w, s1.w);
}

TEST(Ddlms, DataAidedStartIsPushInvariant) {
  const auto s = qpsk_symbols(20000, 16);
  ComplexSignal x = two_sps(s);
  for (auto& v : x.samples) v *= std::polar(0.7, 0.4);
  const DdlmsConfig cfg;
  const auto c = make_constellation(4);
  DdlmsEqualizer whole(cfg, c, s), ragged(cfg, c, s);
  DdlmsOutput a, b;
  whole.push(x.samples, a);
  whole.flush(a);
  std::mt19937 rng(17);
  for (std::size_t pos = 0; pos < x.samples.size();) {
    const std::size_t n = std::min<std::size_t>(x.samples.size() - pos, rng() % 3000);
    ragged.push(std::span<const cplx>(x.samples).subspan(pos, n), b);
    pos += n;
  }
  ragged.flush(b);
  EXPECT_EQ(a.soft, b.soft);
  // The seeded centre tap undoes gain and rotation from the first symbol on.
  EXPECT_LT(mse_db(a.soft, s, 0), -25.0);
}

TEST(Ddlms, RejectsShortInput) {
  DdlmsConfig cfg;
  auto st = EqualizerState::centre_spike(cfg);
  ComplexSignal x{std::vector<cplx>(7), 2e9};
  EXPECT_THROW(ddlms_wl(x, cfg, make_constellation(4), st), ParameterError);
}

// ---------------------------------------------------------------------------
// Demap

TEST(Demap, ZeroLabelStreamGivesZeroBits) {
  const auto c = make_constellation(4);
  const std::vector<cplx> d(100, c.points[c.by_label[0]]);
  const auto b = demap(d, c);
  ASSERT_EQ(b.size(), 200u);
  for (auto v : b) ASSERT_EQ(v, 0);
}

TEST(Demap, SixteenQamBijection) {
  const auto c = make_constellation(16);
  std::mt19937_64 rng(14);
  std::vector<cplx> s(5000);
  for (auto& v : s) v = c.points[rng() % 16];
  EXPECT_EQ(qam_map(demap(s, c), c), s);
}

TEST(Demap, OffGridInputsAreCounted) {
  const auto c = make_constellation(16);
  std::vector<cplx> s = {c.points[0], c.points[3] * 1.05, c.points[5] + cplx(0.01, 0)};
  DemapStats st;
  const auto b = demap(s, c, &st);
  EXPECT_EQ(st.off_grid, 2u);
  std::vector<cplx> snapped = {c.points[0], c.points[3], c.points[5]};
  EXPECT_EQ(b, demap(snapped, c));
}

// ---------------------------------------------------------------------------
// Full chain

TEST(Pipeline, NoiselessLoopbackAllFormats) {
  for (int format : {4, 8, 16, 32, 64}) {
    const auto tx = make_tx(format, 12.0, 100000);
    const auto adc = ideal_adc(tx);
    const auto rc = small_rx(format, std::size_t{1} << 18);
    const auto out = run_pipeline(rc, adc, tx.symbols);
    ASSERT_EQ(out.decisions.size(), tx.symbols.size());
    std::size_t errors = 0;
    for (std::size_t k = rc.ddlms.startup_symbols; k + 1024 < tx.symbols.size(); ++k)
      errors += out.decisions[k] != tx.symbols[k];
    EXPECT_EQ(errors, 0u) << "format " << format;
  }
}

TEST(Pipeline, SplitBuffersAreBitIdenticalToOnePass) {
  const auto tx = make_tx(16, 12.0, 40000);
  const auto adc = ideal_adc(tx);
  const auto rc = small_rx(16, std::size_t{1} << 15);
  RxPipeline one(rc, tx.symbols);
  one.push(adc);
  one.flush();
  const auto buffered = run_pipeline(rc, adc, tx.symbols);
  EXPECT_EQ(buffered.soft, one.output().soft);
  EXPECT_EQ(buffered.decisions, one.output().decisions);

  RxPipeline ragged(rc, tx.symbols);
  std::mt19937 rng(15);
  for (std::size_t pos = 0; pos < adc.size();) {
    const std::size_t n = std::min<std::size_t>(adc.size() - pos, 1 + rng() % 20000);
    ragged.push(std::span<const double>(adc).subspan(pos, n));
    pos += n;
  }
  ragged.flush();
  EXPECT_EQ(ragged.output().soft, one.output().soft);
}

TEST(Pipeline, RejectsDiscontinuousBuffers) {
  const auto tx = make_tx(4, 12.0, 8000);
  const auto adc = ideal_adc(tx);
  const auto rc = small_rx(4, 8192);
  const auto s = stream_buffers(adc, rc.kk_plan);
  RxPipeline p(rc, tx.symbols);
  p.process_buffer(s.buffers[0]);
  EXPECT_THROW(p.process_buffer(s.buffers[2]), ParameterError);
}

TEST(Pipeline, DiagnosticsJsonLines) {
  const auto tx = make_tx(4, 12.0, 8000);
  const auto adc = ideal_adc(tx);
  const auto rc = small_rx(4, 8192);
  RxPipeline p(rc, tx.symbols);
  for (const auto& b : stream_buffers(adc, rc.kk_plan).buffers) p.process_buffer(b);
  p.flush();
  std::ostringstream os;
  p.write_diagnostics_jsonl(os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t buffers = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "buffer") ++buffers;
  }
  EXPECT_EQ(buffers, p.buffer_diagnostics().size());
  EXPECT_EQ(buffers, (adc.size() + 8191) / 8192);
}
