#pragma once

// End-to-end experiments: transmitter -> link -> receiver front end ->
// streaming receiver -> metrics, plus sweeps, throughput benchmarks, a
// continuous streaming run and plot-ready tables.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kkmodem/channel.hpp"
#include "kkmodem/config.hpp"
#include "kkmodem/constellation.hpp"
#include "kkmodem/frontend.hpp"
#include "kkmodem/metrics.hpp"
#include "kkmodem/pipeline.hpp"
#include "kkmodem/raw_io.hpp"
#include "kkmodem/static_eq.hpp"
#include "kkmodem/txdsp.hpp"

namespace kkm {

inline constexpr int report_schema_version = 1;

struct DistanceResult {
  double distance_km = 0.0;
  std::string status = "ok";  // ok | sync_failed | failed
  std::string message;
  MetricsReport metrics;
  double osnr_db = std::numeric_limits<double>::infinity();  // link ASE only, 12.5 GHz reference
  double clip_fraction = 0.0;
  StaticTapsReport taps;
  bool diverged = false;
  std::size_t clamp_count = 0;
  std::size_t zero_blocks = 0;
  std::size_t symbols_out = 0;
  std::vector<cplx> soft_tail;  // last soft symbols, for constellation plots

  bool ok() const { return status == "ok"; }
};

struct RunReport {
  ExperimentConfig config;
  double launch_power_dbm = 0.0;
  double measured_cspr_db = 0.0;
  double mp_violation_fraction = 0.0;
  std::vector<DistanceResult> points;
};

struct RunOptions {
  std::size_t soft_tail_symbols = 4096;
  // Receive-side tweaks applied after the config, for studies that need them.
  std::optional<FrontendConfig> frontend_override;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return make_rng(seed, stream)(); }

inline RxPipelineConfig rx_config(const ExperimentConfig& cfg, double accumulated_ps_nm, StaticTapsReport* rep) {
  RxPipelineConfig rc;
  rc.kk_plan = cfg.rx.kk_plan;
  rc.symbol_rate_hz = cfg.tx.baud_hz;
  rc.rolloff = cfg.tx.rolloff;
  rc.tone_freq_hz = cfg.tx.tone_freq_hz;
  std::function<double(double)> gain;
  const FrontendConfig& fe = cfg.frontend;
  if (cfg.rx.compensate_adc_response && fe.adc_bandwidth_hz > 0.0) {
    // After downshift, payload frequency f was detected as a beat at tone - f.
    const double tone = cfg.tx.tone_freq_hz;
    gain = [tone, &fe](double f) {
      return 1.0 / std::max(gaussian_lowpass_gain(std::abs(tone - f), fe.adc_bandwidth_hz, fe.adc_filter_order), 0.25);
    };
  }
  rc.static_taps = inverse_cd_taps(accumulated_ps_nm, cfg.link.center_wavelength_nm, cfg.rx.static_taps,
                                   2.0 * cfg.tx.baud_hz, cfg.tx.baud_hz * (1.0 + cfg.tx.rolloff), rep, gain);
  rc.matched_filter = cfg.rx.matched_filter;
  rc.matched_span_symbols = cfg.rx.matched_span_symbols;
  rc.static_fft_size = cfg.rx.static_fft_size;
  rc.dc_lambda = cfg.rx.dc_lambda;
  rc.ddlms = cfg.rx.ddlms;
  rc.format = cfg.tx.format;
  return rc;
}

/// OSNR in 12.5 GHz after n amplifiers with the launch power of the link.
inline double link_osnr_db(const LinkConfig& link, std::size_t n_spans) {
  if (!link.ase_enabled || n_spans == 0) return std::numeric_limits<double>::infinity();
  double psd = 0.0;
  for (std::size_t i = 0; i < n_spans; ++i)
    psd += amplifier_noise_variance(link.spans[i], link.edfa_noise_figure_db, link.center_wavelength_nm, 1.0);
  return lin_to_db(link.launch_power_w() / (psd * 12.5e9));
}

}  // namespace detail

/// Receiver front end, streaming receiver and metrics for one optical field.
inline DistanceResult receive_and_measure(const ComplexSignal& field, double distance_km, double accumulated_ps_nm,
                                          const ExperimentConfig& cfg, const TxFrame& tx, std::uint64_t seed,
                                          const RunOptions& opt = {}) {
  DistanceResult r;
  r.distance_km = distance_km;
  try {
    const FrontendConfig fe = opt.frontend_override.value_or(cfg.frontend);
    ComplexSignal x = field;
    if (cfg.rx_osnr_db) x = add_ase(x, *cfg.rx_osnr_db, detail::derive_seed(seed, 0x05AE));
    if (std::abs(x.sample_rate_hz - cfg.detector_sample_rate_hz) > 1e-6 * x.sample_rate_hz)
      x = resample_to(x, cfg.detector_sample_rate_hz);
    RealSignal current = photodetect(x, fe);
    if (fe.electrical_noise_std > 0.0)
      current = add_electrical_noise(current, fe.electrical_noise_std, detail::derive_seed(seed, 0xE1EC));
    const AdcResult adc = adc_quantize(current, fe);
    r.clip_fraction = adc.clip_fraction;

    const auto rc = detail::rx_config(cfg, accumulated_ps_nm, &r.taps);
    RxPipeline p(rc, tx.symbols);
    const auto stream = stream_buffers(adc.signal.samples, rc.kk_plan);
    for (const auto& b : stream.buffers) p.process_buffer(b);
    p.flush();
    for (const auto& b : p.block_diagnostics()) {
      r.clamp_count += b.clamp_count;
      r.zero_blocks += b.zero_block;
    }
    r.diverged = p.equalizer().diverged();
    DdlmsOutput out = p.take_output();
    r.symbols_out = out.decisions.size();

    const auto& c = p.constellation();
    const std::size_t bps = static_cast<std::size_t>(c.bits_per_symbol());
    const std::size_t skip = cfg.rx.ddlms.startup_symbols + cfg.rx.guard_symbols;
    const std::size_t guard = cfg.rx.guard_symbols;
    require(out.decisions.size() > skip + guard, "not enough symbols after training and guard");
    const std::size_t end = out.decisions.size() - guard;
    const std::vector<cplx> decided(out.decisions.begin(), out.decisions.begin() + static_cast<std::ptrdiff_t>(end));
    const auto bits = demap(decided, c);
    r.metrics = measure_bits(bits, tx.bits, skip * bps, cfg.tx.baud_hz * static_cast<double>(bps), cfg.metrics.window_s);

    const std::size_t ns = tx.symbols.size();
    const std::size_t sym_off = r.metrics.sync_offset / bps;
    std::vector<cplx> soft(out.soft.begin() + static_cast<std::ptrdiff_t>(skip),
                           out.soft.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<cplx> ref(soft.size());
    for (std::size_t k = 0; k < soft.size(); ++k) ref[k] = tx.symbols[(skip + k + sym_off) % ns];
    r.metrics.evm_pct = evm_percent(soft, ref);
    const std::size_t tail = std::min(opt.soft_tail_symbols, soft.size());
    r.soft_tail.assign(soft.end() - static_cast<std::ptrdiff_t>(tail), soft.end());
    if (cfg.write_captures) {
      const auto dir = std::filesystem::path(cfg.output_dir) / "captures";
      std::filesystem::create_directories(dir);
      const std::string stem = std::to_string(static_cast<long long>(std::llround(distance_km))) + "km";
      if (!adc.codes.empty())
        raw::write_int16(dir / ("adc_" + stem + ".raw"), adc.codes, adc.signal.sample_rate_hz, adc.lsb, 0.5);
      else
        raw::write_real(dir / ("adc_" + stem + ".raw"), adc.signal);
      raw::write_soft_symbols(dir / ("soft_" + stem + ".raw"), out.soft, cfg.tx.baud_hz);
    }
  } catch (const SyncError& e) {
    r.status = "sync_failed";
    r.message = e.what();
  } catch (const std::exception& e) {
    r.status = "failed";
    r.message = e.what();
  }
  return r;
}

/// One transmission over the configured link, measured at every monitor.
/// An empty span list is a back-to-back measurement at 0 km.
inline RunReport run_single(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  RunReport rep;
  rep.config = cfg;
  rep.launch_power_dbm = cfg.link.launch_power_dbm();
  const TxFrame tx = generate_tx(cfg.tx);
  rep.measured_cspr_db = measure_cspr(tx.waveform, cfg.tx.tone_freq_hz);
  rep.mp_violation_fraction = mp_violation_fraction(tx.waveform, cfg.tx.tone_freq_hz);

  ComplexSignal x = tx.waveform;
  if (std::abs(x.sample_rate_hz - cfg.link_sample_rate_hz) > 1e-6 * x.sample_rate_hz)
    x = resample_to(x, cfg.link_sample_rate_hz);

  const std::uint64_t link_seed = detail::derive_seed(cfg.seed, 0x11AC);
  std::map<double, ComplexSignal> monitors;
  if (cfg.link.spans.empty()) {
    normalize_power(x, cfg.link.launch_power_w());
    monitors.emplace(0.0, wiener_phase_noise(x, cfg.link.phase_noise_linewidth_hz, link_seed));
  } else {
    monitors = propagate_link(x, cfg.link, link_seed).monitors;
  }
  x = {};

  std::size_t idx = 0;
  for (const auto& [km, field] : monitors) {
    std::size_t n_spans = 0;
    while (n_spans < cfg.link.spans.size() && cfg.link.length_km(n_spans) < km - 1e-9) ++n_spans;
    DistanceResult r = receive_and_measure(field, km, cfg.link.accumulated_dispersion_ps_nm(n_spans), cfg, tx,
                                           detail::derive_seed(cfg.seed, 0x2000 + idx++), opt);
    r.osnr_db = detail::link_osnr_db(cfg.link, n_spans);
    rep.points.push_back(std::move(r));
  }
  return rep;
}

inline nlohmann::json to_json(const DistanceResult& r) {
  nlohmann::json j = {{"distance_km", r.distance_km},
                      {"status", r.status},
                      {"osnr_db", json_number(r.osnr_db)},
                      {"clip_fraction", r.clip_fraction},
                      {"diverged", r.diverged},
                      {"kk_clamp_count", r.clamp_count},
                      {"kk_zero_blocks", r.zero_blocks},
                      {"symbols_out", r.symbols_out},
                      {"static_taps",
                       {{"accumulated_dispersion_ps_nm", r.taps.accumulated_dispersion_ps_nm},
                        {"tap_span_s", r.taps.tap_span_s},
                        {"group_delay_spread_s", r.taps.group_delay_spread_s},
                        {"coverage_ratio", json_number(r.taps.coverage_ratio)},
                        {"warning", r.taps.warning ? nlohmann::json(*r.taps.warning) : nlohmann::json(nullptr)}}}};
  if (r.ok())
    j["metrics"] = to_json(r.metrics);
  else
    j["message"] = r.message;
  return j;
}

/// Farthest distance meeting each FEC threshold and the corresponding net rate.
inline nlohmann::json fec_summary(const RunReport& rep) {
  nlohmann::json out = nlohmann::json::array();
  std::vector<std::pair<double, double>> series;
  for (const auto& p : rep.points)
    series.emplace_back(p.distance_km, p.ok() ? p.metrics.q_db : -std::numeric_limits<double>::infinity());
  for (const auto& f : rep.config.metrics.fec) {
    const double qt = q_threshold_db(f);
    const auto km = series.empty() ? std::nullopt : reach(series, qt);
    out.push_back({{"name", f.name},
                   {"ber_limit", f.ber_limit},
                   {"overhead_fraction", f.overhead_fraction},
                   {"q_threshold_db", qt},
                   {"reach_km", km ? nlohmann::json(*km) : nlohmann::json(nullptr)},
                   {"net_throughput_bps", net_throughput(rep.config.tx.baud_hz, rep.config.tx.format, f)}});
  }
  return out;
}

inline nlohmann::json to_json(const RunReport& rep) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : rep.points) pts.push_back(to_json(p));
  return {{"schema_version", report_schema_version},
          {"kind", "run"},
          {"config", to_json(rep.config)},
          {"launch_power_dbm", rep.launch_power_dbm},
          {"tx", {{"measured_cspr_db", rep.measured_cspr_db}, {"mp_violation_fraction", rep.mp_violation_fraction}}},
          {"points", pts},
          {"fec", fec_summary(rep)}};
}

// ---------------------------------------------------------------------------
// sweeps

/// Config with one sweep axis set to value.
inline ExperimentConfig apply_sweep_value(ExperimentConfig cfg, const std::string& axis, double value) {
  cfg.sweep.reset();
  if (axis == "cspr_db") {
    cfg.tx.cspr_db = value;
  } else if (axis == "rel_launch_db") {
    cfg.link.rel_launch_db = value;
  } else if (axis == "format") {
    cfg.tx.format = static_cast<int>(std::lround(value));
  } else if (axis == "osnr_db") {
    cfg.rx_osnr_db = value;
  } else if (axis == "distance_km") {
    const FiberSpan span = cfg.link.spans.empty() ? FiberSpan{} : cfg.link.spans[0];
    const auto n = static_cast<std::size_t>(std::lround(value / span.length_km));
    require(std::abs(static_cast<double>(n) * span.length_km - value) < 1e-6 * std::max(1.0, value),
            "distance sweep: value is not a whole number of spans");
    cfg.link.spans.assign(n, span);
    cfg.link.monitor_every_n_spans = 0;
  } else {
    throw ParameterError("unknown sweep axis '" + axis + "'");
  }
  return cfg;
}

struct SweepRow {
  double value = 0.0;
  DistanceResult result;
};

struct SweepReport {
  ExperimentConfig config;
  std::vector<SweepRow> rows;
  // Per distance: the swept value with the highest Q among successful rows.
  std::map<double, double> argmax;
};

inline SweepReport run_sweep(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  require(cfg.sweep.has_value(), "run_sweep: config has no sweep section");
  cfg.validate();
  const auto& sw = *cfg.sweep;
  SweepReport rep;
  rep.config = cfg;
  std::map<double, std::pair<double, double>> best;  // distance -> (q, value)
  for (std::size_t i = 0; i < sw.values.size(); ++i) {
    ExperimentConfig c = apply_sweep_value(cfg, sw.axis, sw.values[i]);
    if (!sw.common_random_numbers) c.seed = cfg.seed + i;
    const RunReport run = run_single(c, opt);
    for (const auto& p : run.points) {
      if (p.ok()) {
        auto it = best.find(p.distance_km);
        if (it == best.end() || p.metrics.q_db > it->second.first) best[p.distance_km] = {p.metrics.q_db, sw.values[i]};
      }
      rep.rows.push_back({sw.values[i], p});
    }
  }
  for (const auto& [km, qv] : best) rep.argmax[km] = qv.second;
  return rep;
}

inline void write_sweep_csv(const SweepReport& rep, std::ostream& os) {
  os << "axis,value,distance_km,status,ber,q_db,evm_pct,n_bits,n_errors,osnr_db\n";
  for (const auto& r : rep.rows) {
    const auto& m = r.result.metrics;
    os << rep.config.sweep->axis << ',' << r.value << ',' << r.result.distance_km << ',' << r.result.status << ',';
    if (r.result.ok())
      os << m.ber << ',' << m.q_db << ',' << m.evm_pct << ',' << m.n_bits << ',' << m.n_errors;
    else
      os << ",,,,";
    os << ',' << r.result.osnr_db << '\n';
  }
}

inline nlohmann::json to_json(const SweepReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) rows.push_back({{"value", r.value}, {"result", to_json(r.result)}});
  nlohmann::json am = nlohmann::json::array();
  for (const auto& [km, v] : rep.argmax) am.push_back({{"distance_km", km}, {"best_value", v}});
  return {{"schema_version", report_schema_version},
          {"kind", "sweep"},
          {"config", to_json(rep.config)},
          {"rows", rows},
          {"argmax", am}};
}

// ---------------------------------------------------------------------------
// throughput benchmark

struct BenchReport {
  std::size_t n_samples = 0;
  std::vector<double> samples_per_s;  // one per repeat
  double median_samples_per_s = 0.0;
  double max_deviation = 0.0;  // largest |rate / median - 1|
  double required_samples_per_s = 0.0;
  StageTimings median_timings;
};

/// Back-to-back ADC capture of n_adc_samples for benchmarking and tests.
inline AdcResult make_b2b_capture(const ExperimentConfig& cfg, std::size_t n_adc_samples, TxFrame* tx_out = nullptr) {
  ExperimentConfig c = cfg;
  const double sps_adc = cfg.frontend.adc_rate_hz / cfg.tx.baud_hz;
  c.tx.n_symbols = static_cast<std::size_t>(std::ceil(static_cast<double>(n_adc_samples) / sps_adc));
  TxFrame tx = generate_tx(c.tx);
  ComplexSignal x = resample_to(tx.waveform, cfg.detector_sample_rate_hz);
  normalize_power(x, cfg.link.launch_power_w());
  AdcResult adc = adc_quantize(photodetect(x, cfg.frontend), cfg.frontend);
  adc.signal.samples.resize(std::min(adc.signal.samples.size(), n_adc_samples));
  if (!adc.codes.empty()) adc.codes.resize(adc.signal.samples.size());
  if (tx_out) *tx_out = std::move(tx);
  return adc;
}

/// Times the full receiver over a back-to-back capture, repeats times after
/// one untimed warm-up pass.
inline BenchReport bench_throughput(const ExperimentConfig& cfg, std::size_t n_samples, int repeats) {
  require(repeats >= 1, "bench: repeats must be >= 1");
  TxFrame tx;
  const AdcResult adc = make_b2b_capture(cfg, n_samples, &tx);
  const auto rc = detail::rx_config(cfg, 0.0, nullptr);
  BenchReport b;
  b.n_samples = adc.signal.samples.size();
  b.required_samples_per_s = cfg.frontend.adc_rate_hz;
  std::vector<std::pair<double, StageTimings>> runs;
  for (int r = -1; r < repeats; ++r) {
    RxPipeline p(rc, tx.symbols);
    const auto t0 = std::chrono::steady_clock::now();
    const auto stream = stream_buffers(adc.signal.samples, rc.kk_plan);
    for (const auto& buf : stream.buffers) p.process_buffer(buf);
    p.flush();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r < 0) continue;  // warm-up pass
    b.samples_per_s.push_back(static_cast<double>(b.n_samples) / s);
    runs.emplace_back(b.samples_per_s.back(), p.timings());
  }
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& c) { return a.first < c.first; });
  b.median_samples_per_s = runs[runs.size() / 2].first;
  b.median_timings = runs[runs.size() / 2].second;
  for (double v : b.samples_per_s) b.max_deviation = std::max(b.max_deviation, std::abs(v / b.median_samples_per_s - 1.0));
  return b;
}

inline nlohmann::json to_json(const BenchReport& b) {
  const auto& t = b.median_timings;
  auto rate = [&](double s) { return s > 0.0 ? nlohmann::json(static_cast<double>(b.n_samples) / s) : nlohmann::json(nullptr); };
  return {{"schema_version", report_schema_version},
          {"kind", "bench"},
          {"n_samples", b.n_samples},
          {"samples_per_s", b.samples_per_s},
          {"median_samples_per_s", b.median_samples_per_s},
          {"max_deviation", b.max_deviation},
          {"required_samples_per_s", b.required_samples_per_s},
          {"realtime_fraction", b.median_samples_per_s / b.required_samples_per_s},
          {"stages",
           {{"kk", {{"seconds", t.kk_s}, {"samples_per_s", rate(t.kk_s)}}},
            {"carrier", {{"seconds", t.carrier_s}, {"samples_per_s", rate(t.carrier_s)}}},
            {"static_eq", {{"seconds", t.static_eq_s}, {"samples_per_s", rate(t.static_eq_s)}}},
            {"ddlms", {{"seconds", t.ddlms_s}, {"samples_per_s", rate(t.ddlms_s)}}}}}};
}

// ---------------------------------------------------------------------------
// continuous streaming

struct StreamingReport {
  std::size_t adc_samples = 0;  // processed, in whole buffers
  std::size_t symbols = 0;
  std::size_t evaluated_bits = 0;
  std::size_t errors = 0;
  bool diverged = false;
  std::size_t kk_zero_blocks = 0;
  std::vector<WindowQ> windows;
  double steady_q_mean_db = 0.0;
  double steady_q_std_db = 0.0;  // over windows after the first
  double frame_time_s = 0.0;
};

/// Continuous receive of at least adc_samples ADC samples. The transmit frame
/// (cfg.tx) repeats without a break and is propagated once without noise over
/// the linear link; every repetition then gets fresh link ASE (the summed
/// per-amplifier variance, exact for a linear link) and optional receiver
/// noise loading before detection. The ADC full scale is fixed from the
/// first repetition.
inline StreamingReport run_streaming(const ExperimentConfig& cfg, std::size_t adc_samples, double window_s) {
  cfg.validate();
  require(!cfg.link.nonlinearity_enabled, "run_streaming: needs a linear link");
  const double frame_s = static_cast<double>(cfg.tx.n_symbols) / cfg.tx.baud_hz;
  require(std::abs(std::remainder(cfg.tx.tone_freq_hz * frame_s, 1.0)) < 1e-6,
          "run_streaming: frame must hold a whole number of tone cycles");
  const TxFrame tx = generate_tx(cfg.tx);
  ComplexSignal x = resample_to(tx.waveform, cfg.link_sample_rate_hz);
  LinkConfig quiet = cfg.link;
  quiet.ase_enabled = false;
  quiet.phase_noise_linewidth_hz = 0.0;
  quiet.monitor_every_n_spans = 0;
  if (quiet.spans.empty()) {
    normalize_power(x, quiet.launch_power_w());
  } else {
    x = propagate_link(x, quiet, 0).final_signal;
  }
  double ase_var = 0.0;
  if (cfg.link.ase_enabled)
    for (const auto& s : cfg.link.spans)
      ase_var += amplifier_noise_variance(s, cfg.link.edfa_noise_figure_db, cfg.link.center_wavelength_nm,
                                          cfg.link_sample_rate_hz);

  StaticTapsReport taps;
  const auto rc = detail::rx_config(cfg, cfg.link.accumulated_dispersion_ps_nm(cfg.link.spans.size()), &taps);
  RxPipeline p(rc, tx.symbols);
  const auto& c = p.constellation();
  const std::size_t bps = static_cast<std::size_t>(c.bits_per_symbol());
  const std::size_t skip = cfg.rx.ddlms.startup_symbols + cfg.rx.guard_symbols;
  const std::size_t frame_bits = tx.bits.size();

  FrontendConfig fe = cfg.frontend;
  StreamingReport rep;
  rep.frame_time_s = frame_s;
  WindowedQ wq(cfg.tx.baud_hz * static_cast<double>(bps), window_s);
  std::vector<double> pending;  // ADC samples not yet in a full buffer
  std::vector<double> prev_tail(rc.kk_plan.hop, 0.0);
  std::size_t buffer_index = 0;
  std::size_t sym = 0;
  std::optional<std::size_t> offset_bits;
  std::vector<std::uint8_t> first_bits;

  auto consume = [&](DdlmsOutput out) {
    const auto bits = demap(out.decisions, c);
    for (std::size_t k = 0; k < out.decisions.size(); ++k, ++sym) {
      if (sym < skip) continue;
      const std::size_t off = offset_bits.value_or(0);
      if (!offset_bits) {
        first_bits.insert(first_bits.end(), bits.begin() + static_cast<std::ptrdiff_t>(k * bps),
                          bits.begin() + static_cast<std::ptrdiff_t>((k + 1) * bps));
        if (first_bits.size() >= std::max<std::size_t>(frame_bits, 1u << 14)) {
          const auto s = frame_sync(first_bits, tx.bits);
          offset_bits = (s.offset + frame_bits - (skip * bps) % frame_bits) % frame_bits;
          std::vector<std::uint8_t> err(first_bits.size());
          const std::size_t base = skip * bps;
          for (std::size_t i = 0; i < first_bits.size(); ++i)
            err[i] = first_bits[i] != tx.bits[(base + i + *offset_bits) % frame_bits];
          for (auto e : err) rep.errors += e;
          rep.evaluated_bits += err.size();
          wq.add(err);
          first_bits.clear();
        }
        continue;
      }
      std::uint8_t err[8];
      for (std::size_t b = 0; b < bps; ++b) {
        err[b] = bits[k * bps + b] != tx.bits[(sym * bps + b + off) % frame_bits];
        rep.errors += err[b];
      }
      rep.evaluated_bits += bps;
      wq.add(std::span<const std::uint8_t>(err, bps));
    }
  };

  std::size_t chunk = 0;
  while (rep.adc_samples < adc_samples) {
    ComplexSignal y = x;
    if (ase_var > 0.0) {
      auto rng = detail::make_rng(cfg.seed, 0x57AE0000 + chunk);
      detail::add_complex_gaussian(y.samples, ase_var, rng);
    }
    if (cfg.rx_osnr_db) y = add_ase(y, *cfg.rx_osnr_db, detail::derive_seed(cfg.seed, 0x57A00000 + chunk));
    if (std::abs(y.sample_rate_hz - cfg.detector_sample_rate_hz) > 1e-6 * y.sample_rate_hz)
      y = resample_to(y, cfg.detector_sample_rate_hz);
    RealSignal current = photodetect(y, fe);
    if (fe.electrical_noise_std > 0.0)
      current = add_electrical_noise(current, fe.electrical_noise_std, detail::derive_seed(cfg.seed, 0xE1EC0000 + chunk));
    AdcResult adc = adc_quantize(current, fe);
    if (!fe.adc_full_scale) fe.adc_full_scale = adc.full_scale;
    pending.insert(pending.end(), adc.signal.samples.begin(), adc.signal.samples.end());
    ++chunk;
    std::size_t used = 0;
    while (pending.size() - used >= rc.kk_plan.buffer_len) {
      StreamBuffer b;
      b.index = buffer_index++;
      b.samples = std::span<const double>(pending).subspan(used, rc.kk_plan.buffer_len);
      b.valid_length = rc.kk_plan.buffer_len;
      b.tail = prev_tail;
      p.process_buffer(b);
      prev_tail.assign(b.samples.end() - static_cast<std::ptrdiff_t>(rc.kk_plan.hop), b.samples.end());
      used += rc.kk_plan.buffer_len;
      rep.adc_samples += rc.kk_plan.buffer_len;
      consume(p.take_output());
    }
    pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(used));
  }
  rep.symbols = sym;
  rep.diverged = p.equalizer().diverged();
  for (const auto& d : p.block_diagnostics()) rep.kk_zero_blocks += d.zero_block;
  rep.windows = wq.windows();
  if (rep.windows.size() >= 2) {
    double s = 0.0, s2 = 0.0;
    const std::size_t n = rep.windows.size() - 1;
    for (std::size_t i = 1; i < rep.windows.size(); ++i) {
      s += rep.windows[i].q_db;
      s2 += rep.windows[i].q_db * rep.windows[i].q_db;
    }
    rep.steady_q_mean_db = s / static_cast<double>(n);
    rep.steady_q_std_db = std::sqrt(std::max(0.0, s2 / static_cast<double>(n) - rep.steady_q_mean_db * rep.steady_q_mean_db));
  }
  return rep;
}

inline nlohmann::json to_json(const StreamingReport& r) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& x : r.windows)
    w.push_back({{"time_s", x.time_s}, {"q_db", json_number(x.q_db)}, {"n_errors", x.n_errors}, {"n_bits", x.n_bits}});
  return {{"schema_version", report_schema_version},
          {"kind", "stream"},
          {"adc_samples", r.adc_samples},
          {"symbols", r.symbols},
          {"evaluated_bits", r.evaluated_bits},
          {"errors", r.errors},
          {"diverged", r.diverged},
          {"kk_zero_blocks", r.kk_zero_blocks},
          {"steady_q_mean_db", r.steady_q_mean_db},
          {"steady_q_std_db", r.steady_q_std_db},
          {"windows", w}};
}

// ---------------------------------------------------------------------------
// output files

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw ParameterError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

/// Plot-ready CSV tables for a run: Q, BER and EVM against distance, net
/// throughput per FEC threshold, windowed Q and constellation samples.
inline std::vector<std::filesystem::path> write_plot_data(const RunReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  auto open = [&](const char* name) {
    files.push_back(dir / name);
    std::ofstream os(files.back());
    if (!os) throw ParameterError("cannot write " + files.back().string());
    return os;
  };
  {
    auto os = open("q_vs_distance.csv");
    os << "distance_km,status,q_db,ber,evm_pct,osnr_db\n";
    for (const auto& p : rep.points) {
      os << p.distance_km << ',' << p.status << ',';
      if (p.ok())
        os << p.metrics.q_db << ',' << p.metrics.ber << ',' << p.metrics.evm_pct;
      else
        os << ",,";
      os << ',' << p.osnr_db << '\n';
    }
  }
  {
    auto os = open("throughput_vs_distance.csv");
    os << "fec,distance_km,q_threshold_db,meets_threshold,net_throughput_bps\n";
    for (const auto& f : rep.config.metrics.fec) {
      const double qt = q_threshold_db(f);
      const double rate = net_throughput(rep.config.tx.baud_hz, rep.config.tx.format, f);
      for (const auto& p : rep.points) {
        const bool meets = p.ok() && p.metrics.q_db >= qt;
        os << '"' << f.name << "\"," << p.distance_km << ',' << qt << ',' << (meets ? 1 : 0) << ','
           << (meets ? rate : 0.0) << '\n';
      }
    }
  }
  {
    auto os = open("windowed_q.csv");
    os << "distance_km,time_s,q_db,n_errors,n_bits\n";
    for (const auto& p : rep.points)
      for (const auto& w : p.metrics.windowed_q)
        os << p.distance_km << ',' << w.time_s << ',' << w.q_db << ',' << w.n_errors << ',' << w.n_bits << '\n';
  }
  {
    auto os = open("constellation.csv");
    os << "distance_km,re,im\n";
    for (const auto& p : rep.points)
      for (const auto& s : p.soft_tail) os << p.distance_km << ',' << s.real() << ',' << s.imag() << '\n';
  }
  return files;
}

}  // namespace kkm
