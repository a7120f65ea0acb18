#pragma once

// Experiment configuration: JSON (de)serialisation and named presets.
//
// Parsing is strict: unknown keys are rejected so that typos do not silently
// fall back to defaults. A config file is overlaid on a preset.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "kkmodem/channel.hpp"
#include "kkmodem/ddlms.hpp"
#include "kkmodem/frontend.hpp"
#include "kkmodem/metrics.hpp"
#include "kkmodem/signal.hpp"
#include "kkmodem/txdsp.hpp"

namespace kkm {

struct RxSettings {
  BlockPlan kk_plan{};
  std::size_t static_taps = 203;
  // Fold the inverse ADC anti-alias response over the payload band into the
  // static taps.
  bool compensate_adc_response = true;
  bool matched_filter = true;
  int matched_span_symbols = 256;
  std::size_t static_fft_size = 0;
  double dc_lambda = 1.0 / 4096.0;
  DdlmsConfig ddlms{};
  // Symbols excluded from BER after the training period and before the end
  // of a finite capture (filter edges).
  std::size_t guard_symbols = 1024;
};

struct MetricsSettings {
  std::vector<FecThreshold> fec = {{"HD-FEC 6.7% OH (placeholder limit, non-normative)", 0.067, 3.8e-3},
                                   {"HD-FEC 20% OH (placeholder limit, non-normative)", 0.20, 2.4e-2}};
  double window_s = 0.021;
};

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"cspr_db", "rel_launch_db", "distance_km", "format", "osnr_db"};
  return axes;
}

struct SweepSettings {
  std::string axis;
  std::vector<double> values;
  bool common_random_numbers = true;

  void validate() const {
    require(std::find(sweep_axes().begin(), sweep_axes().end(), axis) != sweep_axes().end(),
            "sweep: unknown axis '" + axis + "'");
    require(!values.empty(), "sweep: values must be nonempty");
  }
};

struct ExperimentConfig {
  std::string preset = "paper";
  TxConfig tx{};
  LinkConfig link{};
  FrontendConfig frontend{};
  RxSettings rx{};
  MetricsSettings metrics{};
  std::optional<SweepSettings> sweep;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  double link_sample_rate_hz = 16e9;
  double detector_sample_rate_hz = 16e9;
  std::optional<double> rx_osnr_db;  // extra noise loading in front of the receiver
  bool write_captures = false;

  void validate() const {
    tx.validate();
    for (const auto& s : link.spans) s.validate();
    require(link.reference_channels >= 1, "link: reference_channels must be >= 1");
    require(link.ssfm_step_km > 0.0, "link: ssfm_step_km must be positive");
    frontend.validate();
    rx.kk_plan.validate();
    rx.ddlms.validate();
    require(rx.static_taps % 2 == 1, "rx: static_taps must be odd");
    require(std::abs(frontend.adc_rate_hz - 4.0 * tx.baud_hz) < 1e-6 * tx.baud_hz,
            "frontend: adc rate must be 4 samples per symbol");
    require(link_sample_rate_hz > 2.0 * tx.baud_hz && detector_sample_rate_hz > 0.0,
            "sample rates must exceed the signal bandwidth");
    for (const auto& f : metrics.fec) f.validate();
    require(metrics.window_s > 0.0, "metrics: window_s must be positive");
    if (sweep) sweep->validate();
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.count(it.key()) > 0, where + ": unknown key '" + it.key() + "'");
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& v) {
  if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// to_json

inline nlohmann::json to_json(const TxConfig& c) {
  return {{"format", c.format},       {"baud_hz", c.baud_hz},         {"rolloff", c.rolloff},
          {"rrc_span_symbols", c.rrc_span_symbols}, {"dac_rate_hz", c.dac_rate_hz}, {"tone_freq_hz", c.tone_freq_hz},
          {"cspr_db", c.cspr_db},     {"n_symbols", c.n_symbols},     {"prbs_degree", c.prbs_degree},
          {"prbs_seed", c.prbs_seed}};
}

inline nlohmann::json to_json(const FiberSpan& s) {
  return {{"length_km", s.length_km},
          {"loss_db_per_km", s.loss_db_per_km},
          {"dispersion_ps_nm_km", s.dispersion_ps_nm_km},
          {"gamma_per_W_km", s.gamma_per_W_km},
          {"aeff_um2", s.aeff_um2}};
}

inline bool same_span(const FiberSpan& a, const FiberSpan& b) {
  return a.length_km == b.length_km && a.loss_db_per_km == b.loss_db_per_km &&
         a.dispersion_ps_nm_km == b.dispersion_ps_nm_km && a.gamma_per_W_km == b.gamma_per_W_km &&
         a.aeff_um2 == b.aeff_um2;
}

inline nlohmann::json to_json(const LinkConfig& l) {
  nlohmann::json j = {{"total_launch_dbm", l.total_launch_dbm},
                      {"rel_launch_db", l.rel_launch_db},
                      {"reference_channels", l.reference_channels},
                      {"edfa_noise_figure_db", l.edfa_noise_figure_db},
                      {"center_wavelength_nm", l.center_wavelength_nm},
                      {"monitor_every_n_spans", l.monitor_every_n_spans},
                      {"nonlinearity_enabled", l.nonlinearity_enabled},
                      {"ssfm_step_km", l.ssfm_step_km},
                      {"phase_noise_linewidth_hz", l.phase_noise_linewidth_hz},
                      {"ase_enabled", l.ase_enabled}};
  const bool uniform =
      !l.spans.empty() && std::all_of(l.spans.begin(), l.spans.end(), [&](const FiberSpan& s) { return same_span(s, l.spans[0]); });
  if (uniform || l.spans.empty()) {
    j["n_spans"] = l.spans.size();
    j["span"] = to_json(l.spans.empty() ? FiberSpan{} : l.spans[0]);
  } else {
    j["spans"] = nlohmann::json::array();
    for (const auto& s : l.spans) j["spans"].push_back(to_json(s));
  }
  return j;
}

inline nlohmann::json to_json(const FrontendConfig& f) {
  return {{"obpf_bandwidth_hz", f.obpf_bandwidth_hz},
          {"obpf_order", f.obpf_order},
          {"pd_bandwidth_hz", f.pd_bandwidth_hz},
          {"pd_filter_order", f.pd_filter_order},
          {"adc_rate_hz", f.adc_rate_hz},
          {"adc_bandwidth_hz", f.adc_bandwidth_hz},
          {"adc_filter_order", f.adc_filter_order},
          {"adc_bits", f.adc_bits},
          {"adc_full_scale", f.adc_full_scale ? nlohmann::json(*f.adc_full_scale) : nlohmann::json(nullptr)},
          {"auto_scale_rms_multiple", f.auto_scale_rms_multiple},
          {"quantization_enabled", f.quantization_enabled},
          {"electrical_noise_std", f.electrical_noise_std}};
}

inline nlohmann::json to_json(const DdlmsConfig& d) {
  return {{"n_taps", d.n_taps},
          {"mu", d.mu},
          {"startup_symbols", d.startup_symbols},
          {"widely_linear", d.widely_linear},
          {"acquisition_symbols", d.acquisition_symbols},
          {"auto_gain", d.auto_gain},
          {"data_aided_init", d.data_aided_init},
          {"timing_phase", d.timing_phase ? nlohmann::json(*d.timing_phase) : nlohmann::json(nullptr)},
          {"divergence_radius_multiple", d.divergence_radius_multiple},
          {"divergence_run", d.divergence_run}};
}

inline nlohmann::json to_json(const RxSettings& r) {
  return {{"kk_fft_size", r.kk_plan.fft_size},
          {"buffer_len", r.kk_plan.buffer_len},
          {"static_taps", r.static_taps},
          {"compensate_adc_response", r.compensate_adc_response},
          {"matched_filter", r.matched_filter},
          {"matched_span_symbols", r.matched_span_symbols},
          {"static_fft_size", r.static_fft_size},
          {"dc_lambda", r.dc_lambda},
          {"ddlms", to_json(r.ddlms)},
          {"guard_symbols", r.guard_symbols}};
}

inline nlohmann::json to_json(const MetricsSettings& m) {
  nlohmann::json fec = nlohmann::json::array();
  for (const auto& f : m.fec)
    fec.push_back({{"name", f.name}, {"overhead_fraction", f.overhead_fraction}, {"ber_limit", f.ber_limit}});
  return {{"fec", fec}, {"window_s", m.window_s}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"preset", c.preset},
                      {"tx", to_json(c.tx)},
                      {"link", to_json(c.link)},
                      {"frontend", to_json(c.frontend)},
                      {"rx", to_json(c.rx)},
                      {"metrics", to_json(c.metrics)},
                      {"seed", c.seed},
                      {"output_dir", c.output_dir},
                      {"link_sample_rate_hz", c.link_sample_rate_hz},
                      {"detector_sample_rate_hz", c.detector_sample_rate_hz},
                      {"rx_osnr_db", c.rx_osnr_db ? nlohmann::json(*c.rx_osnr_db) : nlohmann::json(nullptr)},
                      {"write_captures", c.write_captures}};
  if (c.sweep)
    j["sweep"] = {{"axis", c.sweep->axis},
                  {"values", c.sweep->values},
                  {"common_random_numbers", c.sweep->common_random_numbers}};
  return j;
}

// ---------------------------------------------------------------------------
// overlay from JSON

inline void overlay(TxConfig& c, const nlohmann::json& j) {
  detail::check_keys(j, {"format", "baud_hz", "rolloff", "rrc_span_symbols", "dac_rate_hz", "tone_freq_hz", "cspr_db",
                         "n_symbols", "prbs_degree", "prbs_seed"},
                     "tx");
  detail::get_if(j, "format", c.format);
  detail::get_if(j, "baud_hz", c.baud_hz);
  detail::get_if(j, "rolloff", c.rolloff);
  detail::get_if(j, "rrc_span_symbols", c.rrc_span_symbols);
  detail::get_if(j, "dac_rate_hz", c.dac_rate_hz);
  detail::get_if(j, "tone_freq_hz", c.tone_freq_hz);
  detail::get_if(j, "cspr_db", c.cspr_db);
  detail::get_if(j, "n_symbols", c.n_symbols);
  detail::get_if(j, "prbs_degree", c.prbs_degree);
  detail::get_if(j, "prbs_seed", c.prbs_seed);
}

inline void overlay(FiberSpan& s, const nlohmann::json& j) {
  detail::check_keys(j, {"length_km", "loss_db_per_km", "dispersion_ps_nm_km", "gamma_per_W_km", "aeff_um2"}, "span");
  detail::get_if(j, "length_km", s.length_km);
  detail::get_if(j, "loss_db_per_km", s.loss_db_per_km);
  detail::get_if(j, "dispersion_ps_nm_km", s.dispersion_ps_nm_km);
  detail::get_if(j, "gamma_per_W_km", s.gamma_per_W_km);
  detail::get_if(j, "aeff_um2", s.aeff_um2);
}

inline void overlay(LinkConfig& l, const nlohmann::json& j) {
  detail::check_keys(j, {"spans", "n_spans", "span", "total_launch_dbm", "rel_launch_db", "reference_channels",
                         "edfa_noise_figure_db", "center_wavelength_nm", "monitor_every_n_spans", "nonlinearity_enabled",
                         "ssfm_step_km", "phase_noise_linewidth_hz", "ase_enabled"},
                     "link");
  if (j.contains("spans")) {
    require(!j.contains("n_spans") && !j.contains("span"), "link: give either spans or n_spans/span");
    l.spans.clear();
    for (const auto& s : j.at("spans")) {
      FiberSpan f;
      overlay(f, s);
      l.spans.push_back(f);
    }
  } else if (j.contains("n_spans") || j.contains("span")) {
    FiberSpan f = l.spans.empty() ? FiberSpan{} : l.spans[0];
    if (j.contains("span")) overlay(f, j.at("span"));
    std::size_t n = l.spans.size();
    detail::get_if(j, "n_spans", n);
    l.spans.assign(n, f);
  }
  detail::get_if(j, "total_launch_dbm", l.total_launch_dbm);
  detail::get_if(j, "rel_launch_db", l.rel_launch_db);
  detail::get_if(j, "reference_channels", l.reference_channels);
  detail::get_if(j, "edfa_noise_figure_db", l.edfa_noise_figure_db);
  detail::get_if(j, "center_wavelength_nm", l.center_wavelength_nm);
  detail::get_if(j, "monitor_every_n_spans", l.monitor_every_n_spans);
  detail::get_if(j, "nonlinearity_enabled", l.nonlinearity_enabled);
  detail::get_if(j, "ssfm_step_km", l.ssfm_step_km);
  detail::get_if(j, "phase_noise_linewidth_hz", l.phase_noise_linewidth_hz);
  detail::get_if(j, "ase_enabled", l.ase_enabled);
}

inline void overlay(FrontendConfig& f, const nlohmann::json& j) {
  detail::check_keys(j, {"obpf_bandwidth_hz", "obpf_order", "pd_bandwidth_hz", "pd_filter_order", "adc_rate_hz",
                         "adc_bandwidth_hz", "adc_filter_order", "adc_bits", "adc_full_scale", "auto_scale_rms_multiple",
                         "quantization_enabled", "electrical_noise_std"},
                     "frontend");
  detail::get_if(j, "obpf_bandwidth_hz", f.obpf_bandwidth_hz);
  detail::get_if(j, "obpf_order", f.obpf_order);
  detail::get_if(j, "pd_bandwidth_hz", f.pd_bandwidth_hz);
  detail::get_if(j, "pd_filter_order", f.pd_filter_order);
  detail::get_if(j, "adc_rate_hz", f.adc_rate_hz);
  detail::get_if(j, "adc_bandwidth_hz", f.adc_bandwidth_hz);
  detail::get_if(j, "adc_filter_order", f.adc_filter_order);
  detail::get_if(j, "adc_bits", f.adc_bits);
  if (j.contains("adc_full_scale"))
    f.adc_full_scale = j.at("adc_full_scale").is_null() ? std::nullopt : std::optional<double>(j.at("adc_full_scale").get<double>());
  detail::get_if(j, "auto_scale_rms_multiple", f.auto_scale_rms_multiple);
  detail::get_if(j, "quantization_enabled", f.quantization_enabled);
  detail::get_if(j, "electrical_noise_std", f.electrical_noise_std);
}

inline void overlay(DdlmsConfig& d, const nlohmann::json& j) {
  detail::check_keys(j, {"n_taps", "mu", "startup_symbols", "widely_linear", "acquisition_symbols", "auto_gain",
                         "data_aided_init", "timing_phase", "divergence_radius_multiple", "divergence_run"},
                     "rx.ddlms");
  detail::get_if(j, "n_taps", d.n_taps);
  detail::get_if(j, "mu", d.mu);
  detail::get_if(j, "startup_symbols", d.startup_symbols);
  detail::get_if(j, "widely_linear", d.widely_linear);
  detail::get_if(j, "acquisition_symbols", d.acquisition_symbols);
  detail::get_if(j, "auto_gain", d.auto_gain);
  detail::get_if(j, "data_aided_init", d.data_aided_init);
  if (j.contains("timing_phase"))
    d.timing_phase = j.at("timing_phase").is_null() ? std::nullopt : std::optional<int>(j.at("timing_phase").get<int>());
  detail::get_if(j, "divergence_radius_multiple", d.divergence_radius_multiple);
  detail::get_if(j, "divergence_run", d.divergence_run);
}

inline void overlay(RxSettings& r, const nlohmann::json& j) {
  detail::check_keys(j, {"kk_fft_size", "buffer_len", "static_taps", "compensate_adc_response", "matched_filter", "matched_span_symbols",
                         "static_fft_size", "dc_lambda", "ddlms", "guard_symbols"},
                     "rx");
  std::size_t fft = r.kk_plan.fft_size, buf = r.kk_plan.buffer_len;
  detail::get_if(j, "kk_fft_size", fft);
  detail::get_if(j, "buffer_len", buf);
  r.kk_plan = BlockPlan::make(fft, buf);
  detail::get_if(j, "static_taps", r.static_taps);
  detail::get_if(j, "compensate_adc_response", r.compensate_adc_response);
  detail::get_if(j, "matched_filter", r.matched_filter);
  detail::get_if(j, "matched_span_symbols", r.matched_span_symbols);
  detail::get_if(j, "static_fft_size", r.static_fft_size);
  detail::get_if(j, "dc_lambda", r.dc_lambda);
  if (j.contains("ddlms")) overlay(r.ddlms, j.at("ddlms"));
  detail::get_if(j, "guard_symbols", r.guard_symbols);
}

inline void overlay(MetricsSettings& m, const nlohmann::json& j) {
  detail::check_keys(j, {"fec", "window_s"}, "metrics");
  if (j.contains("fec")) {
    m.fec.clear();
    for (const auto& f : j.at("fec")) {
      detail::check_keys(f, {"name", "overhead_fraction", "ber_limit"}, "metrics.fec");
      m.fec.push_back({f.at("name").get<std::string>(), f.at("overhead_fraction").get<double>(),
                       f.at("ber_limit").get<double>()});
    }
  }
  detail::get_if(j, "window_s", m.window_s);
}

inline void overlay(ExperimentConfig& c, const nlohmann::json& j) {
  detail::check_keys(j, {"preset", "tx", "link", "frontend", "rx", "metrics", "sweep", "seed", "output_dir",
                         "link_sample_rate_hz", "detector_sample_rate_hz", "rx_osnr_db", "write_captures", "comment"},
                     "config");
  if (j.contains("tx")) overlay(c.tx, j.at("tx"));
  if (j.contains("link")) overlay(c.link, j.at("link"));
  if (j.contains("frontend")) overlay(c.frontend, j.at("frontend"));
  if (j.contains("rx")) overlay(c.rx, j.at("rx"));
  if (j.contains("metrics")) overlay(c.metrics, j.at("metrics"));
  if (j.contains("sweep")) {
    if (j.at("sweep").is_null()) {
      c.sweep.reset();
    } else {
      const auto& s = j.at("sweep");
      detail::check_keys(s, {"axis", "values", "common_random_numbers"}, "sweep");
      SweepSettings sw;
      sw.axis = s.at("axis").get<std::string>();
      sw.values = s.at("values").get<std::vector<double>>();
      detail::get_if(s, "common_random_numbers", sw.common_random_numbers);
      c.sweep = sw;
    }
  }
  detail::get_if(j, "seed", c.seed);
  detail::get_if(j, "output_dir", c.output_dir);
  detail::get_if(j, "link_sample_rate_hz", c.link_sample_rate_hz);
  detail::get_if(j, "detector_sample_rate_hz", c.detector_sample_rate_hz);
  if (j.contains("rx_osnr_db"))
    c.rx_osnr_db = j.at("rx_osnr_db").is_null() ? std::nullopt : std::optional<double>(j.at("rx_osnr_db").get<double>());
  detail::get_if(j, "write_captures", c.write_captures);
}

// ---------------------------------------------------------------------------
// presets

/// Full-scale defaults: 2^20 symbols, 100 x 100 km spans, 2^22-sample buffers.
inline ExperimentConfig paper_preset() {
  ExperimentConfig c;
  c.preset = "paper";
  return c;
}

/// Desk-scale: 10^5 symbols, 10 spans monitored every 2, 2^18-sample buffers.
inline ExperimentConfig ci_preset() {
  ExperimentConfig c;
  c.preset = "ci";
  c.tx.n_symbols = 100000;
  c.link.spans.assign(10, FiberSpan{});
  c.link.monitor_every_n_spans = 2;
  c.rx.kk_plan = BlockPlan::make(1024, std::size_t{1} << 18);
  return c;
}

inline ExperimentConfig preset_config(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "ci") return ci_preset();
  throw ParameterError("unknown preset '" + name + "' (expected paper or ci)");
}

/// Preset named in the document (or fallback_preset) overlaid with the document.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& fallback_preset = "paper") {
  std::string preset = fallback_preset;
  if (j.contains("preset")) preset = j.at("preset").get<std::string>();
  ExperimentConfig c = preset_config(preset);
  overlay(c, j);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path, const std::string& fallback_preset = "paper") {
  std::ifstream is(path);
  if (!is) throw ParameterError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("config " + path + ": " + e.what());
  }
  return config_from_json(j, fallback_preset);
}

}  // namespace kkm
