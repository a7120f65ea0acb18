#pragma once

// Streaming receiver: ADC samples -> KK field -> carrier removal -> downshift
// -> static EQ + matched filter + 4:2 decimation -> WL-DDLMS -> decisions.
//
// Every stage removes its own latency, so receive symbol k lines up with
// transmit symbol k and the whole chain is invariant to how the input is cut
// into pushes.

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kkmodem/constellation.hpp"
#include "kkmodem/ddlms.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/kk.hpp"
#include "kkmodem/signal.hpp"
#include "kkmodem/static_eq.hpp"

namespace kkm {

struct RxPipelineConfig {
  BlockPlan kk_plan{};
  FirFilter static_taps = identity_filter(2e9);  // at sps_out
  double tone_freq_hz = 0.516e9;
  double symbol_rate_hz = 1e9;
  double rolloff = 0.01;
  int sps_in = 4;
  int sps_out = 2;
  bool matched_filter = true;
  int matched_span_symbols = 256;
  std::size_t static_fft_size = 0;  // 0 picks the smallest that fits
  double dc_lambda = 1.0 / 4096.0;
  DdlmsConfig ddlms{};
  int format = 4;

  double input_rate_hz() const { return symbol_rate_hz * sps_in; }

  void validate() const {
    kk_plan.validate();
    validate_filter();
    require(sps_in == 2 * sps_out && sps_out == 2, "RxPipelineConfig: sps_in / sps_out must be 4 / 2");
    require(symbol_rate_hz > 0.0, "RxPipelineConfig: symbol rate must be positive");
    require(std::abs(tone_freq_hz) < input_rate_hz() / 2.0, "RxPipelineConfig: tone beyond Nyquist");
    ddlms.validate();
    make_constellation(format);
  }

  void validate_filter() const {
    kkm::validate(static_taps);
    require(static_taps.taps.size() % 2 == 1, "RxPipelineConfig: static tap count must be odd");
    require(std::abs(static_taps.nominal_rate_hz - symbol_rate_hz * sps_out) < 1e-6 * symbol_rate_hz,
            "RxPipelineConfig: static taps must be defined at sps_out");
  }

  /// Static taps zero-stuffed to the input rate, cascaded with the matched RRC.
  FirFilter combined_filter() const {
    FirFilter f = zero_stuff(static_taps, static_cast<std::size_t>(sps_in / sps_out));
    if (matched_filter) f = cascade(f, design_rrc(rolloff, sps_in, matched_span_symbols, symbol_rate_hz));
    return f;
  }
};

struct StageTimings {
  double kk_s = 0.0;
  double carrier_s = 0.0;
  double static_eq_s = 0.0;
  double ddlms_s = 0.0;

  double total() const { return kk_s + carrier_s + static_eq_s + ddlms_s; }
};

/// One fixed-size slice of an ADC stream with the predecessor's last hop
/// samples. valid_length < samples.size() marks the zero-padded final buffer.
struct StreamBuffer {
  std::size_t index = 0;
  std::size_t offset = 0;
  std::span<const double> samples;
  std::span<const double> tail;
  std::size_t valid_length = 0;

  bool padded() const { return valid_length < samples.size(); }
};

/// Owns the zero padding backing the stream buffers.
struct BufferedStream {
  std::vector<StreamBuffer> buffers;
  std::vector<double> zeros;     // hop zeros: tail of the first buffer
  std::vector<double> last_pad;  // padded copy of a short final buffer
};

inline BufferedStream stream_buffers(std::span<const double> stream, const BlockPlan& plan) {
  plan.validate();
  require(stream.size() >= plan.hop, "stream_buffers: stream shorter than one hop");
  BufferedStream s;
  s.zeros.assign(plan.hop, 0.0);
  const std::size_t n = stream.size();
  const std::size_t count = (n + plan.buffer_len - 1) / plan.buffer_len;
  s.buffers.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    StreamBuffer buf;
    buf.index = b;
    buf.offset = b * plan.buffer_len;
    buf.valid_length = std::min(plan.buffer_len, n - buf.offset);
    if (buf.valid_length == plan.buffer_len) {
      buf.samples = stream.subspan(buf.offset, plan.buffer_len);
    } else {
      s.last_pad.assign(plan.buffer_len, 0.0);
      std::copy_n(stream.begin() + static_cast<std::ptrdiff_t>(buf.offset), buf.valid_length, s.last_pad.begin());
      buf.samples = s.last_pad;
    }
    buf.tail = b == 0 ? std::span<const double>(s.zeros) : stream.subspan(buf.offset - plan.hop, plan.hop);
    s.buffers.push_back(buf);
  }
  return s;
}

struct BufferDiagnostics {
  std::size_t buffer_index = 0;
  std::size_t samples = 0;
  std::size_t clamp_count = 0;
  std::size_t zero_blocks = 0;
  bool diverged = false;
  bool padded = false;
};

class RxPipeline {
 public:
  explicit RxPipeline(RxPipelineConfig cfg, std::vector<cplx> training = {})
      : cfg_((cfg.validate(), std::move(cfg))),
        constellation_(make_constellation(cfg_.format)),
        kk_(cfg_.kk_plan.fft_size, sideband_for_tone(cfg_.tone_freq_hz)),
        dc_(cfg_.dc_lambda),
        nco_(cfg_.tone_freq_hz, cfg_.input_rate_hz()),
        eq_(make_eq(cfg_)),
        ddlms_(cfg_.ddlms, constellation_, std::move(training)) {}

  const RxPipelineConfig& config() const { return cfg_; }
  const ConstellationSpec& constellation() const { return constellation_; }

  /// ADC samples at sps_in.
  void push(std::span<const double> adc) {
    require(!baseband_, "RxPipeline: cannot mix ADC and baseband input");
    direct_ = true;
    input_samples_ += adc.size();
    field_.clear();
    timed(timings_.kk_s, [&] { kk_.push(adc, field_); });
    after_kk();
  }

  /// Complex baseband at sps_in with the payload already at DC; the KK,
  /// carrier removal and downshift stages are skipped.
  void push_baseband(std::span<const cplx> field) {
    require(!direct_, "RxPipeline: cannot mix ADC and baseband input");
    baseband_ = true;
    input_samples_ += field.size();
    field_.assign(field.begin(), field.end());
    after_downshift();
  }

  void flush() {
    require(!flushed_, "RxPipeline: already flushed");
    flushed_ = true;
    field_.clear();
    if (!baseband_) {
      timed(timings_.kk_s, [&] { kk_.flush(field_); });
      timed(timings_.carrier_s, [&] {
        dc_.process(field_);
        nco_.mix(field_);
      });
    }
    eq_out_.clear();
    timed(timings_.static_eq_s, [&] {
      eq_.push(field_, eq_out_);
      eq_.flush(eq_out_);
    });
    timed(timings_.ddlms_s, [&] {
      ddlms_.push(eq_out_, out_);
      ddlms_.flush(out_);
    });
  }

  /// Pushes one stream buffer, checking that its carried tail matches the
  /// samples this pipeline saw last.
  BufferDiagnostics process_buffer(const StreamBuffer& buf) {
    require(buf.tail.size() == cfg_.kk_plan.hop, "RxPipeline: buffer tail length != hop");
    if (!history_.empty())
      require(std::equal(buf.tail.begin(), buf.tail.end(), history_.begin()),
              "RxPipeline: buffer tail does not continue the previous buffer");
    const std::size_t clamps_before = static_cast<std::size_t>(kk_.total_clamps());
    const std::size_t diag_before = kk_.diagnostics().size();
    const auto valid = buf.samples.first(buf.valid_length);
    push(valid);
    if (valid.size() >= cfg_.kk_plan.hop) history_.assign(valid.end() - static_cast<std::ptrdiff_t>(cfg_.kk_plan.hop), valid.end());
    BufferDiagnostics d;
    d.buffer_index = buf.index;
    d.samples = valid.size();
    d.clamp_count = static_cast<std::size_t>(kk_.total_clamps()) - clamps_before;
    for (std::size_t i = diag_before; i < kk_.diagnostics().size(); ++i) d.zero_blocks += kk_.diagnostics()[i].zero_block;
    d.diverged = ddlms_.diverged();
    d.padded = buf.padded();
    buffer_diag_.push_back(d);
    return d;
  }

  /// Accumulated equalizer output (soft symbols and decisions).
  const DdlmsOutput& output() const { return out_; }

  /// Moves out the accumulated output, leaving it empty.
  DdlmsOutput take_output() {
    DdlmsOutput o = std::move(out_);
    out_ = {};
    return o;
  }

  std::vector<std::uint8_t> bits(DemapStats* stats = nullptr) const { return demap(out_.decisions, constellation_, stats); }

  const StageTimings& timings() const { return timings_; }
  const std::vector<KkBlockDiagnostics>& block_diagnostics() const { return kk_.diagnostics(); }
  const std::vector<BufferDiagnostics>& buffer_diagnostics() const { return buffer_diag_; }
  std::uint64_t kk_blocks() const { return kk_.blocks(); }
  const DdlmsEqualizer& equalizer() const { return ddlms_; }
  std::uint64_t input_samples() const { return input_samples_; }

  /// One JSON object per KK block that clamped or was empty, plus one per
  /// pushed buffer.
  void write_diagnostics_jsonl(std::ostream& os) const {
    for (const auto& b : kk_.diagnostics())
      os << nlohmann::json{{"type", "block"}, {"block_index", b.block_index}, {"clamp_count", b.clamp_count},
                           {"zero_block", b.zero_block}}
                .dump()
         << '\n';
    for (const auto& b : buffer_diag_)
      os << nlohmann::json{{"type", "buffer"},       {"buffer_index", b.buffer_index}, {"samples", b.samples},
                           {"clamp_count", b.clamp_count}, {"zero_blocks", b.zero_blocks},  {"diverged", b.diverged},
                           {"padded", b.padded}}
                .dump()
         << '\n';
  }

 private:
  static StaticEqualizer make_eq(const RxPipelineConfig& cfg) {
    const FirFilter f = cfg.combined_filter();
    const std::size_t n = cfg.static_fft_size ? cfg.static_fft_size : static_eq_fft_size(f.taps.size(), 4096);
    return StaticEqualizer(f, n);
  }

  template <typename Fn>
  static void timed(double& acc, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    acc += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  void after_kk() {
    timed(timings_.carrier_s, [&] {
      dc_.process(field_);
      nco_.mix(field_);
    });
    after_downshift();
  }

  void after_downshift() {
    eq_out_.clear();
    timed(timings_.static_eq_s, [&] { eq_.push(field_, eq_out_); });
    timed(timings_.ddlms_s, [&] { ddlms_.push(eq_out_, out_); });
  }

  RxPipelineConfig cfg_;
  ConstellationSpec constellation_;
  KkStage kk_;
  DcRemover dc_;
  Nco nco_;
  StaticEqualizer eq_;
  DdlmsEqualizer ddlms_;
  std::vector<cplx> field_;
  std::vector<cplx> eq_out_;
  DdlmsOutput out_;
  StageTimings timings_;
  std::vector<double> history_;
  std::vector<BufferDiagnostics> buffer_diag_;
  std::uint64_t input_samples_ = 0;
  bool direct_ = false;
  bool baseband_ = false;
  bool flushed_ = false;
};

/// Runs a whole ADC stream through a fresh pipeline, buffer by buffer.
inline DdlmsOutput run_pipeline(const RxPipelineConfig& cfg, std::span<const double> adc,
                                std::vector<cplx> training = {}, StageTimings* timings = nullptr) {
  RxPipeline p(cfg, std::move(training));
  auto stream = stream_buffers(adc, cfg.kk_plan);
  for (const auto& b : stream.buffers) p.process_buffer(b);
  p.flush();
  if (timings) *timings = p.timings();
  return p.take_output();
}

}  // namespace kkm
