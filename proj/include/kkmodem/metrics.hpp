#pragma once

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kkmodem/common.hpp"
#include "kkmodem/fft.hpp"

namespace kkm {

struct FecThreshold {
  std::string name;
  double overhead_fraction = 0.0;
  double ber_limit = 0.0;

  void validate() const {
    require(overhead_fraction >= 0.0, "FecThreshold: overhead must be >= 0");
    require(ber_limit > 0.0 && ber_limit < 0.5, "FecThreshold: ber_limit must be in (0, 0.5)");
  }
};

/// Q factor in dB from a bit error ratio: 20 log10(sqrt2 erfcinv(2 ber)).
/// ber = 0 gives +inf (error free); ber >= 0.5 has no Q.
inline double q_from_ber(double ber) {
  require(ber >= 0.0 && ber < 0.5, "q_from_ber: ber must be in [0, 0.5)");
  if (ber == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(std::sqrt(2.0) * boost::math::erfc_inv(2.0 * ber));
}

/// Inverse of q_from_ber.
inline double ber_from_q(double q_db) {
  const double q = std::pow(10.0, q_db / 20.0);
  return 0.5 * std::erfc(q / std::sqrt(2.0));
}

/// Q required to meet a FEC threshold.
inline double q_threshold_db(const FecThreshold& fec) {
  fec.validate();
  return q_from_ber(fec.ber_limit);
}

inline double net_throughput(double baud_hz, int order, const FecThreshold& fec) {
  require(order >= 2 && (order & (order - 1)) == 0, "net_throughput: order must be a power of two");
  require(fec.overhead_fraction >= 0.0, "net_throughput: overhead must be >= 0");
  return baud_hz * std::log2(static_cast<double>(order)) / (1.0 + fec.overhead_fraction);
}

/// Farthest distance whose Q meets the threshold (no interpolation).
inline std::optional<double> reach(std::span<const std::pair<double, double>> q_vs_distance, double threshold_q_db) {
  require(!q_vs_distance.empty(), "reach: empty series");
  std::optional<double> best;
  for (const auto& [km, q] : q_vs_distance)
    if (q >= threshold_q_db && (!best || km > *best)) best = km;
  return best;
}

/// RMS error vector over RMS reference, in percent.
inline double evm_percent(std::span<const cplx> soft, std::span<const cplx> reference) {
  require(soft.size() == reference.size(), "evm: length mismatch");
  require(!soft.empty(), "evm: empty input");
  double e = 0.0, r = 0.0;
  for (std::size_t i = 0; i < soft.size(); ++i) {
    e += std::norm(soft[i] - reference[i]);
    r += std::norm(reference[i]);
  }
  return 100.0 * std::sqrt(e / r);
}

struct SyncResult {
  std::size_t offset = 0;  // rx[n] == ref[(n + offset) mod ref.size()]
  double peak_to_sidelobe = 0.0;
  std::vector<std::uint8_t> aligned_reference;  // ref[(n + offset) mod L], n < rx.size()
};

/// Finds the circular offset of rx against a periodic reference by bipolar
/// cross-correlation computed with one FFT pair. Throws SyncError when the
/// peak is less than 3x the largest other correlation magnitude.
inline SyncResult frame_sync(std::span<const std::uint8_t> rx, std::span<const std::uint8_t> reference) {
  const std::size_t l = reference.size();
  require(l >= (1u << 14), "frame_sync: reference must hold at least 2^14 bits");
  require(!rx.empty(), "frame_sync: empty receive stream");
  std::vector<cplx> r(l, cplx{}), t(l);
  for (std::size_t n = 0; n < rx.size(); ++n) r[n % l] += rx[n] ? 1.0 : -1.0;
  for (std::size_t n = 0; n < l; ++n) t[n] = reference[n] ? 1.0 : -1.0;
  Fft f(l);
  std::vector<cplx> rf(l), tf(l);
  f.forward(r, rf);
  f.forward(t, tf);
  // c[o] = sum_m r[m] t[m + o]  <=>  C = conj(R) T
  for (std::size_t k = 0; k < l; ++k) tf[k] *= std::conj(rf[k]);
  std::vector<cplx> c(l);
  f.inverse(tf, c);
  std::size_t best = 0;
  for (std::size_t o = 1; o < l; ++o)
    if (c[o].real() > c[best].real()) best = o;
  double side = 0.0;
  for (std::size_t o = 0; o < l; ++o)
    if (o != best) side = std::max(side, std::abs(c[o].real()));
  SyncResult s;
  s.offset = best;
  s.peak_to_sidelobe = side > 0.0 ? c[best].real() / side : std::numeric_limits<double>::infinity();
  if (!(s.peak_to_sidelobe >= 3.0))
    throw SyncError("frame_sync: no correlation peak (peak-to-sidelobe " + std::to_string(s.peak_to_sidelobe) + ")");
  s.aligned_reference.resize(rx.size());
  for (std::size_t n = 0; n < rx.size(); ++n) s.aligned_reference[n] = reference[(n + best) % l];
  return s;
}

struct WindowQ {
  double time_s = 0.0;  // window start
  std::size_t n_bits = 0;
  std::size_t n_errors = 0;
  double ber = 0.0;
  double q_db = 0.0;
  bool error_free = false;  // q_db is the one-error floor
};

/// Q of a window, using one error as a floor for error-free windows.
inline WindowQ make_window(double time_s, std::size_t bits, std::size_t errors) {
  WindowQ w;
  w.time_s = time_s;
  w.n_bits = bits;
  w.n_errors = errors;
  w.ber = bits ? static_cast<double>(errors) / static_cast<double>(bits) : 0.0;
  w.error_free = errors == 0;
  const double b = w.error_free ? 1.0 / static_cast<double>(bits) : w.ber;
  w.q_db = b < 0.5 ? q_from_ber(b) : -std::numeric_limits<double>::infinity();
  return w;
}

/// Streaming windowed-Q: fed error flags in order, closes a window every
/// window_bits bits. Trailing partial windows are dropped.
class WindowedQ {
 public:
  WindowedQ(double bit_rate_hz, double window_s)
      : bit_rate_(bit_rate_hz), window_bits_(static_cast<std::size_t>(std::floor(bit_rate_hz * window_s + 1e-9))) {
    require(bit_rate_hz > 0.0 && window_s > 0.0, "windowed_q: rate and window must be positive");
    require(window_bits_ > 0, "windowed_q: window holds no bits");
  }

  void add(std::span<const std::uint8_t> errors) {
    for (auto e : errors) {
      errs_ += e ? 1 : 0;
      if (++bits_ == window_bits_) {
        out_.push_back(make_window(static_cast<double>(out_.size() * window_bits_) / bit_rate_, bits_, errs_));
        bits_ = 0;
        errs_ = 0;
      }
    }
  }

  /// Adds a run of n_bits containing n_errors (errors treated as spread
  /// within the run; the run must not cross a window boundary).
  void add_counts(std::size_t n_bits, std::size_t n_errors) {
    require(bits_ + n_bits <= window_bits_, "windowed_q: run crosses a window boundary");
    bits_ += n_bits;
    errs_ += n_errors;
    if (bits_ == window_bits_) {
      out_.push_back(make_window(static_cast<double>(out_.size() * window_bits_) / bit_rate_, bits_, errs_));
      bits_ = 0;
      errs_ = 0;
    }
  }

  std::size_t window_bits() const { return window_bits_; }
  std::size_t pending_bits() const { return bits_; }
  const std::vector<WindowQ>& windows() const { return out_; }

 private:
  double bit_rate_;
  std::size_t window_bits_;
  std::size_t bits_ = 0;
  std::size_t errs_ = 0;
  std::vector<WindowQ> out_;
};

/// Per-window Q over a stream of error flags at bit_rate_hz.
inline std::vector<WindowQ> windowed_q(std::span<const std::uint8_t> errors, double bit_rate_hz, double window_s = 0.021) {
  require(static_cast<double>(errors.size()) / bit_rate_hz >= window_s * (1.0 - 1e-12),
          "windowed_q: stream shorter than one window");
  WindowedQ w(bit_rate_hz, window_s);
  w.add(errors);
  return w.windows();
}

struct MetricsReport {
  double ber = 0.0;
  double q_db = 0.0;
  double evm_pct = 0.0;
  std::size_t n_bits = 0;
  std::size_t n_errors = 0;
  std::size_t sync_offset = 0;
  double peak_to_sidelobe = 0.0;
  std::vector<WindowQ> windowed_q;
};

/// Finite doubles as numbers, infinities as the strings "inf" / "-inf".
inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& x : m.windowed_q)
    w.push_back({{"time_s", x.time_s}, {"q_db", json_number(x.q_db)}, {"n_errors", x.n_errors}, {"n_bits", x.n_bits}});
  return {{"ber", m.ber},
          {"q_db", json_number(m.q_db)},
          {"evm_pct", json_number(m.evm_pct)},
          {"n_bits", m.n_bits},
          {"n_errors", m.n_errors},
          {"sync_offset", m.sync_offset},
          {"peak_to_sidelobe", json_number(m.peak_to_sidelobe)},
          {"windowed_q", w}};
}

/// Aligns rx to the periodic reference, then counts errors over rx bits from
/// skip_bits on. Windowed Q is computed when window_s > 0 and enough bits exist.
inline MetricsReport measure_bits(std::span<const std::uint8_t> rx, std::span<const std::uint8_t> reference,
                                  std::size_t skip_bits, double bit_rate_hz = 0.0, double window_s = 0.0) {
  require(rx.size() > skip_bits, "measure_bits: nothing left after skipping");
  const auto eval = rx.subspan(skip_bits);
  const auto sync = frame_sync(eval, reference);
  MetricsReport m;
  m.sync_offset = (sync.offset + reference.size() - skip_bits % reference.size()) % reference.size();
  m.peak_to_sidelobe = sync.peak_to_sidelobe;
  std::vector<std::uint8_t> err(eval.size());
  for (std::size_t i = 0; i < eval.size(); ++i) {
    err[i] = eval[i] != sync.aligned_reference[i];
    m.n_errors += err[i];
  }
  m.n_bits = eval.size();
  m.ber = static_cast<double>(m.n_errors) / static_cast<double>(m.n_bits);
  m.q_db = m.ber < 0.5 ? q_from_ber(m.ber) : -std::numeric_limits<double>::infinity();
  if (window_s > 0.0 && bit_rate_hz > 0.0 && static_cast<double>(eval.size()) >= bit_rate_hz * window_s)
    m.windowed_q = windowed_q(err, bit_rate_hz, window_s);
  return m;
}

}  // namespace kkm
