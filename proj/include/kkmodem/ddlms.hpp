#pragma once

// Widely-linear decision-directed LMS equalizer at 2 samples per symbol.
//
//   y = w^H x + g^H conj(x),  e = d - y,  w += mu x e*,  g += mu conj(x) e*
//
// x is the window of n_taps samples around the symbol sample. The equalizer
// first settles timing phase and gain over a fixed window of symbols, trains
// on known symbols for startup_symbols, then switches to decisions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kkmodem/constellation.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

struct DdlmsConfig {
  int n_taps = 4;
  double mu = 1e-3;
  std::size_t startup_symbols = 10000;
  bool widely_linear = true;           // false forces g = 0
  std::size_t acquisition_symbols = 4096;  // window for timing phase and gain
  bool auto_gain = true;
  bool data_aided_init = true;  // seed the centre tap from training over the acquisition window
  std::optional<int> timing_phase;  // 0 or 1; unset picks max mean |x|^2
  double divergence_radius_multiple = 10.0;
  std::size_t divergence_run = 100;

  void validate() const {
    require(n_taps >= 1 && n_taps <= 64, "DdlmsConfig: n_taps out of range");
    require(mu >= 0.0, "DdlmsConfig: mu must be >= 0");
    require(acquisition_symbols >= 16, "DdlmsConfig: acquisition window too short");
    require(!timing_phase || *timing_phase == 0 || *timing_phase == 1, "DdlmsConfig: timing phase must be 0 or 1");
  }

  /// Index of the symbol sample inside the tap window.
  int centre_index() const { return (n_taps - 1) / 2; }
};

struct EqualizerState {
  std::vector<cplx> w;
  std::vector<cplx> g;
  bool diverged = false;
  std::size_t over_radius_run = 0;
  std::uint64_t symbols = 0;

  static EqualizerState centre_spike(const DdlmsConfig& cfg) {
    EqualizerState s;
    s.w.assign(static_cast<std::size_t>(cfg.n_taps), cplx{});
    s.g.assign(static_cast<std::size_t>(cfg.n_taps), cplx{});
    s.w[static_cast<std::size_t>(cfg.centre_index())] = 1.0;
    return s;
  }

  bool finite() const { return all_finite(w) && all_finite(g); }
};

struct DdlmsOutput {
  std::vector<cplx> soft;
  std::vector<cplx> decisions;
};

namespace detail {

/// Runs the update over symbols whose windows are fully inside x. Window of
/// symbol k starts at x[first + 2 k - centre]. Returns the symbol count.
inline void ddlms_core(std::span<const cplx> x, std::size_t n_symbols, std::size_t first, const DdlmsConfig& cfg,
                       const ConstellationSpec& c, double gain, std::span<const cplx> training,
                       EqualizerState& st, DdlmsOutput& out) {
  const auto nt = static_cast<std::size_t>(cfg.n_taps);
  const auto ci = static_cast<std::size_t>(cfg.centre_index());
  const double limit = cfg.divergence_radius_multiple * c.max_radius();
  std::vector<cplx> win(nt);
  for (std::size_t k = 0; k < n_symbols; ++k) {
    const std::size_t base = first + 2 * k - ci;
    cplx y{};
    for (std::size_t i = 0; i < nt; ++i) {
      win[i] = gain * x[base + i];
      y += std::conj(st.w[i]) * win[i];
      if (cfg.widely_linear) y += std::conj(st.g[i]) * std::conj(win[i]);
    }
    const std::uint64_t idx = st.symbols;
    cplx d;
    if (idx < cfg.startup_symbols && !training.empty())
      d = training[static_cast<std::size_t>(idx % training.size())];
    else
      d = c.points[c.nearest(y)];
    if (!st.diverged && cfg.mu > 0.0) {
      const cplx e = d - y;
      const cplx ec = std::conj(e);
      for (std::size_t i = 0; i < nt; ++i) {
        st.w[i] += cfg.mu * win[i] * ec;
        if (cfg.widely_linear) st.g[i] += cfg.mu * std::conj(win[i]) * ec;
      }
    }
    if (std::abs(y) > limit || !std::isfinite(std::abs(y))) {
      if (++st.over_radius_run >= cfg.divergence_run) st.diverged = true;
    } else {
      st.over_radius_run = 0;
    }
    out.soft.push_back(y);
    out.decisions.push_back(d);
    ++st.symbols;
  }
}

}  // namespace detail

/// Streaming equalizer. Input at 2 samples per symbol where sample 2k (or
/// 2k + 1 for timing phase 1) carries symbol k. After flush() one symbol has
/// been emitted per input sample pair. training[k mod size] is the known
/// symbol k.
class DdlmsEqualizer {
 public:
  DdlmsEqualizer(DdlmsConfig cfg, ConstellationSpec c, std::vector<cplx> training = {},
                 std::optional<EqualizerState> init = std::nullopt)
      : cfg_(std::move(cfg)), c_(std::move(c)), training_(std::move(training)),
        state_(init ? *init : EqualizerState::centre_spike(cfg_)), fresh_state_(!init) {
    cfg_.validate();
    require(state_.w.size() == static_cast<std::size_t>(cfg_.n_taps) && state_.g.size() == state_.w.size(),
            "DdlmsEqualizer: initial state has wrong tap count");
    // Leading history so the first window is complete.
    buf_.assign(static_cast<std::size_t>(cfg_.centre_index()), cplx{});
  }

  void push(std::span<const cplx> in, DdlmsOutput& out) {
    consumed_ += in.size();
    buf_.insert(buf_.end(), in.begin(), in.end());
    if (!acquired_) {
      if (consumed_ < 2 * cfg_.acquisition_symbols + 2) return;
      acquire();
    }
    run(out, false);
  }

  void flush(DdlmsOutput& out) {
    if (!acquired_) acquire();
    run(out, true);
  }

  const EqualizerState& state() const { return state_; }
  int timing_phase() const { return phase_; }
  double gain() const { return gain_; }
  bool diverged() const { return state_.diverged; }

 private:
  void acquire() {
    const std::size_t lead = static_cast<std::size_t>(cfg_.centre_index());
    const std::size_t avail = buf_.size() - lead;
    const std::size_t n = std::min(cfg_.acquisition_symbols, avail / 2);
    double p[2] = {0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k)
      for (int ph = 0; ph < 2; ++ph)
        if (lead + 2 * k + static_cast<std::size_t>(ph) < buf_.size())
          p[ph] += std::norm(buf_[lead + 2 * k + static_cast<std::size_t>(ph)]);
    phase_ = cfg_.timing_phase ? *cfg_.timing_phase : (p[1] > p[0] ? 1 : 0);
    if (cfg_.auto_gain && n > 0 && p[phase_] > 0.0) gain_ = std::sqrt(static_cast<double>(n) / p[phase_]);
    acquired_ = true;
    start_ = lead + static_cast<std::size_t>(phase_);
    if (cfg_.data_aided_init && fresh_state_ && !training_.empty() && n > 0) {
      // Single-tap least squares d = c x over the window; y = conj(w) x.
      cplx num{};
      double den = 0.0;
      for (std::size_t k = 0; k < n && start_ + 2 * k < buf_.size(); ++k) {
        const cplx x = gain_ * buf_[start_ + 2 * k];
        num += training_[(state_.symbols + k) % training_.size()] * std::conj(x);
        den += std::norm(x);
      }
      if (den > 0.0) state_.w[static_cast<std::size_t>(cfg_.centre_index())] = std::conj(num / den);
    }
  }

  void run(DdlmsOutput& out, bool final) {
    const auto nt = static_cast<std::size_t>(cfg_.n_taps);
    const auto ci = static_cast<std::size_t>(cfg_.centre_index());
    const std::uint64_t total_symbols = consumed_ / 2;
    if (final) {
      // Zero lookahead for the last windows.
      buf_.insert(buf_.end(), nt + 2, cplx{});
    }
    // Symbol k (relative to start_) needs buf_[start_ + 2k - ci .. + nt).
    std::size_t ready = 0;
    if (buf_.size() >= start_ - ci + nt) ready = (buf_.size() - (start_ - ci + nt)) / 2 + 1;
    const std::uint64_t remaining = total_symbols - emitted_;
    if (final || ready > remaining) ready = static_cast<std::size_t>(std::min<std::uint64_t>(ready, remaining));
    if (ready > 0) {
      detail::ddlms_core(buf_, ready, start_, cfg_, c_, gain_, training_, state_, out);
      emitted_ += ready;
      const std::size_t drop = 2 * ready;
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(drop));
    }
  }

  DdlmsConfig cfg_;
  ConstellationSpec c_;
  std::vector<cplx> training_;
  EqualizerState state_;
  bool fresh_state_ = true;
  std::vector<cplx> buf_;
  std::uint64_t consumed_ = 0;
  std::uint64_t emitted_ = 0;
  bool acquired_ = false;
  int phase_ = 0;
  double gain_ = 1.0;
  std::size_t start_ = 0;
};

/// Whole-signal form: equalizes x (2 samples per symbol) starting from state.
inline DdlmsOutput ddlms_wl(const ComplexSignal& x, const DdlmsConfig& cfg, const ConstellationSpec& c,
                            EqualizerState& state, std::span<const cplx> training = {}) {
  require(x.samples.size() >= 2 * static_cast<std::size_t>(cfg.n_taps), "ddlms_wl: input shorter than 2 n_taps");
  DdlmsEqualizer eq(cfg, c, std::vector<cplx>(training.begin(), training.end()), state);
  DdlmsOutput out;
  eq.push(x.samples, out);
  eq.flush(out);
  state = eq.state();
  return out;
}

}  // namespace kkm
