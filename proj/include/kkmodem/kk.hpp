#pragma once

// Kramers-Kronig field reconstruction from a photocurrent stream.
//
// Each 2*hop block gives a = sqrt(I) and phi = H{ln a}, the Hilbert transform
// applied as a frequency-domain multiplier that also delays by fft_size / 4.
// Keeping the second half of every block then yields a causal-looking stage
// whose fixed latency is removed by KkStage, so output index n is the field at
// input index n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "kkmodem/fft.hpp"
#include "kkmodem/filters.hpp"
#include "kkmodem/signal.hpp"

namespace kkm {

/// Which side of the carrier the payload occupies once the carrier is at DC.
enum class Sideband { upper, lower };

/// A tone above the payload leaves the payload below the carrier.
inline Sideband sideband_for_tone(double tone_freq_hz) { return tone_freq_hz > 0.0 ? Sideband::lower : Sideband::upper; }

struct KkBlockDiagnostics {
  std::uint64_t block_index = 0;
  std::size_t clamp_count = 0;  // samples raised to the clamp floor before ln
  bool zero_block = false;      // block had no positive energy; output zeroed
};

/// Frequency-domain Hilbert multiplier with a built-in delay of delay
/// samples. upper: -j sgn(f); lower: +j sgn(f). DC and Nyquist are zero.
inline std::vector<cplx> hilbert_multiplier(std::size_t n, Sideband sb, std::size_t delay) {
  std::vector<cplx> m(n, cplx{});
  const double s = sb == Sideband::upper ? -1.0 : 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    if (2 * k == n) continue;
    const double sgn = k < n / 2 ? 1.0 : -1.0;
    const double ang = -constants::two_pi * detail::cycle_fraction(static_cast<double>(delay) / static_cast<double>(n), k);
    m[k] = cplx{0.0, s * sgn} * std::polar(1.0, ang);
  }
  return m;
}

/// Reconstructs one block. block holds fft_size photocurrent samples; out
/// receives the hop samples that belong to block positions [hop, fft_size),
/// delayed by fft_size / 4.
class KkKernel {
 public:
  KkKernel(std::size_t fft_size, Sideband sb)
      : n_(fft_size), fft_(fft_size), mult_(hilbert_multiplier(fft_size, sb, fft_size / 4)), amp_(fft_size) {
    require(fft_size >= 8 && (fft_size & (fft_size - 1)) == 0, "KkKernel: fft_size must be a power of two >= 8");
  }

  std::size_t fft_size() const { return n_; }
  std::size_t hop() const { return n_ / 2; }
  std::size_t delay() const { return n_ / 4; }

  KkBlockDiagnostics process(std::span<const double> block, std::span<cplx> out) {
    require(block.size() == n_ && out.size() == hop(), "KkKernel: block size mismatch");
    KkBlockDiagnostics d;
    double mean = 0.0;
    for (double v : block) mean += v;
    mean /= static_cast<double>(n_);
    if (!(mean > 0.0)) {
      d.zero_block = true;
      std::fill(out.begin(), out.end(), cplx{});
      return d;
    }
    const double floor = 1e-12 * mean;
    auto buf = fft_.data();
    for (std::size_t i = 0; i < n_; ++i) {
      double v = block[i];
      if (v <= floor) {
        v = floor;
        ++d.clamp_count;
      }
      amp_[i] = std::sqrt(v);
      buf[i] = cplx{0.5 * std::log(v), 0.0};
    }
    fft_.forward();
    for (std::size_t k = 0; k < n_; ++k) buf[k] *= mult_[k];
    fft_.inverse();
    const std::size_t h = hop();
    const std::size_t dl = delay();
    for (std::size_t p = h; p < n_; ++p) out[p - h] = std::polar(amp_[p - dl], buf[p].real());
    return d;
  }

 private:
  std::size_t n_;
  Fft fft_;
  std::vector<cplx> mult_;
  std::vector<double> amp_;
};

/// Streaming KK reconstruction with its latency removed: after flush() the
/// output count equals the input count and output n is the field at input n.
class KkStage {
 public:
  KkStage(std::size_t fft_size, Sideband sb) : kernel_(fft_size, sb), framer_(fft_size / 2), block_out_(fft_size / 2) {}

  void push(std::span<const double> in, std::vector<cplx>& out) {
    consumed_ += in.size();
    feed(in, out);
  }

  /// Drains the stage with zero padding and trims to the consumed count.
  void flush(std::vector<cplx>& out) {
    const std::size_t before = out.size();
    const std::uint64_t remaining = consumed_ > emitted_ ? consumed_ - emitted_ : 0;
    const std::size_t pad = framer_.hop() - framer_.pending() + kernel_.delay() + framer_.hop();
    std::vector<double> zeros(pad, 0.0);
    feed(zeros, out);
    out.resize(before + static_cast<std::size_t>(remaining));
    emitted_ = consumed_;
  }

  const std::vector<KkBlockDiagnostics>& diagnostics() const { return diag_; }
  void clear_diagnostics() { diag_.clear(); }
  std::size_t delay() const { return kernel_.delay(); }

 private:
  void feed(std::span<const double> in, std::vector<cplx>& out) {
    framer_.push(in, [&](std::span<const double> block) {
      auto d = kernel_.process(block, block_out_);
      d.block_index = blocks_++;
      if (d.clamp_count > 0 || d.zero_block) diag_.push_back(d);
      total_clamps_ += d.clamp_count;
      for (const auto& v : block_out_) {
        if (skipped_ < kernel_.delay()) {
          ++skipped_;
          continue;
        }
        if (emitted_ < consumed_) {
          out.push_back(v);
          ++emitted_;
        }
      }
    });
  }

 public:
  std::uint64_t blocks() const { return blocks_; }
  std::uint64_t total_clamps() const { return total_clamps_; }

 private:
  KkKernel kernel_;
  BlockFramer<double> framer_;
  std::vector<cplx> block_out_;
  std::vector<KkBlockDiagnostics> diag_;
  std::uint64_t blocks_ = 0;
  std::uint64_t total_clamps_ = 0;
  std::uint64_t consumed_ = 0;
  std::uint64_t emitted_ = 0;
  std::size_t skipped_ = 0;
};

struct KkResult {
  ComplexSignal field;
  std::vector<double> tail;  // last hop photocurrent samples, for the next buffer
  std::vector<KkBlockDiagnostics> blocks;
};

/// Stateless reconstruction of one buffer given the previous buffer's final
/// hop samples (zeros at stream start). The output is the raw block output:
/// sample n is the field at input n - fft_size / 4.
inline KkResult kk_reconstruct(const RealSignal& current, const BlockPlan& plan, std::span<const double> tail,
                               Sideband sb) {
  plan.validate();
  require(tail.size() == plan.hop, "kk_reconstruct: tail length != hop");
  KkKernel kernel(plan.fft_size, sb);
  BlockFramer<double> framer(plan.hop);
  // Prime history with the carried tail.
  framer.push(tail, [](std::span<const double>) {});
  KkResult r;
  r.field.sample_rate_hz = current.sample_rate_hz;
  std::vector<cplx> block_out(plan.hop);
  std::uint64_t index = 0;
  const auto on_block = [&](std::span<const double> block) {
    auto d = kernel.process(block, block_out);
    d.block_index = index++;
    if (d.clamp_count > 0 || d.zero_block) r.blocks.push_back(d);
    r.field.samples.insert(r.field.samples.end(), block_out.begin(), block_out.end());
  };
  framer.push(current.samples, on_block);
  if (framer.pending() > 0) {
    std::vector<double> zeros(plan.hop - framer.pending(), 0.0);
    framer.push(zeros, on_block);
  }
  r.field.samples.resize(current.samples.size());
  const std::size_t n = current.samples.size();
  if (n >= plan.hop) {
    r.tail.assign(current.samples.end() - static_cast<std::ptrdiff_t>(plan.hop), current.samples.end());
  } else {
    r.tail.assign(tail.begin() + static_cast<std::ptrdiff_t>(n), tail.end());
    r.tail.insert(r.tail.end(), current.samples.begin(), current.samples.end());
  }
  return r;
}

/// Whole-signal convenience: latency-compensated field at the input rate.
inline ComplexSignal kk_reconstruct(const RealSignal& current, std::size_t fft_size, Sideband sb,
                                    std::vector<KkBlockDiagnostics>* diagnostics = nullptr) {
  KkStage stage(fft_size, sb);
  ComplexSignal out{{}, current.sample_rate_hz};
  out.samples.reserve(current.samples.size());
  stage.push(current.samples, out.samples);
  stage.flush(out.samples);
  if (diagnostics) *diagnostics = stage.diagnostics();
  return out;
}

/// Removes the carrier that KK leaves at DC. A running mean that settles into
/// a one-pole average with coefficient lambda.
class DcRemover {
 public:
  explicit DcRemover(double lambda = 1.0 / 4096.0) : lambda_(lambda) {
    require(lambda > 0.0 && lambda <= 1.0, "DcRemover: lambda must be in (0, 1]");
  }

  void process(std::span<cplx> x) {
    for (auto& v : x) {
      const double a = std::max(lambda_, 1.0 / static_cast<double>(count_ + 1));
      est_ += a * (v - est_);
      v -= est_;
      ++count_;
    }
  }

  cplx estimate() const { return est_; }

 private:
  double lambda_;
  cplx est_{};
  std::uint64_t count_ = 0;
};

/// Moves the payload from the carrier frame back to DC. The KK field has the
/// carrier at 0 Hz and the payload offset by -tone_freq_hz.
inline ComplexSignal downshift_dc(const ComplexSignal& field, double tone_freq_hz, std::uint64_t first_index = 0) {
  return frequency_shift(field, tone_freq_hz, first_index);
}

}  // namespace kkm
