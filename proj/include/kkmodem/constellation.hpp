#pragma once

// QAM point sets with bit labels.
//
// Square QAM (4, 16, 64): label = (Q bits << m) | (I bits), each axis Gray
// coded from the most positive level downwards, so QPSK 00 -> (+1+j)/sqrt2,
// 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2, 10 -> (+1-j)/sqrt2.
// 8-QAM: 4+4 star, inner (+-1, +-1), outer radius 1+sqrt3 on the axes.
// 32-QAM: 6x6 cross. Neither admits an exact Gray labelling; the shipped
// tables minimise the summed Hamming distance over nearest-neighbour pairs.
// Bits map to labels MSB first.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "kkmodem/common.hpp"

namespace kkm {

struct ConstellationSpec {
  int order = 4;
  std::vector<cplx> points;             // unit mean power
  std::vector<std::uint32_t> labels;    // labels[i] is the bit label of points[i]
  std::vector<std::uint32_t> by_label;  // by_label[label] = point index
  int axis_levels = 0;                  // > 0 for square QAM (fast slicer)
  double axis_scale = 1.0;              // grid spacing / 2 for square QAM

  int bits_per_symbol() const { return std::countr_zero(static_cast<unsigned>(order)); }

  double max_radius() const {
    double r = 0.0;
    for (const auto& p : points) r = std::max(r, std::abs(p));
    return r;
  }

  /// Index of the point nearest to y.
  std::size_t nearest(cplx y) const {
    if (axis_levels > 0) {
      const int l = axis_levels;
      auto slice = [&](double v) {
        // position 0 is the most positive level
        const double pos = ((l - 1) - v / axis_scale) / 2.0;
        return std::clamp(static_cast<int>(std::lround(pos)), 0, l - 1);
      };
      const int pi = slice(y.real());
      const int pq = slice(y.imag());
      const int m = bits_per_symbol() / 2;
      const auto gi = static_cast<std::uint32_t>(pi ^ (pi >> 1));
      const auto gq = static_cast<std::uint32_t>(pq ^ (pq >> 1));
      return by_label[(gq << m) | gi];
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = std::norm(y - points[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
};

namespace detail {

inline void finalize(ConstellationSpec& c) {
  double p = 0.0;
  for (const auto& v : c.points) p += std::norm(v);
  const double s = std::sqrt(p / static_cast<double>(c.points.size()));
  for (auto& v : c.points) v /= s;
  c.axis_scale /= s;
  c.by_label.assign(c.points.size(), 0);
  for (std::size_t i = 0; i < c.labels.size(); ++i) c.by_label[c.labels[i]] = static_cast<std::uint32_t>(i);
}

inline ConstellationSpec square_qam(int order) {
  ConstellationSpec c;
  c.order = order;
  const int m = std::countr_zero(static_cast<unsigned>(order)) / 2;
  const int l = 1 << m;
  c.axis_levels = l;
  c.axis_scale = 1.0;
  for (int pq = 0; pq < l; ++pq) {
    for (int pi = 0; pi < l; ++pi) {
      const auto gi = static_cast<std::uint32_t>(pi ^ (pi >> 1));
      const auto gq = static_cast<std::uint32_t>(pq ^ (pq >> 1));
      c.points.emplace_back((l - 1) - 2 * pi, (l - 1) - 2 * pq);
      c.labels.push_back((gq << m) | gi);
    }
  }
  finalize(c);
  return c;
}

inline ConstellationSpec star_8qam() {
  ConstellationSpec c;
  c.order = 8;
  const double r = 1.0 + std::sqrt(3.0);
  c.points = {{1, 1}, {-1, 1}, {-1, -1}, {1, -1}, {r, 0}, {0, r}, {-r, 0}, {0, -r}};
  c.labels = {0, 1, 2, 6, 4, 5, 3, 7};
  finalize(c);
  return c;
}

inline ConstellationSpec cross_32qam() {
  // Grid (x, y) in 0..5 without the four corners, x-major order.
  static constexpr std::uint32_t table[32] = {2,  0,  16, 18, 3,  10, 8,  24, 26, 19, 11, 15, 14, 30, 31, 27,
                                              9,  13, 12, 28, 29, 25, 1,  5,  4,  20, 21, 17, 7,  6,  22, 23};
  ConstellationSpec c;
  c.order = 32;
  std::size_t t = 0;
  for (int x = 0; x < 6; ++x) {
    for (int y = 0; y < 6; ++y) {
      const bool corner = (x == 0 || x == 5) && (y == 0 || y == 5);
      if (corner) continue;
      c.points.emplace_back(2 * x - 5, 2 * y - 5);
      c.labels.push_back(table[t++]);
    }
  }
  finalize(c);
  return c;
}

}  // namespace detail

inline ConstellationSpec make_constellation(int order) {
  switch (order) {
    case 4:
    case 16:
    case 64:
      return detail::square_qam(order);
    case 8:
      return detail::star_8qam();
    case 32:
      return detail::cross_32qam();
    default:
      throw ParameterError("make_constellation: order must be one of 4, 8, 16, 32, 64");
  }
}

/// Maps each bits_per_symbol group (MSB first) to its labelled point.
inline std::vector<cplx> qam_map(std::span<const std::uint8_t> bits, const ConstellationSpec& c) {
  const auto k = static_cast<std::size_t>(c.bits_per_symbol());
  require(bits.size() % k == 0, "qam_map: bit count not divisible by bits per symbol");
  std::vector<cplx> out(bits.size() / k);
  for (std::size_t s = 0; s < out.size(); ++s) {
    std::uint32_t label = 0;
    for (std::size_t b = 0; b < k; ++b) label = (label << 1) | (bits[s * k + b] & 1u);
    out[s] = c.points[c.by_label[label]];
  }
  return out;
}

inline void append_label_bits(std::uint32_t label, int k, std::vector<std::uint8_t>& out) {
  for (int b = k - 1; b >= 0; --b) out.push_back(static_cast<std::uint8_t>((label >> b) & 1u));
}

struct DemapStats {
  std::size_t off_grid = 0;  // inputs that were not constellation points
};

/// Inverse of qam_map. Off-grid inputs fall back to the nearest point.
inline std::vector<std::uint8_t> demap(std::span<const cplx> decisions, const ConstellationSpec& c,
                                       DemapStats* stats = nullptr) {
  std::vector<std::uint8_t> bits;
  bits.reserve(decisions.size() * static_cast<std::size_t>(c.bits_per_symbol()));
  std::size_t off = 0;
  for (const auto& d : decisions) {
    const std::size_t i = c.nearest(d);
    if (std::abs(d - c.points[i]) > 1e-9) ++off;
    append_label_bits(c.labels[i], c.bits_per_symbol(), bits);
  }
  if (stats) stats->off_grid = off;
  return bits;
}

/// Unordered nearest-neighbour pairs (distance within 1e-9 of the minimum).
inline std::vector<std::pair<std::size_t, std::size_t>> neighbour_pairs(const ConstellationSpec& c) {
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.points.size(); ++i)
    for (std::size_t j = i + 1; j < c.points.size(); ++j) dmin = std::min(dmin, std::abs(c.points[i] - c.points[j]));
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < c.points.size(); ++i)
    for (std::size_t j = i + 1; j < c.points.size(); ++j)
      if (std::abs(std::abs(c.points[i] - c.points[j]) - dmin) < 1e-9) out.emplace_back(i, j);
  return out;
}

}  // namespace kkm
