#pragma once

#include <cstdint>
#include <vector>

#include "kkmodem/common.hpp"

namespace kkm {

/// Maximal-length Fibonacci LFSR, x^degree + x^tap + 1 (ITU-T O.150 taps).
/// The seed is masked to degree bits and must be nonzero after masking.
inline std::vector<std::uint8_t> prbs_generate(int degree, std::uint64_t seed, std::size_t n) {
  int tap = 0;
  switch (degree) {
    case 7: tap = 6; break;
    case 15: tap = 14; break;
    case 23: tap = 18; break;
    case 31: tap = 28; break;
    default: throw ParameterError("prbs_generate: degree must be 7, 15, 23 or 31");
  }
  const std::uint64_t mask = (std::uint64_t{1} << degree) - 1;
  std::uint64_t state = seed & mask;
  require(state != 0, "prbs_generate: seed must be nonzero");

  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bit = ((state >> (degree - 1)) ^ (state >> (tap - 1))) & 1u;
    state = ((state << 1) | bit) & mask;
    out[i] = static_cast<std::uint8_t>(bit);
  }
  return out;
}

}  // namespace kkm
