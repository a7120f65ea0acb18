#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kkm {

using cplx = std::complex<double>;

/// Thrown when an operation is called with arguments outside its contract.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when the receive bit stream cannot be aligned to the reference.
class SyncError : public std::runtime_error {
 public:
  explicit SyncError(const std::string& what) : std::runtime_error(what) {}
};

namespace constants {
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double speed_of_light = 299792458.0;  // m/s
inline constexpr double planck = 6.62607015e-34;       // J s
}  // namespace constants

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watt(double dbm) { return 1e-3 * db_to_lin(dbm); }
inline double watt_to_dbm(double w) { return lin_to_db(w / 1e-3); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ParameterError(msg);
}

}  // namespace kkm
