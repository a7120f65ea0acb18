#pragma once

// Raw sample files: little-endian float32 (interleaved re,im for complex) or
// int16 codes, each with a JSON sidecar at <path>.json carrying
// {sample_rate_hz, kind, length, format[, scale]}.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kkmodem/common.hpp"
#include "kkmodem/signal.hpp"

namespace kkm::raw {

static_assert(std::endian::native == std::endian::little, "raw I/O assumes a little-endian host");

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

namespace detail {

inline void write_sidecar(const std::filesystem::path& p, const nlohmann::json& meta) {
  std::ofstream os(sidecar_path(p));
  if (!os) throw std::runtime_error("raw: cannot write " + sidecar_path(p).string());
  os << meta.dump(2) << '\n';
}

inline nlohmann::json read_sidecar(const std::filesystem::path& p) {
  std::ifstream is(sidecar_path(p));
  if (!is) throw std::runtime_error("raw: missing sidecar " + sidecar_path(p).string());
  return nlohmann::json::parse(is);
}

template <typename T>
void write_array(const std::filesystem::path& p, const std::vector<T>& v) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("raw: cannot write " + p.string());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_array(const std::filesystem::path& p, std::size_t count) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("raw: cannot read " + p.string());
  std::vector<T> v(count);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(is.gcount()) != count * sizeof(T))
    throw std::runtime_error("raw: short read from " + p.string());
  return v;
}

}  // namespace detail

inline void write_complex(const std::filesystem::path& p, const ComplexSignal& s) {
  std::vector<float> v;
  v.reserve(2 * s.samples.size());
  for (const auto& x : s.samples) {
    v.push_back(static_cast<float>(x.real()));
    v.push_back(static_cast<float>(x.imag()));
  }
  detail::write_array(p, v);
  detail::write_sidecar(p, {{"sample_rate_hz", s.sample_rate_hz},
                            {"kind", "complex"},
                            {"format", "float32"},
                            {"length", s.samples.size()}});
}

inline void write_real(const std::filesystem::path& p, const RealSignal& s) {
  std::vector<float> v(s.samples.begin(), s.samples.end());
  detail::write_array(p, v);
  detail::write_sidecar(p, {{"sample_rate_hz", s.sample_rate_hz},
                            {"kind", "real"},
                            {"format", "float32"},
                            {"length", s.samples.size()}});
}

/// int16 archival of quantised ADC codes; sample value = (code + offset) * scale.
inline void write_int16(const std::filesystem::path& p, const std::vector<std::int16_t>& codes, double sample_rate_hz,
                        double scale, double offset = 0.0) {
  detail::write_array(p, codes);
  detail::write_sidecar(p, {{"sample_rate_hz", sample_rate_hz},
                            {"kind", "real"},
                            {"format", "int16"},
                            {"scale", scale},
                            {"offset", offset},
                            {"length", codes.size()}});
}

inline ComplexSignal read_complex(const std::filesystem::path& p) {
  const auto meta = detail::read_sidecar(p);
  require(meta.at("kind") == "complex", "raw: file is not complex");
  const auto n = meta.at("length").get<std::size_t>();
  const auto v = detail::read_array<float>(p, 2 * n);
  ComplexSignal s;
  s.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] = {v[2 * i], v[2 * i + 1]};
  return s;
}

/// Reads a real stream stored either as float32 or as int16 codes.
inline RealSignal read_real(const std::filesystem::path& p) {
  const auto meta = detail::read_sidecar(p);
  require(meta.at("kind") == "real", "raw: file is not real");
  const auto n = meta.at("length").get<std::size_t>();
  RealSignal s;
  s.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
  s.samples.resize(n);
  if (meta.value("format", std::string("float32")) == "int16") {
    const double scale = meta.at("scale").get<double>();
    const double offset = meta.value("offset", 0.0);
    const auto v = detail::read_array<std::int16_t>(p, n);
    for (std::size_t i = 0; i < n; ++i) s.samples[i] = (v[i] + offset) * scale;
  } else {
    const auto v = detail::read_array<float>(p, n);
    for (std::size_t i = 0; i < n; ++i) s.samples[i] = v[i];
  }
  return s;
}

/// Packs bits MSB-first into bytes.
inline std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits) {
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

inline std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bytes, std::size_t n_bits) {
  std::vector<std::uint8_t> bits(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) bits[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
  return bits;
}

inline void write_bits(const std::filesystem::path& p, const std::vector<std::uint8_t>& bits) {
  detail::write_array(p, pack_bits(bits));
  detail::write_sidecar(p, {{"kind", "bits"}, {"format", "packed_msb_first"}, {"length", bits.size()}});
}

inline std::vector<std::uint8_t> read_bits(const std::filesystem::path& p) {
  const auto meta = detail::read_sidecar(p);
  const auto n = meta.at("length").get<std::size_t>();
  return unpack_bits(detail::read_array<std::uint8_t>(p, (n + 7) / 8), n);
}

/// Soft symbols as float32 interleaved (re, im), rate = symbol rate.
inline void write_soft_symbols(const std::filesystem::path& p, const std::vector<cplx>& symbols, double symbol_rate_hz) {
  write_complex(p, ComplexSignal{symbols, symbol_rate_hz});
}

}  // namespace kkm::raw
