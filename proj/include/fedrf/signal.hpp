// Copyright 2026 The fedrf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Baseband signal chain: OFDM/QPSK signal of interest, synthetic
// interference sources, SINR-controlled mixing and bit-error measurement.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fedrf/binary_io.hpp"
#include "fedrf/rng.hpp"

namespace fedrf {

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

/// Complex baseband waveform; std::complex guarantees interleaved I/Q storage.
using ComplexVec = std::vector<cfloat>;

using Bits = std::vector<std::uint8_t>;

enum class InterferenceKind : std::uint8_t { CS2like = 0, CS3like = 1, EMIlike = 2 };

inline constexpr std::array<InterferenceKind, 3> kAllKinds = {
    InterferenceKind::CS2like, InterferenceKind::CS3like, InterferenceKind::EMIlike};

inline std::string_view to_string(InterferenceKind k) {
  switch (k) {
    case InterferenceKind::CS2like: return "CS2like";
    case InterferenceKind::CS3like: return "CS3like";
    case InterferenceKind::EMIlike: return "EMIlike";
  }
  throw std::invalid_argument("unknown interference kind");
}

inline InterferenceKind parse_kind(std::string_view s) {
  for (const auto k : kAllKinds)
    if (to_string(k) == s) return k;
  if (s == "CS2" || s == "cs2") return InterferenceKind::CS2like;
  if (s == "CS3" || s == "cs3") return InterferenceKind::CS3like;
  if (s == "EMI" || s == "emi") return InterferenceKind::EMIlike;
  throw std::invalid_argument("unknown interference kind '" + std::string(s) + "'");
}

inline InterferenceKind kind_from_u8(std::uint8_t v) {
  if (v > 2) throw std::invalid_argument("unknown interference kind code " + std::to_string(v));
  return static_cast<InterferenceKind>(v);
}

// ---------------------------------------------------------------------------
// QPSK

/// Gray mapping: bit pair (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2).
inline std::vector<cfloat> qpsk_map(std::span<const std::uint8_t> bits) {
  if (bits.size() % 2 != 0) throw std::invalid_argument("qpsk_map: bit count must be even");
  constexpr float a = static_cast<float>(std::numbers::sqrt2 / 2.0);
  std::vector<cfloat> out(bits.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {bits[2 * i] ? -a : a, bits[2 * i + 1] ? -a : a};
  return out;
}

/// Per-quadrant hard decision.
template <typename C>
Bits qpsk_demap(std::span<const C> symbols) {
  Bits out(symbols.size() * 2);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    out[2 * i] = symbols[i].real() < 0 ? 1 : 0;
    out[2 * i + 1] = symbols[i].imag() < 0 ? 1 : 0;
  }
  return out;
}

inline Bits qpsk_demap(const std::vector<cfloat>& symbols) {
  return qpsk_demap(std::span<const cfloat>(symbols));
}

// ---------------------------------------------------------------------------
// OFDM

struct OfdmConfig {
  std::size_t fft_size = 64;
  std::size_t cp_len = 16;
  std::size_t active_subcarriers = 56;
  std::size_t n_symbols = 512;
  static constexpr std::size_t bits_per_qam_symbol = 2;

  std::size_t samples_per_symbol() const noexcept { return fft_size + cp_len; }
  std::size_t frame_length() const noexcept { return samples_per_symbol() * n_symbols; }
  std::size_t bits_per_frame() const noexcept {
    return active_subcarriers * n_symbols * bits_per_qam_symbol;
  }

  void validate() const {
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
      throw std::invalid_argument("OfdmConfig: fft_size must be a power of two");
    if (active_subcarriers == 0 || active_subcarriers >= fft_size)
      throw std::invalid_argument("OfdmConfig: active_subcarriers must be in [1, fft_size)");
    if (cp_len > fft_size) throw std::invalid_argument("OfdmConfig: cp_len exceeds fft_size");
    if (n_symbols == 0) throw std::invalid_argument("OfdmConfig: n_symbols must be positive");
  }

  friend bool operator==(const OfdmConfig&, const OfdmConfig&) = default;
};

/// QPSK on bins 1..active (DC unused), unit average power per symbol body.
inline ComplexVec ofdm_modulate(std::span<const std::uint8_t> bits, const OfdmConfig& cfg) {
  cfg.validate();
  if (bits.size() != cfg.bits_per_frame())
    throw std::invalid_argument("ofdm_modulate: expected " + std::to_string(cfg.bits_per_frame()) +
                                " bits, got " + std::to_string(bits.size()));
  const auto symbols = qpsk_map(bits);
  const std::size_t n = cfg.fft_size;
  // Unnormalized inverse DFT scaled by 1/sqrt(active) gives unit mean power.
  const double scale = static_cast<double>(n) / std::sqrt(static_cast<double>(cfg.active_subcarriers));
  Eigen::FFT<double> fft;
  std::vector<cdouble> freq(n), time(n);
  ComplexVec out;
  out.reserve(cfg.frame_length());
  for (std::size_t s = 0; s < cfg.n_symbols; ++s) {
    std::fill(freq.begin(), freq.end(), cdouble{});
    for (std::size_t k = 0; k < cfg.active_subcarriers; ++k) {
      const cfloat q = symbols[s * cfg.active_subcarriers + k];
      freq[k + 1] = {q.real(), q.imag()};
    }
    fft.inv(time, freq);
    for (std::size_t i = n - cfg.cp_len; i < n; ++i)
      out.emplace_back(static_cast<float>(time[i].real() * scale),
                       static_cast<float>(time[i].imag() * scale));
    for (std::size_t i = 0; i < n; ++i)
      out.emplace_back(static_cast<float>(time[i].real() * scale),
                       static_cast<float>(time[i].imag() * scale));
  }
  return out;
}

/// Drops each cyclic prefix, takes the DFT, extracts the active bins and demaps.
inline Bits ofdm_demodulate(std::span<const cfloat> signal, const OfdmConfig& cfg) {
  cfg.validate();
  if (signal.size() != cfg.frame_length())
    throw std::invalid_argument("ofdm_demodulate: expected " + std::to_string(cfg.frame_length()) +
                                " samples, got " + std::to_string(signal.size()));
  const std::size_t n = cfg.fft_size;
  Eigen::FFT<double> fft;
  std::vector<cdouble> time(n), freq(n);
  std::vector<cdouble> data(cfg.active_subcarriers);
  Bits out;
  out.reserve(cfg.bits_per_frame());
  for (std::size_t s = 0; s < cfg.n_symbols; ++s) {
    const std::size_t base = s * cfg.samples_per_symbol() + cfg.cp_len;
    for (std::size_t i = 0; i < n; ++i) time[i] = {signal[base + i].real(), signal[base + i].imag()};
    fft.fwd(freq, time);
    for (std::size_t k = 0; k < cfg.active_subcarriers; ++k) data[k] = freq[k + 1];
    const auto bits = qpsk_demap(std::span<const cdouble>(data));
    out.insert(out.end(), bits.begin(), bits.end());
  }
  return out;
}

inline Bits ofdm_demodulate(const ComplexVec& signal, const OfdmConfig& cfg) {
  return ofdm_demodulate(std::span<const cfloat>(signal), cfg);
}

// ---------------------------------------------------------------------------
// Measurements

inline double mean_power(std::span<const cfloat> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : x)
    acc += static_cast<double>(v.real()) * v.real() + static_cast<double>(v.imag()) * v.imag();
  return acc / static_cast<double>(x.size());
}

/// Mean power over the samples where `mask` is set.
inline double mean_power(std::span<const cfloat> x, std::span<const std::uint8_t> mask) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask[i]) continue;
    acc += std::norm(cdouble(x[i].real(), x[i].imag()));
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

/// 10 log10(P_s / P_i).
inline double measure_sinr_db(std::span<const cfloat> soi, std::span<const cfloat> interference) {
  return 10.0 * std::log10(mean_power(soi) / mean_power(interference));
}

/// Fraction of positions where the two bit strings differ.
inline double ber(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> estimate) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument("ber: length mismatch (" + std::to_string(reference.size()) +
                                " vs " + std::to_string(estimate.size()) + ")");
  if (reference.empty()) throw std::invalid_argument("ber: empty bit strings");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) errors += (reference[i] != estimate[i]);
  return static_cast<double>(errors) / static_cast<double>(reference.size());
}

// ---------------------------------------------------------------------------
// Synthetic interference

struct InterferenceParams {
  // CS2like: single-carrier QPSK with root-raised-cosine pulses.
  double cs2_rolloff = 0.35;
  std::size_t cs2_samples_per_symbol = 4;
  std::size_t cs2_span_symbols = 8;
  double cs2_max_cfo = 0.05;
  // CS3like: wideband OFDM with all bins loaded.
  std::size_t cs3_fft_size = 128;
  std::size_t cs3_cp_len = 32;
  // EMIlike: sparse chirp bursts.
  double emi_burst_rate = 0.002;
  std::size_t emi_min_len = 50;
  std::size_t emi_max_len = 200;
  double emi_amplitude_sigma = 1.0;
  // White floor relative to the unit-power waveform.
  double noise_floor_db = -20.0;
};

namespace detail {

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline cdouble random_qpsk(Rng& rng) {
  constexpr double a = std::numbers::sqrt2 / 2.0;
  const auto b = rng();
  return {(b & 1) ? -a : a, (b & 2) ? -a : a};
}

/// Root-raised-cosine taps at `sps` samples per symbol, unit energy.
inline std::vector<double> rrc_taps(double beta, std::size_t sps, std::size_t span) {
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(span * sps);
  std::vector<double> h;
  h.reserve(static_cast<std::size_t>(2 * half + 1));
  const double pi = std::numbers::pi;
  for (std::ptrdiff_t i = -half; i <= half; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(sps);
    double v;
    if (i == 0) {
      v = 1.0 - beta + 4.0 * beta / pi;
    } else if (beta > 0 && std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-12) {
      v = beta / std::numbers::sqrt2 *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    } else {
      v = (std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta))) /
          (pi * t * (1.0 - 16.0 * beta * beta * t * t));
    }
    h.push_back(v);
  }
  double e = 0.0;
  for (const double v : h) e += v * v;
  for (auto& v : h) v /= std::sqrt(e);
  return h;
}

/// Scales `x` to unit power over `mask` (all samples when empty) and adds the
/// white floor everywhere.
inline ComplexVec finish_interference(std::vector<cdouble> x, std::span<const std::uint8_t> mask,
                                      double floor_db, Rng& rng) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    acc += std::norm(x[i]);
    ++n;
  }
  const double p = n ? acc / static_cast<double>(n) : 0.0;
  if (!(p > 0.0)) throw std::logic_error("interference generator produced a zero waveform");
  const double g = 1.0 / std::sqrt(p);
  const double floor_sigma = std::sqrt(std::pow(10.0, floor_db / 10.0) / 2.0);
  std::normal_distribution<double> noise(0.0, floor_sigma);
  ComplexVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double re = x[i].real() * g + noise(rng);
    const double im = x[i].imag() * g + noise(rng);
    out[i] = {static_cast<float>(re), static_cast<float>(im)};
  }
  return out;
}

inline ComplexVec gen_cs2(std::size_t length, Rng& rng, const InterferenceParams& p) {
  const std::size_t sps = p.cs2_samples_per_symbol;
  const auto taps = rrc_taps(p.cs2_rolloff, sps, p.cs2_span_symbols);
  const std::size_t lead = taps.size();
  const std::size_t offset = rng() % sps;
  const std::size_t total = length + lead + offset;
  const std::size_t n_sym = total / sps + 1;
  std::vector<cdouble> up(n_sym * sps);
  for (std::size_t s = 0; s < n_sym; ++s) up[s * sps] = random_qpsk(rng);
  const double cfo = (2.0 * uniform01(rng) - 1.0) * p.cs2_max_cfo;
  const double phase0 = 2.0 * std::numbers::pi * uniform01(rng);
  std::vector<cdouble> x(length);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t n = i + lead + offset;
    cdouble acc{};
    for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * up[n - k];
    x[i] = acc * std::polar(1.0, phase0 + 2.0 * std::numbers::pi * cfo * static_cast<double>(i));
  }
  return finish_interference(std::move(x), {}, p.noise_floor_db, rng);
}

inline ComplexVec gen_cs3(std::size_t length, Rng& rng, const InterferenceParams& p) {
  const std::size_t n = p.cs3_fft_size;
  const std::size_t sym_len = n + p.cs3_cp_len;
  const std::size_t offset = rng() % sym_len;
  const std::size_t n_sym = (length + offset) / sym_len + 1;
  Eigen::FFT<double> fft;
  std::vector<cdouble> freq(n), time(n), stream;
  stream.reserve(n_sym * sym_len);
  for (std::size_t s = 0; s < n_sym; ++s) {
    for (auto& f : freq) f = random_qpsk(rng);
    fft.inv(time, freq);
    for (std::size_t i = n - p.cs3_cp_len; i < n; ++i) stream.push_back(time[i]);
    stream.insert(stream.end(), time.begin(), time.end());
  }
  std::vector<cdouble> x(stream.begin() + static_cast<std::ptrdiff_t>(offset),
                         stream.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return finish_interference(std::move(x), {}, p.noise_floor_db, rng);
}

}  // namespace detail

struct EmiDraw {
  ComplexVec signal;
  /// 1 where at least one burst is active.
  std::vector<std::uint8_t> support;
  std::size_t bursts = 0;
};

/// Impulsive chirp bursts with log-normal amplitudes. Burst starts are
/// Bernoulli per sample; a draw with no start gets one burst at a uniform
/// position so the waveform is never empty.
inline EmiDraw gen_emi(std::size_t length, Rng& rng, const InterferenceParams& p = {}) {
  if (length == 0) throw std::invalid_argument("gen_interference: length must be positive");
  if (p.emi_min_len == 0 || p.emi_min_len > p.emi_max_len)
    throw std::invalid_argument("gen_emi: invalid burst duration range");
  std::vector<std::size_t> starts;
  std::bernoulli_distribution start_here(std::clamp(p.emi_burst_rate, 0.0, 1.0));
  for (std::size_t t = 0; t < length; ++t)
    if (start_here(rng)) starts.push_back(t);
  if (starts.empty()) starts.push_back(rng() % length);

  std::uniform_int_distribution<std::size_t> duration(p.emi_min_len, p.emi_max_len);
  std::lognormal_distribution<double> amplitude(0.0, p.emi_amplitude_sigma);
  std::vector<cdouble> x(length);
  EmiDraw draw;
  draw.support.assign(length, 0);
  draw.bursts = starts.size();
  for (const std::size_t t0 : starts) {
    const std::size_t d = duration(rng);
    const double a = amplitude(rng);
    const double f0 = detail::uniform01(rng) - 0.5;
    const double f1 = detail::uniform01(rng) - 0.5;
    const double phi0 = 2.0 * std::numbers::pi * detail::uniform01(rng);
    const double sweep = (f1 - f0) / (2.0 * static_cast<double>(d));
    for (std::size_t n = 0; n < d && t0 + n < length; ++n) {
      const double tn = static_cast<double>(n);
      x[t0 + n] += std::polar(a, phi0 + 2.0 * std::numbers::pi * (f0 * tn + sweep * tn * tn));
      draw.support[t0 + n] = 1;
    }
  }
  draw.signal = detail::finish_interference(std::move(x), draw.support, p.noise_floor_db, rng);
  return draw;
}

/// Unit-power interference waveform of the requested kind.
inline ComplexVec gen_interference(InterferenceKind kind, std::size_t length, Rng& rng,
                                   const InterferenceParams& p = {}) {
  if (length == 0) throw std::invalid_argument("gen_interference: length must be positive");
  switch (kind) {
    case InterferenceKind::CS2like: return detail::gen_cs2(length, rng, p);
    case InterferenceKind::CS3like: return detail::gen_cs3(length, rng, p);
    case InterferenceKind::EMIlike: return gen_emi(length, rng, p).signal;
  }
  throw std::invalid_argument("gen_interference: unknown interference kind");
}

// ---------------------------------------------------------------------------
// Mixing

/// Interference gain that puts 10 log10(P_s / (g^2 P_i)) at `sinr_db`.
inline double interference_gain(double soi_power, double interference_power, double sinr_db) {
  if (!(interference_power > 0.0))
    throw std::invalid_argument("mix: interference has zero power");
  return std::sqrt(soi_power / (interference_power * std::pow(10.0, sinr_db / 10.0)));
}

/// soi + g e^{j phi} interference, phi ~ U[0, 2 pi).
inline ComplexVec mix(std::span<const cfloat> soi, std::span<const cfloat> interference,
                      double sinr_db, Rng& rng) {
  if (soi.size() != interference.size())
    throw std::invalid_argument("mix: soi and interference lengths differ");
  const double g = interference_gain(mean_power(soi), mean_power(interference), sinr_db);
  const double phi = 2.0 * std::numbers::pi * detail::uniform01(rng);
  const cdouble rot = std::polar(g, phi);
  ComplexVec out(soi.size());
  for (std::size_t i = 0; i < soi.size(); ++i) {
    const cdouble v = cdouble(soi[i].real(), soi[i].imag()) +
                      rot * cdouble(interference[i].real(), interference[i].imag());
    out[i] = {static_cast<float>(v.real()), static_cast<float>(v.imag())};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

struct MixtureSample {
  ComplexVec mixture;
  ComplexVec soi;
  Bits bits;
  float sinr_db = 0.0f;
  InterferenceKind kind = InterferenceKind::CS2like;

  friend bool operator==(const MixtureSample&, const MixtureSample&) = default;
};

/// Training draws SINR ~ U[lo, hi]; evaluation pins a level.
struct SinrMode {
  double lo = -10.0;
  double hi = 10.0;
  std::optional<double> fixed;

  static SinrMode uniform(double lo = -10.0, double hi = 10.0) { return {lo, hi, std::nullopt}; }
  static SinrMode level(double db) { return {db, db, db}; }
};

/// The 11 evaluation levels, -10..+10 dB in 2 dB steps.
inline std::vector<double> sinr_sweep() {
  std::vector<double> levels;
  for (int db = -10; db <= 10; db += 2) levels.push_back(db);
  return levels;
}

/// Relative weights of each interference kind in a node's environment.
using InterferenceMix = std::vector<std::pair<InterferenceKind, double>>;

/// Splits n by the mix weights with largest-remainder rounding (ties to the
/// earlier entry).
inline std::vector<std::size_t> split_counts(const InterferenceMix& mix_weights, std::size_t n) {
  if (mix_weights.empty()) throw std::invalid_argument("make_dataset: empty interference profile");
  double total = 0.0;
  for (const auto& [k, w] : mix_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("make_dataset: negative profile weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("make_dataset: profile weights sum to zero");
  std::vector<std::size_t> counts(mix_weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < mix_weights.size(); ++i) {
    const double exact = static_cast<double>(n) * mix_weights[i].second / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < n; ++j, ++assigned) ++counts[rema[j % rema.size()].second];
  return counts;
}

/// One mixture drawn from its own seed.
inline MixtureSample make_sample(InterferenceKind kind, const SinrMode& mode, const OfdmConfig& ofdm,
                                 std::uint64_t seed, const InterferenceParams& params = {}) {
  Rng rng(seed);
  MixtureSample s;
  s.kind = kind;
  s.bits.resize(ofdm.bits_per_frame());
  for (std::size_t i = 0; i < s.bits.size(); i += 64) {
    const auto word = rng();
    for (std::size_t b = 0; b < 64 && i + b < s.bits.size(); ++b) s.bits[i + b] = (word >> b) & 1u;
  }
  s.soi = ofdm_modulate(s.bits, ofdm);
  const double sinr = mode.fixed ? *mode.fixed
                                 : std::uniform_real_distribution<double>(mode.lo, mode.hi)(rng);
  s.sinr_db = static_cast<float>(sinr);
  const auto interference = gen_interference(kind, s.soi.size(), rng, params);
  s.mixture = mix(s.soi, interference, static_cast<double>(s.sinr_db), rng);
  return s;
}

/// n mixtures split across the profile's kinds (in profile order); sample i
/// uses seed derive_seed(seed, {i}), so any index can be regenerated alone.
inline std::vector<MixtureSample> make_dataset(const InterferenceMix& profile, std::size_t n,
                                               const SinrMode& mode, const OfdmConfig& ofdm,
                                               std::uint64_t seed,
                                               const InterferenceParams& params = {}) {
  if (n == 0) throw std::invalid_argument("make_dataset: n must be positive");
  const auto counts = split_counts(profile, n);
  std::vector<MixtureSample> out;
  out.reserve(n);
  std::size_t index = 0;
  for (std::size_t p = 0; p < profile.size(); ++p)
    for (std::size_t j = 0; j < counts[p]; ++j, ++index)
      out.push_back(make_sample(profile[p].first, mode, ofdm, derive_seed(seed, {index}), params));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset cache file: one little-endian record per sample.
//   "RFMX" | version u16 | T u32 | B u32 | kind u8 | sinr_db f32 |
//   2T f32 mixture | 2T f32 soi | ceil(B/8) bytes of MSB-first packed bits

inline constexpr std::string_view kMixtureMagic = "RFMX";
inline constexpr std::uint16_t kMixtureVersion = 1;

inline void append_mixture_record(ByteWriter& w, const MixtureSample& s) {
  if (s.mixture.size() != s.soi.size())
    throw std::invalid_argument("mixture record: mixture and soi lengths differ");
  w.put_bytes(kMixtureMagic);
  w.put<std::uint16_t>(kMixtureVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.soi.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.bits.size()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(s.kind));
  w.put<float>(s.sinr_db);
  w.put_f32({reinterpret_cast<const float*>(s.mixture.data()), 2 * s.mixture.size()});
  w.put_f32({reinterpret_cast<const float*>(s.soi.data()), 2 * s.soi.size()});
  std::string packed((s.bits.size() + 7) / 8, '\0');
  for (std::size_t i = 0; i < s.bits.size(); ++i)
    if (s.bits[i]) packed[i / 8] = static_cast<char>(packed[i / 8] | (0x80 >> (i % 8)));
  w.put_bytes(packed);
}

inline MixtureSample read_mixture_record(ByteReader& r) {
  if (r.get_bytes(4) != kMixtureMagic) throw std::runtime_error(r.source() + ": bad RFMX magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kMixtureVersion)
    throw std::runtime_error(r.source() + ": unsupported RFMX version " + std::to_string(version));
  MixtureSample s;
  const auto len = r.get<std::uint32_t>();
  const auto nbits = r.get<std::uint32_t>();
  s.kind = kind_from_u8(r.get<std::uint8_t>());
  s.sinr_db = r.get<float>();
  s.mixture.resize(len);
  s.soi.resize(len);
  r.get_f32({reinterpret_cast<float*>(s.mixture.data()), 2 * static_cast<std::size_t>(len)});
  r.get_f32({reinterpret_cast<float*>(s.soi.data()), 2 * static_cast<std::size_t>(len)});
  const auto packed = r.get_bytes((nbits + 7) / 8);
  s.bits.resize(nbits);
  for (std::size_t i = 0; i < nbits; ++i)
    s.bits[i] = (static_cast<unsigned char>(packed[i / 8]) >> (7 - i % 8)) & 1u;
  return s;
}

inline void write_mixture_file(const std::string& path, std::span<const MixtureSample> samples) {
  ByteWriter w;
  for (const auto& s : samples) append_mixture_record(w, s);
  write_file_bytes(path, w.bytes());
}

inline std::vector<MixtureSample> read_mixture_file(const std::string& path) {
  ByteReader r(read_file_bytes(path), path);
  std::vector<MixtureSample> out;
  while (!r.at_end()) out.push_back(read_mixture_record(r));
  return out;
}

}  // namespace fedrf
