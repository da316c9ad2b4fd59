#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace specrex {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for (stream, index) under a master seed. Streams separate
/// independent consumers (train split, test split, restarts, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

namespace stream {
inline constexpr std::uint64_t kTrain = 0x7472'6169'6eULL;
inline constexpr std::uint64_t kTest = 0x7465'7374ULL;
inline constexpr std::uint64_t kRestart = 0x7265'7374'6172ULL;
inline constexpr std::uint64_t kExtract = 0x6578'7472'6163ULL;
inline constexpr std::uint64_t kCalibration = 0x6361'6c69'62ULL;
inline constexpr std::uint64_t kSpectrum = 0x7370'6563'7472ULL;
}  // namespace stream

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

/// Search seed for one spectrum of a batch, so spectra do not share split
/// positions yet each result depends only on (master, id).
inline std::uint64_t spectrum_seed(std::uint64_t master, std::string_view id) {
  return derive_seed(master, stream::kSpectrum, fnv1a(id));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace specrex
