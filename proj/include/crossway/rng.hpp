// Deterministic random streams. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard); all value transforms are written out
// explicitly so two builds on different standard libraries produce identical
// draws, which the reproducibility and checkpoint-resume contracts rely on.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace crossway {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(a ^ mix_seed(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b) ^ mix_seed(c));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                              std::uint64_t d) {
  return mix_seed(mix_seed(a, b, c) ^ mix_seed(d));
}

class RandomStream {
 public:
  RandomStream() : RandomStream(0) {}
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  void seed(std::uint64_t s) { engine_.seed(s); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller. No cached spare: the stream state is
  // exactly the engine state, so save/restore round-trips are trivial.
  double normal() {
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string save_state() const {
    std::ostringstream ss;
    ss << engine_;
    return ss.str();
  }

  void restore_state(const std::string& text) {
    std::istringstream ss(text);
    ss >> engine_;
    if (!ss) {
      throw std::runtime_error("RandomStream: malformed engine state");
    }
  }

  bool operator==(const RandomStream& other) const {
    return engine_ == other.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace crossway
