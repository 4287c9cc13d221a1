#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bltd {

// Scalar type for all model math. Double by default so gradient checks have
// enough headroom; -DBLTD_REAL32 switches the whole build to float.
#ifdef BLTD_REAL32
using real = float;
#else
using real = double;
#endif

// Vocabulary: 256 raw bytes plus four specials.
using Symbol = int32_t;
inline constexpr Symbol kVocabSize = 260;
inline constexpr Symbol kBos = 256;
inline constexpr Symbol kEos = 257;
inline constexpr Symbol kPad = 258;
inline constexpr Symbol kMask = 259;

using ByteSeq = std::vector<Symbol>;

inline bool is_raw_byte(Symbol s) { return s >= 0 && s < 256; }

inline ByteSeq to_symbols(const std::string& bytes, bool prepend_bos) {
  ByteSeq out;
  out.reserve(bytes.size() + 1);
  if (prepend_bos) out.push_back(kBos);
  for (unsigned char c : bytes) out.push_back(static_cast<Symbol>(c));
  return out;
}

// Deterministic splitmix64-based generator. std:: distributions are
// implementation-defined, so all draws are made explicit here.
struct Rng {
  uint64_t state = 0x9e3779b97f4a7c15ull;

  explicit Rng(uint64_t seed = 0) { state = seed + 0x9e3779b97f4a7c15ull; }

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval (0, 1).
  double u01_open() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next() % n; }

  // Box-Muller standard normal.
  double normal() {
    double u1 = u01_open();
    double u2 = u01_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Independent stream derived from (seed, a, b); used for per-example data
  // preparation so examples can be prepared in any order.
  static Rng stream(uint64_t seed, uint64_t a, uint64_t b) {
    Rng mix(seed);
    mix.state ^= 0x632be59bd9b4e019ull * (a + 1);
    mix.next();
    mix.state ^= 0x9e6c63d0876a9a47ull * (b + 1);
    mix.next();
    return mix;
  }
};

}  // namespace bltd
