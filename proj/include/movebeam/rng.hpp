#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace movebeam {

// Deterministic random generator. Distribution helpers are hand-rolled on top
// of mt19937_64 so streams are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return (double)(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; second value cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  long randint(long n) {
    uint64_t un = (uint64_t)n;
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return (long)(x % un);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (long i = (long)v.size() - 1; i > 0; --i) std::swap(v[(size_t)i], v[(size_t)randint(i + 1)]);
  }

  // Derive a child seed for an independent stream (splitmix64 finalizer).
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::string save_state() const {
    uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(spare_));
    std::memcpy(&bits, &spare_, sizeof(bits));
    std::ostringstream os;
    os << eng_ << " " << (have_spare_ ? 1 : 0) << " " << bits;
    return os.str();
  }
  void load_state(const std::string& s) {
    std::istringstream is(s);
    int hs = 0;
    uint64_t bits = 0;
    is >> eng_ >> hs >> bits;
    have_spare_ = hs != 0;
    std::memcpy(&spare_, &bits, sizeof(bits));
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace movebeam
