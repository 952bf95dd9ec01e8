#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace vinpaint {

// Seeded random stream with distributions implemented on top of the raw
// engine output. The standard distribution objects are implementation
// defined, so drawing through them would tie generated datasets to one
// libstdc++ version; these fixed constructions do not.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return (engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + (int)(uniform() * (double)(hi - lo + 1));
  }

  // Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Derives an independent stream; used to give each dataset clip and each
  // model its own seed from the run seed.
  Rng fork(uint64_t salt) {
    uint64_t x = engine_() ^ (salt * 0x9e3779b97f4a7c15ULL);
    return Rng(splitmix(x));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    int sp = 0;
    is >> engine_ >> sp >> spare_;
    has_spare_ = sp != 0;
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vinpaint
