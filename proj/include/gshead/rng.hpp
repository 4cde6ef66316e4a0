#pragma once

#include <cmath>
#include <cstdint>

namespace gshead {

// Deterministic generator with hand-rolled distributions. std:: distributions
// are implementation-defined, which would break the byte-identical
// reproducibility contract across standard libraries; this one is pinned.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ^ 0x9E3779B97F4A7C15ull) {
    // splitmix warmup so nearby seeds decorrelate
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
    uint64_t span = uint64_t(hi_inclusive - lo) + 1;
    return lo + int64_t(next_u64() % span);
  }

  // standard normal via Box-Muller; one value per call, cached pair
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // independent stream for a named sub-purpose
  Rng fork(uint64_t salt) { return Rng(next_u64() ^ (salt * 0xD1342543DE82EF95ull)); }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0;
};

// Stateless mixing for deriving per-step / per-item seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  return z ^ (z >> 31);
}

}  // namespace gshead
