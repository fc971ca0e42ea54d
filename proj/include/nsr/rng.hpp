#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace nsr {

// Counter-based deterministic RNG. Every consumer derives its stream from
// (seed, stream name, index), so results do not depend on worker count or on
// how many draws other subsystems made. This is what makes checkpoint-resume
// and the seeded-rerun contracts bit-exact.
class Rng {
 public:
  Rng() : state_(0x9e3779b97f4a7c15ull) {}
  explicit Rng(uint64_t state) : state_(state ? state : 0x9e3779b97f4a7c15ull) {}

  static uint64_t hash_combine(uint64_t a, uint64_t b) {
    // 128-bit multiply mix (xxhash-style avalanche).
    a += 0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2);
    a ^= a >> 30;
    a *= 0xbf58476d1ce4e5b9ull;
    a ^= a >> 27;
    a *= 0x94d049bb133111ebull;
    a ^= a >> 31;
    return a;
  }

  static uint64_t hash_name(std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  // Named sub-stream: rng for (seed, stream, counter).
  static Rng stream(uint64_t seed, std::string_view name, uint64_t counter = 0) {
    uint64_t s = hash_combine(seed, hash_name(name));
    s = hash_combine(s, counter);
    return Rng(s);
  }

  uint64_t next_u64() {
    // splitmix64
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

  double normal() {
    // Box-Muller; one value per call keeps the stream layout simple.
    double u1 = uniform();
    double u2 = uniform();
    u1 = u1 <= 0.0 ? 1e-300 : u1;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace nsr
