#pragma once
#include <cstdint>

namespace mrhom {

// xoshiro256++ with splitmix64 seeding (Blackman & Vigna). Self-contained so
// that seeded datasets are bit-reproducible across standard libraries and
// platforms; the algorithm name is recorded in dataset provenance.
class Xoshiro256pp {
 public:
  static constexpr const char* kName = "xoshiro256++/splitmix64";

  explicit Xoshiro256pp(std::uint64_t seed) { seed_from(seed); }

  // Derived stream for independent substreams (per scan point, per repeat).
  Xoshiro256pp(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b) {
    std::uint64_t x = seed;
    x = splitmix(x) ^ (0x9e3779b97f4a7c15ULL * (stream_a + 1));
    x = splitmix(x) ^ (0xbf58476d1ce4e5b9ULL * (stream_b + 1));
    seed_from(splitmix(x));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t splitmix(std::uint64_t&& state) {
    std::uint64_t s = state;
    return splitmix(s);
  }

  void seed_from(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix(sm);
  }

  std::uint64_t s_[4];
};

}  // namespace mrhom
