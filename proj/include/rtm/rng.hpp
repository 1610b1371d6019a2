#pragma once

#include <cmath>
#include <cstdint>

namespace rtm {

// Counter-based splitmix64 generator. A (seed, stream) pair fully determines
// the sequence, and split() derives independent child streams, so parallel
// generation reproduces bit-for-bit regardless of scheduling.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed + 0x9e3779b97f4a7c15ull) ^ mix(stream + 0xd1b54a32d192ed03ull)) {}

  SplitRng split(std::uint64_t stream) const {
    SplitRng child(0);
    child.key_ = mix(key_ + mix(stream + 0x2545f4914f6cdd1dull));
    return child;
  }

  std::uint64_t next_u64() {
    return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull);
  }

  double next_unit() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_open_unit() {  // (0, 1]
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(next_open_unit()));
    double a = 2.0 * 3.14159265358979323846 * next_unit();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rtm
