#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace vitca {

// 64-bit Mersenne Twister with distributions implemented here rather than
// taken from <random>, whose distribution algorithms differ between standard
// libraries. State round-trips through a text string for checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Uniform on [0, n); unbiased (rejection sampling). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Uniform on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform01() < p; }
  // Standard normal via Box-Muller; no cached second sample.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Independent generator seeded from this one's next output.
  Rng split() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

  std::string state() const;
  static Rng from_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vitca
