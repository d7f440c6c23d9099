#pragma once

#include <cstdint>
#include <random>

namespace bfmm {

namespace detail {

// SplitMix64 finalizer; used only to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Seedable random stream.
///
/// A stream is identified by a root seed plus a path of 64-bit tags; derive()
/// appends a tag. Two streams with different paths are seeded from distinct
/// hashes and never share engine state, so every (chain, phase) pair can own
/// its own stream and results do not depend on the order phases run in.
class RngStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RngStream(std::uint64_t seed = 0) : key_(detail::mix64(seed)) {
    reseed();
  }

  RngStream derive(std::uint64_t tag) const {
    RngStream child;
    child.key_ = detail::mix64(key_ ^ detail::mix64(tag + 0x632be59bd9b4e019ULL));
    child.reseed();
    return child;
  }

  std::uint64_t key() const { return key_; }

  engine_type& engine() { return engine_; }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = std::generate_canonical<double, 53>(engine_);
    } while (u <= 0.0 || u >= 1.0);
    return u;
  }

  double normal() { return normal_(engine_); }

  double gamma(double shape) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

 private:
  void reseed() {
    std::seed_seq seq{static_cast<std::uint32_t>(key_),
                      static_cast<std::uint32_t>(key_ >> 32)};
    engine_.seed(seq);
    normal_.reset();
  }

  std::uint64_t key_ = 0;
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bfmm
