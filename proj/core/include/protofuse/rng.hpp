#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace protofuse {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter), so a stream can be
/// reproduced from its seed alone and split into independent child streams
/// by tag. Child streams are what parallel workers own; a single Rng is never
/// shared between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Standard normal draw (Box-Muller, one value per call).
  double normal();

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);

  /// Independent child stream identified by `tag`. Does not advance this stream.
  [[nodiscard]] Rng split(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace protofuse
