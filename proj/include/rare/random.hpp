#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>

namespace rare {

/// Counter-based random stream.
///
/// Output i of a stream is mix(key + i * golden), i.e. SplitMix64 evaluated at
/// an explicit counter. Child streams are derived from (key, tag, index), so a
/// stream's contents depend only on how it was keyed and never on which thread
/// or in which order it is consumed.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) noexcept;

  /// Stream keyed by (master seed, stage tag, index).
  static RandomStream keyed(std::uint64_t master_seed, std::string_view tag,
                            std::uint64_t index = 0) noexcept;

  /// Independent child stream; does not advance this stream.
  [[nodiscard]] RandomStream derive(std::string_view tag, std::uint64_t index = 0) const noexcept;

  std::uint64_t next() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;
/// FNV-1a, stable across platforms.
std::uint64_t hash_string(std::string_view s) noexcept;

/// Runs body(i) for i in [0, count) on up to `workers` threads. Work is split
/// into contiguous blocks; callers write results by index.
void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace rare
