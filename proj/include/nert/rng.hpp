// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace nert {

/// Counter-based generator: value k of a stream is splitmix64(key + k).
/// Streams are derived from a root seed by name, so independent modules draw
/// from independent, reproducible sequences regardless of call order.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t hash(std::string_view name);

  /// Independent child stream identified by `name`.
  Rng split(std::string_view name) const { return Rng(mix(key_ ^ hash(name))); }
  Rng split(std::uint64_t index) const { return Rng(mix(key_ ^ mix(index + 0x632be59bd9b4e019ULL))); }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace nert
