// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace opvi {

/// Deterministic substream of randomness addressed by (seed, path).
///
/// Every consumer of randomness derives its own stream from a root seed and
/// a short integer path, e.g. (iteration, set-id, worker-id). Streams with
/// different paths are statistically independent for practical purposes and
/// reproduce bit-identically for a fixed build. Callers own stream state;
/// there is no global RNG anywhere in the library.
class RngStream {
 public:
  static RngStream derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path);
  static RngStream derive(std::uint64_t seed,
                          const std::vector<std::uint64_t>& path);

  double normal();
  double uniform();  // [0, 1)
  /// Integer uniform on [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  Eigen::VectorXd normal_vector(int n);

  /// k distinct indices drawn uniformly from {0, ..., n-1}, ascending order.
  std::vector<int> sample_without_replacement(int n, int k);

  std::mt19937_64& engine() { return engine_; }

 private:
  explicit RngStream(std::uint64_t mixed_key);

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; used to mix stream keys.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace opvi
