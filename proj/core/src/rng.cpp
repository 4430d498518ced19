// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/rng.hpp"

#include <algorithm>

#include "opvi/errors.hpp"

namespace opvi {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t mixed_key) : engine_(mixed_key) {}

RngStream RngStream::derive(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> path) {
  return derive(seed, std::vector<std::uint64_t>(path));
}

RngStream RngStream::derive(std::uint64_t seed,
                            const std::vector<std::uint64_t>& path) {
  std::uint64_t key = splitmix64(seed ^ 0x6f70766900000001ULL);
  for (std::uint64_t p : path) {
    key = splitmix64(key ^ splitmix64(p + 0x9e3779b97f4a7c15ULL));
  }
  return RngStream(key);
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
}

Eigen::VectorXd RngStream::normal_vector(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal();
  return v;
}

std::vector<int> RngStream::sample_without_replacement(int n, int k) {
  if (k < 0 || k > n) {
    throw InvalidArgumentError("sample_without_replacement: k out of range");
  }
  // Floyd's algorithm; result sorted so downstream iteration order is fixed.
  std::vector<int> out;
  out.reserve(k);
  for (int j = n - k; j < n; ++j) {
    int t = static_cast<int>(uniform_int(0, j));
    if (std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    } else {
      out.push_back(j);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace opvi
