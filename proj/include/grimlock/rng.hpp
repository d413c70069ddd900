// Copyright 2026 The Grimlock Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "grimlock/bytes.hpp"

namespace grimlock {

/// Seeded randomness source for the simulation. mt19937_64 output is fully
/// specified by the standard, so a fixed seed yields identical byte streams
/// on every platform. Do not route std::*_distribution through this; those
/// are implementation-defined.
class DetRng {
 public:
  explicit DetRng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform value in [0, bound) via rejection sampling.
  uint64_t next_below(uint64_t bound);

  void fill(uint8_t* out, size_t n);

  template <size_t N>
  std::array<uint8_t, N> array() {
    std::array<uint8_t, N> out;
    fill(out.data(), N);
    return out;
  }

  Bytes bytes(size_t n) {
    Bytes out(n);
    fill(out.data(), n);
    return out;
  }

  /// Independent child stream; children drawn in a fixed order are stable.
  DetRng fork() { return DetRng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 engine_;
};

inline uint64_t DetRng::next_below(uint64_t bound) {
  if (bound == 0) return 0;
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % bound;
}

inline void DetRng::fill(uint8_t* out, size_t n) {
  size_t i = 0;
  while (i < n) {
    uint64_t v = next_u64();
    for (int b = 0; b < 8 && i < n; ++b, ++i) {
      out[i] = static_cast<uint8_t>(v >> (8 * b));
    }
  }
}

}  // namespace grimlock
