// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace dualsig {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Seed derivation used by every subsystem:
///   derive_seed(root, label, index) = splitmix64(splitmix64(root ^ fnv1a64(label)) + index)
/// so that "data", "init", "sampling" and "train" streams are independent of each other
/// and of the order in which they are requested.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0);

/// Fisher-Yates shuffle drawing from `rng` with a fixed, library-independent index rule.
template <typename T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Uniform integer in [0, n) by modulo reduction; n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string hex64(std::uint64_t value);

}  // namespace dualsig
