// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dualsig/model.hpp"

namespace dualsig {

enum class DecodeStrategy { Greedy, TopK, Beam };

DecodeStrategy parse_decode_strategy(std::string_view name);

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::TopK;
  std::size_t k = 50;
  std::size_t beam_width = 5;
  std::size_t max_new = 256;
  std::uint64_t seed = 0;
  std::optional<TokenId> eos;
};

/// Continues `prompt` and returns only the new tokens (the terminating [eos],
/// if produced, is not included). The context is truncated to the last
/// max_seq_len tokens once the sequence outgrows the model.
template <typename T>
std::vector<TokenId> generate(const Model<T>& model, std::span<const TokenId> prompt, const DecodeOptions& options);

extern template std::vector<TokenId> generate(const Model<float>&, std::span<const TokenId>, const DecodeOptions&);
extern template std::vector<TokenId> generate(const Model<double>&, std::span<const TokenId>, const DecodeOptions&);

}  // namespace dualsig
