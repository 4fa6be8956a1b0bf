// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "dualsig/rng.hpp"
#include "dualsig/tensor.hpp"

namespace dualsig {

using TokenId = std::int32_t;

// Differentiable ops. Every op validates shapes, rejects non-finite results
// with NumericError, and records itself on the active tape when any input
// requires grad. Broadcasting exists only in add_bias.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// x[..., n] + bias[n], broadcast over all leading axes.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

/// GELU, tanh approximation (GPT-2).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Mean over counted rows of -log softmax(logits)[i, targets[i]]. Rows whose
/// target equals `ignore_index` are skipped; a batch with nothing counted is a
/// ContractError.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets,
                        std::optional<TokenId> ignore_index = std::nullopt);

/// Normalizes over the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Row lookup: out[i] = table[ids[i]].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids);

/// out[i] = x[rows[i]] for a 2-D x.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

/// Inverted dropout. rate == 0 returns x unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng);

/// Geometry of a right-padded batch laid out as [batch * seq_len, ...] rows.
struct BatchLayout {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::span<const std::size_t> lengths;  // valid tokens per sequence, 1..seq_len
};

/// Fused multi-head causal self-attention over a packed [B*T, 3*d] q|k|v tensor.
/// Position i of sequence b attends to keys j <= i with j < lengths[b].
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& qkv, const BatchLayout& layout, std::size_t n_heads);

#define DUALSIG_DECLARE_OPS(T)                                                                       \
  extern template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  extern template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  extern template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  extern template Tensor<T> scale(const Tensor<T>&, T);                                              \
  extern template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                            \
  extern template Tensor<T> sum(const Tensor<T>&);                                                   \
  extern template Tensor<T> mean(const Tensor<T>&);                                                  \
  extern template Tensor<T> tanh(const Tensor<T>&);                                                  \
  extern template Tensor<T> gelu(const Tensor<T>&);                                                  \
  extern template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                  \
  extern template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const TokenId>,                \
                                          std::optional<TokenId>);                                   \
  extern template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
  extern template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>);                   \
  extern template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);             \
  extern template Tensor<T> dropout(const Tensor<T>&, double, Rng&);                                 \
  extern template Tensor<T> causal_attention(const Tensor<T>&, const BatchLayout&, std::size_t);

DUALSIG_DECLARE_OPS(float)
DUALSIG_DECLARE_OPS(double)
DUALSIG_DECLARE_OPS(long double)

#undef DUALSIG_DECLARE_OPS

}  // namespace dualsig
