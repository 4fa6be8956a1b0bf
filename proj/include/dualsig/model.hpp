// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualsig/ops.hpp"
#include "dualsig/rng.hpp"

namespace dualsig {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 256;
  double dropout = 0.0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Output classes of the proposition head.
inline constexpr std::size_t kFalseClass = 0;
inline constexpr std::size_t kTrueClass = 1;

template <typename T>
struct BlockParams {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> attn_w, attn_b;  // d x 3d packed q|k|v
  Tensor<T> proj_w, proj_b;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> fc_w, fc_b;
  Tensor<T> out_w, out_b;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct Parameters {
  Tensor<T> tok_emb;  // vocab x d
  Tensor<T> pos_emb;  // max_seq_len x d
  std::vector<BlockParams<T>> blocks;
  Tensor<T> lnf_gamma, lnf_beta;
  Tensor<T> lm_head;  // W_v: d x vocab
  Tensor<T> prop_w;   // W_p: d x 2
  Tensor<T> prop_b;   // b_p: 2

  /// normal(0, 0.02) for matrices and embeddings, zeros for biases, ones for gains.
  static Parameters init(const ModelConfig& config, std::uint64_t seed);

  /// Stable, checkpoint-facing order.
  std::vector<NamedTensor<T>> named() const;
  std::size_t count() const;
};

/// True for parameters owned by the shared trunk (neither output head).
bool is_trunk_parameter(std::string_view name);

/// Right-padded batch of token sequences packed as batch * seq_len ids.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<TokenId> ids;
  std::vector<std::size_t> lengths;

  /// Pads to the longest sequence; trailing pads already present in a
  /// sequence are excluded from its length.
  static TokenBatch pack(const std::vector<std::vector<TokenId>>& sequences, TokenId pad);
  BatchLayout layout() const { return {batch, seq_len, lengths}; }
};

template <typename T>
struct PropositionDistribution {
  T p_true;
  T p_false;
};

/// Pre-LN decoder-only transformer with a language-model head and a
/// two-way proposition head over the final hidden state at [cls].
template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);
  Model(ModelConfig config, Parameters<T> params);

  const ModelConfig& config() const noexcept { return config_; }
  const Parameters<T>& params() const noexcept { return params_; }
  Parameters<T>& params() noexcept { return params_; }

  /// Final-layer (post layer-norm) states, [batch * seq_len, d_model].
  /// Dropout is applied only when `dropout_rng` is given.
  Tensor<T> hidden(const TokenBatch& batch, Rng* dropout_rng = nullptr) const;

  Tensor<T> lm_logits(const TokenBatch& batch, Rng* dropout_rng = nullptr) const;

  /// Mean next-token NLL over non-pad targets of the batch.
  Tensor<T> lm_loss(const TokenBatch& batch, TokenId pad, Rng* dropout_rng = nullptr) const;

  /// [batch, 2] logits W_p h_[cls] + b_p; the last non-pad token must be [cls].
  Tensor<T> proposition_logits(const TokenBatch& batch, TokenId cls, Rng* dropout_rng = nullptr) const;

  /// Mean two-class cross-entropy of the proposition head.
  Tensor<T> proposition_loss(const TokenBatch& batch, std::span<const std::uint8_t> labels, TokenId cls,
                             Rng* dropout_rng = nullptr) const;

  /// Both objectives of one batch from a single trunk pass: {LM loss, proposition loss}.
  std::pair<Tensor<T>, Tensor<T>> dual_losses(const TokenBatch& batch, std::span<const std::uint8_t> labels,
                                              TokenId pad, TokenId cls) const;

  /// Logits for a single unpadded sequence: row k scores token k+1.
  Tensor<T> forward_lm(std::span<const TokenId> tokens) const;

  /// Proposition distribution for one sequence; trailing pads are masked.
  PropositionDistribution<T> forward_proposition(std::span<const TokenId> tokens, TokenId cls, TokenId pad) const;

 private:
  ModelConfig config_;
  Parameters<T> params_;
};

extern template struct Parameters<float>;
extern template struct Parameters<double>;
extern template struct Parameters<long double>;
extern template class Model<float>;
extern template class Model<double>;
extern template class Model<long double>;

}  // namespace dualsig
