// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/model.hpp"

#include <algorithm>
#include <random>

namespace dualsig {

void ModelConfig::validate() const {
  if (n_layers == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 || max_seq_len == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (vocab_size == 0) throw ConfigError("model vocab_size must be set");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

namespace {

template <typename T>
Tensor<T> normal(Shape shape, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 0.02);
  std::vector<T> values(shape_numel(shape));
  for (T& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from_data(std::move(shape), std::move(values), true);
}

template <typename T>
Tensor<T> constant(std::size_t n, T value) {
  return Tensor<T>::filled({n}, value, true);
}

}  // namespace

template <typename T>
Parameters<T> Parameters<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.d_model;
  Parameters p;
  p.tok_emb = normal<T>({config.vocab_size, d}, rng);
  p.pos_emb = normal<T>({config.max_seq_len, d}, rng);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    BlockParams<T> b;
    b.ln1_gamma = constant<T>(d, T(1));
    b.ln1_beta = constant<T>(d, T(0));
    b.attn_w = normal<T>({d, 3 * d}, rng);
    b.attn_b = constant<T>(3 * d, T(0));
    b.proj_w = normal<T>({d, d}, rng);
    b.proj_b = constant<T>(d, T(0));
    b.ln2_gamma = constant<T>(d, T(1));
    b.ln2_beta = constant<T>(d, T(0));
    b.fc_w = normal<T>({d, config.d_ff}, rng);
    b.fc_b = constant<T>(config.d_ff, T(0));
    b.out_w = normal<T>({config.d_ff, d}, rng);
    b.out_b = constant<T>(d, T(0));
    p.blocks.push_back(std::move(b));
  }
  p.lnf_gamma = constant<T>(d, T(1));
  p.lnf_beta = constant<T>(d, T(0));
  p.lm_head = normal<T>({d, config.vocab_size}, rng);
  p.prop_w = normal<T>({d, 2}, rng);
  p.prop_b = constant<T>(2, T(0));
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> Parameters<T>::named() const {
  std::vector<NamedTensor<T>> out;
  out.push_back({"tok_emb", tok_emb});
  out.push_back({"pos_emb", pos_emb});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gamma", b.ln1_gamma});
    out.push_back({p + "ln1.beta", b.ln1_beta});
    out.push_back({p + "attn.w", b.attn_w});
    out.push_back({p + "attn.b", b.attn_b});
    out.push_back({p + "attn.proj_w", b.proj_w});
    out.push_back({p + "attn.proj_b", b.proj_b});
    out.push_back({p + "ln2.gamma", b.ln2_gamma});
    out.push_back({p + "ln2.beta", b.ln2_beta});
    out.push_back({p + "mlp.fc_w", b.fc_w});
    out.push_back({p + "mlp.fc_b", b.fc_b});
    out.push_back({p + "mlp.out_w", b.out_w});
    out.push_back({p + "mlp.out_b", b.out_b});
  }
  out.push_back({"ln_f.gamma", lnf_gamma});
  out.push_back({"ln_f.beta", lnf_beta});
  out.push_back({"lm_head.W_v", lm_head});
  out.push_back({"prop_head.W_p", prop_w});
  out.push_back({"prop_head.b_p", prop_b});
  return out;
}

template <typename T>
std::size_t Parameters<T>::count() const {
  std::size_t n = 0;
  for (const auto& nt : named()) n += nt.tensor.numel();
  return n;
}

bool is_trunk_parameter(std::string_view name) {
  return !(name.starts_with("lm_head.") || name.starts_with("prop_head."));
}

TokenBatch TokenBatch::pack(const std::vector<std::vector<TokenId>>& sequences, TokenId pad) {
  if (sequences.empty()) throw ShapeError("cannot pack an empty batch");
  TokenBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) {
    std::size_t len = s.size();
    while (len > 0 && s[len - 1] == pad) --len;
    if (len == 0) throw ShapeError("cannot pack an empty or all-pad sequence");
    b.lengths.push_back(len);
    b.seq_len = std::max(b.seq_len, s.size());
  }
  b.ids.assign(b.batch * b.seq_len, pad);
  for (std::size_t i = 0; i < b.batch; ++i) {
    std::copy(sequences[i].begin(), sequences[i].end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.seq_len));
  }
  return b;
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t init_seed)
    : config_(config), params_(Parameters<T>::init(config, init_seed)) {}

template <typename T>
Model<T>::Model(ModelConfig config, Parameters<T> params) : config_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.blocks.size() != config_.n_layers || params_.tok_emb.dim(0) != config_.vocab_size ||
      params_.tok_emb.dim(1) != config_.d_model || params_.pos_emb.dim(0) != config_.max_seq_len) {
    throw ShapeError("parameters do not match model config");
  }
}

template <typename T>
Tensor<T> Model<T>::hidden(const TokenBatch& batch, Rng* dropout_rng) const {
  if (batch.seq_len == 0 || batch.seq_len > config_.max_seq_len) {
    throw LengthError("sequence length " + std::to_string(batch.seq_len) + " outside [1, max_seq_len=" +
                      std::to_string(config_.max_seq_len) + "]");
  }
  const double rate = dropout_rng ? config_.dropout : 0.0;
  Rng dummy;
  Rng& rng = dropout_rng ? *dropout_rng : dummy;

  std::vector<TokenId> positions(batch.batch * batch.seq_len);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<TokenId>(i % batch.seq_len);
  Tensor<T> x = add(embedding(params_.tok_emb, batch.ids), embedding(params_.pos_emb, positions));
  x = dropout(x, rate, rng);
  const BatchLayout layout = batch.layout();
  for (const auto& b : params_.blocks) {
    Tensor<T> h = layer_norm(x, b.ln1_gamma, b.ln1_beta);
    Tensor<T> qkv = add_bias(matmul(h, b.attn_w), b.attn_b);
    Tensor<T> att = causal_attention(qkv, layout, config_.n_heads);
    att = add_bias(matmul(att, b.proj_w), b.proj_b);
    x = add(x, dropout(att, rate, rng));
    h = layer_norm(x, b.ln2_gamma, b.ln2_beta);
    Tensor<T> f = gelu(add_bias(matmul(h, b.fc_w), b.fc_b));
    f = add_bias(matmul(f, b.out_w), b.out_b);
    x = add(x, dropout(f, rate, rng));
  }
  return layer_norm(x, params_.lnf_gamma, params_.lnf_beta);
}

template <typename T>
Tensor<T> Model<T>::lm_logits(const TokenBatch& batch, Rng* dropout_rng) const {
  return matmul(hidden(batch, dropout_rng), params_.lm_head);
}

namespace {

std::vector<TokenId> shifted_targets(const TokenBatch& batch, TokenId pad) {
  std::vector<TokenId> targets(batch.ids.size(), pad);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t i = 0; i + 1 < batch.lengths[b]; ++i) {
      targets[b * batch.seq_len + i] = batch.ids[b * batch.seq_len + i + 1];
    }
  }
  return targets;
}

std::vector<std::size_t> cls_rows(const TokenBatch& batch, TokenId cls) {
  std::vector<std::size_t> rows(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const std::size_t last = batch.lengths[b] - 1;
    if (batch.ids[b * batch.seq_len + last] != cls) {
      throw FormatError("proposition " + std::to_string(b) + " does not end in [cls]");
    }
    rows[b] = b * batch.seq_len + last;
  }
  return rows;
}

std::vector<TokenId> class_targets(std::span<const std::uint8_t> labels, std::size_t batch) {
  if (labels.size() != batch) throw ShapeError("proposition loss: one label per sequence required");
  std::vector<TokenId> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    targets[i] = static_cast<TokenId>(labels[i] ? kTrueClass : kFalseClass);
  }
  return targets;
}

}  // namespace

template <typename T>
Tensor<T> Model<T>::lm_loss(const TokenBatch& batch, TokenId pad, Rng* dropout_rng) const {
  const auto targets = shifted_targets(batch, pad);
  return cross_entropy(lm_logits(batch, dropout_rng), targets, pad);
}

template <typename T>
Tensor<T> Model<T>::proposition_logits(const TokenBatch& batch, TokenId cls, Rng* dropout_rng) const {
  const auto rows = cls_rows(batch, cls);
  Tensor<T> h_cls = gather_rows(hidden(batch, dropout_rng), rows);
  return add_bias(matmul(h_cls, params_.prop_w), params_.prop_b);
}

template <typename T>
Tensor<T> Model<T>::proposition_loss(const TokenBatch& batch, std::span<const std::uint8_t> labels, TokenId cls,
                                     Rng* dropout_rng) const {
  const auto targets = class_targets(labels, batch.batch);
  return cross_entropy(proposition_logits(batch, cls, dropout_rng), targets);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Model<T>::dual_losses(const TokenBatch& batch, std::span<const std::uint8_t> labels,
                                                      TokenId pad, TokenId cls) const {
  const auto lm_targets = shifted_targets(batch, pad);
  const auto rows = cls_rows(batch, cls);
  const auto targets = class_targets(labels, batch.batch);
  Tensor<T> h = hidden(batch);
  Tensor<T> lm = cross_entropy(matmul(h, params_.lm_head), lm_targets, pad);
  Tensor<T> logits = add_bias(matmul(gather_rows(h, rows), params_.prop_w), params_.prop_b);
  return {lm, cross_entropy(logits, targets)};
}

template <typename T>
Tensor<T> Model<T>::forward_lm(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw LengthError("forward_lm: empty sequence");
  if (tokens.size() > config_.max_seq_len) {
    throw LengthError("forward_lm: sequence of " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  TokenBatch b;
  b.batch = 1;
  b.seq_len = tokens.size();
  b.ids.assign(tokens.begin(), tokens.end());
  b.lengths = {tokens.size()};
  return lm_logits(b);
}

template <typename T>
PropositionDistribution<T> Model<T>::forward_proposition(std::span<const TokenId> tokens, TokenId cls,
                                                         TokenId pad) const {
  std::size_t len = tokens.size();
  while (len > 0 && tokens[len - 1] == pad) --len;
  if (len == 0 || tokens[len - 1] != cls) throw FormatError("forward_proposition: last non-pad token is not [cls]");
  if (tokens.size() > config_.max_seq_len) throw LengthError("forward_proposition: sequence exceeds max_seq_len");
  TokenBatch b;
  b.batch = 1;
  b.seq_len = tokens.size();
  b.ids.assign(tokens.begin(), tokens.end());
  b.lengths = {len};
  Tensor<T> probs = softmax(proposition_logits(b, cls), 1);
  return {probs.data()[kTrueClass], probs.data()[kFalseClass]};
}

template struct Parameters<float>;
template struct Parameters<double>;
template struct Parameters<long double>;
template class Model<float>;
template class Model<double>;
template class Model<long double>;

}  // namespace dualsig
