// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualsig/model.hpp"
#include "dualsig/tokenizer.hpp"
#include "dualsig/unify.hpp"
#include "json.hpp"

namespace dualsig {

struct PerplexityResult {
  double perplexity = 0.0;
  double nll_sum = 0.0;
  std::size_t tokens = 0;  // scored positions
};

/// exp of the mean next-token NLL over `corpus`. Windows of `window` tokens
/// (0 means max_seq_len) start every `stride` tokens (0 means `window`, i.e.
/// non-overlapping). A window's first token has no context and is not
/// scored; with overlapping windows, positions an earlier window scored are
/// skipped. Targets equal to `pad` are excluded.
template <typename T>
PerplexityResult perplexity(const Model<T>& model, std::span<const TokenId> corpus, std::size_t window = 0,
                            std::size_t stride = 0, TokenId pad = 0);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  void add(bool predicted, bool gold);
  bool operator==(const Confusion&) const = default;
};

double accuracy(const Confusion& c);
/// Binary F1 with True as the positive class; 0 when tp + fp + fn = 0.
double f1_score(const Confusion& c);
/// Matthews correlation; 0 when any marginal is empty.
double matthews(const Confusion& c);

struct TaskMetrics {
  Confusion confusion;
  double accuracy = 0.0;
  double f1 = 0.0;
  double matthews = 0.0;

  static TaskMetrics from(const Confusion& c);
};

struct JudgeOptions {
  std::size_t batch_size = 32;
};

struct JudgeReport {
  std::map<std::string, TaskMetrics> tasks;  // keyed by PropositionSample::task
  TaskMetrics overall;
  std::size_t judged = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skip_reasons;  // first few, for diagnostics

  /// Unweighted mean of per-task accuracies.
  double mean_accuracy() const;
};

/// Prediction is True iff the True logit is strictly larger. Samples that do
/// not parse, exceed max_seq_len, or do not encode to a final [cls] are
/// skipped and counted.
template <typename T>
JudgeReport judge(const Model<T>& model, const Vocab& vocab, const std::vector<PropositionSample>& samples,
                  const JudgeOptions& options = {});

/// Per-sample predictions of the same rule; nullopt marks a skipped sample.
template <typename T>
std::vector<std::optional<bool>> predict(const Model<T>& model, const Vocab& vocab,
                                         const std::vector<PropositionSample>& samples,
                                         const JudgeOptions& options = {}, std::vector<std::string>* reasons = nullptr);

/// FNV-1a over the config and raw parameter bytes.
template <typename T>
std::uint64_t model_hash(const Model<T>& model);

struct EvalReport {
  std::map<std::string, PerplexityResult> perplexity;  // keyed by corpus name
  JudgeReport judgment;
  std::uint64_t model_hash = 0;
  std::uint64_t config_hash = 0;
};

nlohmann::json to_json(const Confusion& c);
nlohmann::json to_json(const TaskMetrics& m);
nlohmann::json to_json(const JudgeReport& r);
nlohmann::json to_json(const EvalReport& r);

}  // namespace dualsig
