// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualsig/model.hpp"
#include "json.hpp"

namespace dualsig {

enum class TrainMode { Dual, LanguageOnly, TeacherOnly };
enum class StepType { Language, Teacher };

TrainMode parse_train_mode(std::string_view name);
std::string_view to_string(TrainMode mode);
std::string_view to_string(StepType type);

struct MixRatio {
  std::size_t language = 2;
  std::size_t teacher = 1;
  bool operator==(const MixRatio&) const = default;
};

struct TrainConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  std::size_t language_batch_size = 8;
  std::size_t teacher_batch_size = 8;
  MixRatio mix;
  std::size_t total_steps = 1000;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 0;        // 0 disables periodic evaluation
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  TrainMode mode = TrainMode::Dual;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Step-type sequence: with ratio a:b, step i is a language step iff
/// i mod (a+b) < a. Single-signal modes keep the sequence and skip the
/// steps of the other signal, so trained steps line up with a dual run.
class Schedule {
 public:
  Schedule(MixRatio ratio, TrainMode mode);
  StepType at(std::size_t step) const;
  /// False for a step the mode skips.
  bool runs(std::size_t step) const;
  /// Number of trained steps of `type` among steps [0, steps).
  std::size_t count(StepType type, std::size_t steps) const;

 private:
  MixRatio ratio_;
  TrainMode mode_;
};

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;

  static OptimizerState zeros_like(const std::vector<NamedTensor<T>>& params);
};

/// One AdamW step over every parameter that has a gradient:
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta.
template <typename T>
void adamw_update(const std::vector<NamedTensor<T>>& params, OptimizerState<T>& state, const TrainConfig& config);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<NamedTensor<T>>& params, double max_norm);

struct TeacherExample {
  std::vector<TokenId> tokens;  // ends in [cls]
  bool label = false;
};

struct TrainingData {
  std::vector<std::vector<TokenId>> language;  // fixed-length windows of the language stream
  std::vector<TeacherExample> teacher;
  TokenId pad = 0;
  TokenId cls = 3;
};

/// Splits a token stream into consecutive non-overlapping windows of
/// `window` tokens; a short tail of at least two tokens is kept.
std::vector<std::vector<TokenId>> make_language_windows(std::span<const TokenId> stream, std::size_t window);

struct StepRecord {
  std::size_t step = 0;
  StepType type = StepType::Language;
  double loss = 0.0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

nlohmann::json to_json(const StepRecord& record);

struct TrainCounters {
  std::size_t step = 0;
  std::size_t language_steps = 0;
  std::size_t teacher_steps = 0;
  bool operator==(const TrainCounters&) const = default;
};

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, TrainConfig config, const TrainingData& data);

  /// Runs the next step the mode trains, passing over skipped ones.
  StepRecord step();

  /// Runs until `counters().step == config.total_steps`. Callbacks fire after
  /// each step, and after steps that are multiples of the eval/checkpoint intervals.
  struct Hooks {
    std::function<void(const StepRecord&)> on_step;
    std::function<void(std::size_t step)> on_eval;
    std::function<void(std::size_t step)> on_checkpoint;
  };
  void run(const Hooks& hooks = {});

  /// Mean next-token NLL of the batch, then one optimizer update.
  double language_step(const std::vector<std::vector<TokenId>>& batch);
  /// Mean two-class cross-entropy at [cls], then one optimizer update.
  double teacher_step(const std::vector<TeacherExample>& batch);

  /// Deterministic batch for the k-th language / teacher step.
  std::vector<std::vector<TokenId>> language_batch(std::size_t k) const;
  std::vector<TeacherExample> teacher_batch(std::size_t k) const;

  const TrainConfig& config() const noexcept { return config_; }
  const Schedule& schedule() const noexcept { return schedule_; }
  const TrainCounters& counters() const noexcept { return counters_; }
  const OptimizerState<T>& optimizer() const noexcept { return opt_; }
  Model<T>& model() noexcept { return model_; }

  /// Restores counters and optimizer moments, e.g. from a checkpoint.
  void restore(const TrainCounters& counters, OptimizerState<T> state);

 private:
  double apply(Tensor<T> loss, StepType type);
  const std::vector<std::size_t>& epoch_order(const char* stream, std::size_t n, std::size_t epoch) const;

  Model<T>& model_;
  TrainConfig config_;
  const TrainingData& data_;
  Schedule schedule_;
  std::vector<NamedTensor<T>> params_;
  OptimizerState<T> opt_;
  TrainCounters counters_;
  double last_grad_norm_ = 0.0;
  mutable std::map<std::pair<std::string, std::size_t>, std::vector<std::size_t>> orders_;
};

// Checkpoints: "DSIGCKPT", u32 version, u64 header length, JSON header,
// raw little-endian parameter values then Adam moments in header order,
// and a trailing FNV-1a-64 of all preceding bytes. Written atomically.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::uint64_t vocab_hash = 0;
  Parameters<T> params;
  OptimizerState<T> optimizer;
  TrainCounters counters;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, const OptimizerState<T>& optimizer,
                     const TrainCounters& counters, const TrainConfig& train_config, std::uint64_t vocab_hash);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Element type stored in a checkpoint ("f32" or "f64").
std::string checkpoint_dtype(const std::filesystem::path& path);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace dualsig
