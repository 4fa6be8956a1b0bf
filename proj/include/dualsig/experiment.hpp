// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dualsig/eval.hpp"
#include "dualsig/generate.hpp"
#include "dualsig/synthetic.hpp"
#include "dualsig/tokenizer.hpp"
#include "dualsig/trainer.hpp"
#include "dualsig/unify.hpp"
#include "json.hpp"

namespace dualsig {

// Seeds. Every random draw descends from the root seed of the config:
//   data      derive_seed(root, "data")      template and negative draws, unified shuffle
//   eval data derive_seed(root, "eval-data") propositions of the held-out splits
//   init      derive_seed(root, "init")      parameter initialization
//   train     derive_seed(root, "train")     batch order and dropout (TrainConfig::seed)
//   sampling  derive_seed(root, "sampling")  top-k decoding

struct DataConfig {
  std::filesystem::path registry;
  std::filesystem::path corpus;          // language text, one document per line
  std::filesystem::path heldout_corpus;  // optional perplexity corpus
  std::size_t cap_per_dataset = 100000;
  bool task_prefix = true;
  std::size_t negatives_per_positive = 1;
  std::vector<std::string> holdout;  // dataset ids kept out of teacher training
  TokenizerMode tokenizer = TokenizerMode::Word;
  std::size_t vocab_max = 4096;
  std::size_t window = 0;  // language window; 0 means max_seq_len
};

struct EvalConfig {
  std::size_t window = 0;
  std::size_t stride = 0;
  std::size_t batch_size = 32;
};

struct GenerateConfig {
  DecodeStrategy strategy = DecodeStrategy::TopK;
  std::size_t k = 50;
  std::size_t beam_width = 5;
  std::size_t max_new = 256;
};

enum class AblationKind { NoLanguageSignal, NoTaskPrefix, UnseenHoldout };

AblationKind parse_ablation_kind(std::string_view name);
std::string_view to_string(AblationKind kind);

struct AblationConfig {
  AblationKind kind = AblationKind::NoLanguageSignal;
  std::vector<std::string> holdout;  // for UnseenHoldout
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  GenerateConfig generate;
  AblationConfig ablate;

  /// Fills the derived fields (train seed) and validates every section.
  void resolve();
};

/// Desk-scale preset for the synthetic suite written by write_synthetic_suite:
/// a 2-layer, 64-wide model trained for 6000 interleaved steps. Data paths are
/// relative to the suite directory.
ExperimentConfig synthetic_desk_config(std::uint64_t seed = 0);

/// Relative paths are resolved against `base_dir`. Unknown keys are a ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Raw material of an experiment: language text and per-dataset examples.
struct ExperimentInputs {
  std::vector<std::string> corpus;
  std::vector<std::string> heldout_corpus;
  std::vector<DatasetInput> train;
  std::vector<DatasetInput> eval;  // held-out splits; may be empty
};

ExperimentInputs load_inputs(const DataConfig& data);
ExperimentInputs inputs_from_suite(const SyntheticSuite& suite);

/// Word or byte vocabulary over the corpus and every dataset's text. It does
/// not depend on prefix or holdout options, so ablation pairs share it.
Vocab build_vocab(const ExperimentInputs& inputs, const DataConfig& data);

/// Each corpus line encoded and followed by [eos].
std::vector<TokenId> encode_corpus(const Vocab& vocab, const std::vector<std::string>& lines);

struct PreparedData {
  UnifiedData unified;                           // teacher training pool
  std::vector<PropositionSample> eval_samples;  // every dataset's held-out split
  std::vector<TokenId> language_stream;
  std::vector<TokenId> heldout_stream;
  TrainingData training;
};

PreparedData prepare_data(const ExperimentConfig& config, const ExperimentInputs& inputs, const Vocab& vocab);

/// Tokenizes propositions for the teacher; a sample longer than max_seq_len
/// is a LengthError naming the sample.
std::vector<TeacherExample> encode_teacher(const Vocab& vocab, const std::vector<PropositionSample>& samples,
                                           std::size_t max_seq_len);

struct RunResult {
  EvalReport report;
  std::vector<StepRecord> log;
  TrainCounters counters;
  std::shared_ptr<Model<float>> model;
  OptimizerState<float> optimizer;  // moments after the last step
};

struct RunHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(Trainer<float>&, std::size_t step)> on_eval;
  std::function<void(Trainer<float>&, std::size_t step)> on_checkpoint;
};

EvalReport evaluate(const Model<float>& model, const Vocab& vocab, const PreparedData& data, const EvalConfig& eval);

/// Model config with the vocabulary size filled in from `vocab`.
ModelConfig resolved_model_config(const ExperimentConfig& config, const Vocab& vocab);

/// Trains a fresh model from the config and evaluates it. When `resume` is
/// given, its parameters, optimizer moments and counters are restored first.
RunResult run_experiment(const ExperimentConfig& config, const PreparedData& data, const Vocab& vocab,
                         const RunHooks& hooks = {}, std::optional<Checkpoint<float>> resume = std::nullopt);
RunResult run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs, const Vocab& vocab,
                         const RunHooks& hooks = {});

/// Config of the ablated variant of `base`. Seeds, step counts and data order
/// are shared with the base configuration.
ExperimentConfig ablation_variant(const ExperimentConfig& base, const AblationConfig& ablation,
                                  const ExperimentInputs& inputs);

/// Language-only run with as many steps as the dual run spends on language.
ExperimentConfig language_reference(const ExperimentConfig& dual);

struct AblationResult {
  AblationConfig ablation;
  RunResult baseline;
  RunResult variant;
};

AblationResult run_ablation(const ExperimentConfig& base, const AblationConfig& ablation,
                            const ExperimentInputs& inputs, const Vocab& vocab);

/// metric,baseline,variant,delta rows for perplexities and per-task accuracy, F1 and MCC.
std::string ablation_csv(const AblationResult& result);
nlohmann::json to_json(const AblationResult& result);

}  // namespace dualsig
