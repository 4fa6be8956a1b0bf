// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dualsig {

/// The fixed set of task names usable as a task prefix.
inline constexpr std::array<std::string_view, 7> kTaskNames = {
    "Linguistic Acceptability", "Topic Classification",  "Story Cloze",
    "Sentiment Classification", "Question Answering",    "Paraphrase",
    "Natural Language Inference"};

bool is_task_name(std::string_view name);

enum class TaskKind { SingleText, TextPair, MultiChoice };

TaskKind parse_task_kind(std::string_view name);
std::string_view to_string(TaskKind kind);

struct TaskSpec {
  std::string task_name;
  TaskKind kind = TaskKind::SingleText;
  std::vector<std::string> labels;  // classification kinds only

  void validate() const;
};

/// A prompt pattern with exactly one {label_desc} slot. It may also refer to
/// {text} and {text2}. `body` lays out the instance text(s) before [sep];
/// when empty it defaults to "{text}" or "{text} | {text2}" by task kind.
struct Template {
  std::string id;
  std::string pattern;
  std::string body;
  std::map<std::string, std::string> label_desc;  // label -> description; missing labels describe themselves

  std::string describe(const std::string& label) const;
};

inline constexpr std::size_t kMaxTemplatesPerDataset = 10;

struct DatasetSpec {
  std::string id;
  TaskSpec task;
  std::vector<Template> templates;
  std::string source;       // raw JSONL path, resolved relative to the registry file
  std::string eval_source;  // optional held-out split, same schema

  void validate() const;
};

struct RawExample {
  std::string id;
  std::map<std::string, std::string> fields;
  std::optional<std::string> gold_label;   // classification kinds
  std::vector<std::string> choices;        // multi-choice
  std::optional<std::size_t> gold_choice;  // multi-choice
};

struct PropositionSample {
  std::string text;
  bool label = false;
  std::string task;
  std::string dataset;
  std::string template_id;
  std::string example_id;

  bool operator==(const PropositionSample&) const = default;
};

struct UnifyOptions {
  bool task_prefix = true;
  std::size_t negatives_per_positive = 1;
};

/// Strips and collapses whitespace runs to single spaces.
std::string normalize_whitespace(std::string_view text);

/// Proposition asserting `label` for a classification example.
PropositionSample build_proposition(const DatasetSpec& dataset, const RawExample& example, const Template& tmpl,
                                    const std::string& label, const UnifyOptions& options = {});

/// Proposition asserting candidate `choice` for a multi-choice example.
PropositionSample build_proposition(const DatasetSpec& dataset, const RawExample& example, const Template& tmpl,
                                    std::size_t choice, const UnifyOptions& options = {});

struct PropositionPair {
  PropositionSample positive;
  std::vector<PropositionSample> negatives;
};

/// Seed of the per-example template and negative draws; independent of
/// iteration order.
std::uint64_t example_seed(std::uint64_t seed, std::string_view dataset, std::string_view example_id);

/// Gold proposition plus negatives drawn uniformly from the non-gold labels
/// (without replacement), all under one uniformly drawn template. Returns
/// nullopt and appends a warning when fewer than two labels are available.
std::optional<PropositionPair> make_pair(const DatasetSpec& dataset, const RawExample& example, std::uint64_t seed,
                                         const UnifyOptions& options = {}, std::vector<std::string>* warnings = nullptr);

struct DatasetInput {
  DatasetSpec spec;
  std::vector<RawExample> examples;
};

struct DatasetManifest {
  std::string dataset;
  std::string task;
  std::size_t examples = 0;
  std::size_t skipped = 0;
  std::size_t pairs = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::map<std::string, std::size_t> template_usage;
};

struct UnifiedManifest {
  std::uint64_t seed = 0;
  std::size_t cap_per_dataset = 0;
  UnifyOptions options;
  std::vector<DatasetManifest> datasets;
  std::vector<std::string> warnings;
  std::size_t total = 0;
};

struct UnifiedData {
  std::vector<PropositionSample> samples;
  UnifiedManifest manifest;
};

/// Pools every dataset into one shuffled stream. Each dataset contributes at
/// most `cap_per_dataset` samples, counting positives and negatives, taken
/// as whole pairs chosen by a seeded per-dataset shuffle.
UnifiedData build_unified(const std::vector<DatasetInput>& datasets, std::size_t cap_per_dataset, std::uint64_t seed,
                          const UnifyOptions& options = {});

struct ParsedProposition {
  std::optional<std::string> task_name;
  std::string body;
  std::string prompt;
};

ParsedProposition parse_proposition(std::string_view text);

// Registry and JSONL files. Raw example schema, one object per line:
//   {"id": "...", "text": "...", "text2": "...", "label": "..."}       classification
//   {"id": "...", "text": "...", "choices": ["...", ...], "answer": 1}  multi-choice
// Any other string members are kept as fields for template slots.

std::vector<DatasetSpec> load_registry(const std::filesystem::path& path);
void save_registry(const std::vector<DatasetSpec>& datasets, const std::filesystem::path& path);

std::vector<RawExample> read_raw_jsonl(const std::filesystem::path& path, const DatasetSpec& dataset);
void write_raw_jsonl(const std::vector<RawExample>& examples, const std::filesystem::path& path);

std::string unified_to_jsonl(const std::vector<PropositionSample>& samples);
void write_unified_jsonl(const std::vector<PropositionSample>& samples, const std::filesystem::path& path);
std::vector<PropositionSample> read_unified_jsonl(const std::filesystem::path& path);

std::string manifest_to_json(const UnifiedManifest& manifest);

/// Copies of the samples with the "[tsk] name [tsk]" prefix removed.
std::vector<PropositionSample> strip_task_prefix(std::vector<PropositionSample> samples);

}  // namespace dualsig
