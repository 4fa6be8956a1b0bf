// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualsig/unify.hpp"

namespace dualsig {

// A small word-level suite: three proposition tasks over a shared lexicon
// plus a toy language corpus in which category words co-occur with their
// members, so the language signal carries the lexical relations the tasks
// ask about.
//
//   topic      Topic Classification      member words -> one of 8 categories
//   sentiment  Sentiment Classification  polar words -> positive / negative
//   pair       Paraphrase                two word lists -> same / different category

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t train_examples = 2000;  // per task
  std::size_t eval_examples = 300;    // per task, disjoint draws
  std::size_t corpus_lines = 20000;
  std::size_t heldout_lines = 1000;
};

struct SyntheticSuite {
  std::vector<std::string> corpus;
  std::vector<std::string> heldout_corpus;
  std::vector<DatasetInput> train;  // one entry per task
  std::vector<DatasetInput> eval;   // same specs as train
};

/// Dataset ids of the suite in generation order.
std::vector<std::string> synthetic_dataset_ids();

SyntheticSuite make_synthetic_suite(const SyntheticOptions& options);

/// Writes corpus.txt, heldout.txt, registry.json and <id>.train.jsonl /
/// <id>.eval.jsonl under `dir`.
void write_synthetic_suite(const SyntheticSuite& suite, const std::filesystem::path& dir);

}  // namespace dualsig
