// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dualsig/experiment.hpp"
#include "json.hpp"

namespace dualsig {

inline constexpr const char* kArtifactVersion = "dualsig-1";

// Exit codes of dispatch().
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // usage, config, input or checkpoint problems
inline constexpr int kExitRuntime = 2;     // failure after validation passed

// Record of one CLI run, written atomically to <out>/manifest-<command>.json
// when the run ends. Passing a manifest as --config, with the same subcommand
// and flags, replays the run from its config snapshot. File hashes are
// FNV-1a-64 of the bytes, in hex.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  nlohmann::json config;  // resolved, with absolute paths
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> hash
  std::map<std::string, std::string> outputs;  // path relative to --out -> hash
  double wall_seconds = 0.0;
  std::string artifact_version = kArtifactVersion;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest run_manifest_from_json(const nlohmann::json& j);

/// Seeds of every subsystem, derived from the root seed.
std::map<std::string, std::uint64_t> subsystem_seeds(std::uint64_t root);

/// FNV-1a-64 of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Config file or manifest (its config snapshot) at `path`.
ExperimentConfig load_config_or_manifest(const std::filesystem::path& path);

/// Runs one subcommand: build-data, train, eval, generate or ablate.
/// Reports go to `out`, errors and usage to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualsig
