// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dualsig/ops.hpp"

namespace dualsig {

enum class TokenizerMode { Byte, Word };

TokenizerMode parse_tokenizer_mode(std::string_view name);
std::string_view to_string(TokenizerMode mode);

/// Fixed special tokens; their ids are their positions in this list.
inline constexpr std::string_view kPadToken = "[pad]";
inline constexpr std::string_view kTskToken = "[tsk]";
inline constexpr std::string_view kSepToken = "[sep]";
inline constexpr std::string_view kClsToken = "[cls]";
inline constexpr std::string_view kEosToken = "[eos]";
inline constexpr std::string_view kUnkToken = "[unk]";
inline constexpr std::size_t kSpecialCount = 5;

struct SpecialIds {
  TokenId pad = 0;
  TokenId tsk = 1;
  TokenId sep = 2;
  TokenId cls = 3;
  TokenId eos = 4;
};

/// Bijective token table. Specials occupy ids 0..4 in the order
/// [pad] [tsk] [sep] [cls] [eos]. Byte mode follows with the 256 byte units;
/// word mode follows with [unk] and then words by descending frequency.
class Vocab {
 public:
  static Vocab build(const std::vector<std::string>& corpus, std::size_t max_size, TokenizerMode mode);

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const noexcept { return id_to_token_.size(); }
  TokenizerMode mode() const noexcept { return mode_; }
  const SpecialIds& special() const noexcept { return special_; }
  TokenId unk() const;

  const std::string& token(TokenId id) const;
  /// Id of an exact vocabulary entry (word, special, or "<0xNN>" byte unit).
  std::optional<TokenId> find(std::string_view token) const;

  /// One token per line, line number = id.
  std::string serialize() const;
  static Vocab deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  /// FNV-1a of serialize(); stored in checkpoints.
  std::uint64_t hash() const;

 private:
  Vocab() = default;
  void add(std::string token);

  TokenizerMode mode_ = TokenizerMode::Byte;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  SpecialIds special_;
};

}  // namespace dualsig
