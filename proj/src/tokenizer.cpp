// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dualsig/rng.hpp"

namespace dualsig {

namespace {

constexpr std::array<std::string_view, kSpecialCount> kSpecials = {kPadToken, kTskToken, kSepToken, kClsToken,
                                                                   kEosToken};

struct Piece {
  bool special = false;
  TokenId special_id = 0;
  std::string_view text;
};

// Specials are matched greedily left to right before any other segmentation.
std::vector<Piece> split_specials(std::string_view text) {
  std::vector<Piece> pieces;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    if (text[i] == '[') {
      for (std::size_t s = 0; s < kSpecials.size(); ++s) {
        if (text.substr(i, kSpecials[s].size()) == kSpecials[s]) {
          if (i > start) pieces.push_back({false, 0, text.substr(start, i - start)});
          pieces.push_back({true, static_cast<TokenId>(s), kSpecials[s]});
          i += kSpecials[s].size();
          start = i;
          matched = true;
          break;
        }
      }
    }
    if (!matched) ++i;
  }
  if (start < text.size()) pieces.push_back({false, 0, text.substr(start)});
  return pieces;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) fn(text.substr(i, j - i));
    i = j;
  }
}

std::string byte_unit(unsigned value) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "<0x%02X>", value);
  return buf;
}

}  // namespace

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "byte") return TokenizerMode::Byte;
  if (name == "word") return TokenizerMode::Word;
  throw ConfigError("unknown tokenizer mode '" + std::string(name) + "' (expected byte or word)");
}

std::string_view to_string(TokenizerMode mode) { return mode == TokenizerMode::Byte ? "byte" : "word"; }

void Vocab::add(std::string token) {
  const auto id = static_cast<TokenId>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(std::move(token));
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t max_size, TokenizerMode mode) {
  if (corpus.empty()) throw ContractError("build_vocab: corpus is empty");
  if (max_size < kSpecialCount) {
    throw ConfigError("build_vocab: max_size " + std::to_string(max_size) + " is smaller than the " +
                      std::to_string(kSpecialCount) + " special tokens");
  }
  Vocab v;
  v.mode_ = mode;
  for (auto s : kSpecials) v.add(std::string(s));

  if (mode == TokenizerMode::Byte) {
    if (max_size < kSpecialCount + 256) {
      throw ConfigError("build_vocab: byte mode needs max_size >= " + std::to_string(kSpecialCount + 256));
    }
    for (unsigned b = 0; b < 256; ++b) v.add(byte_unit(b));
    return v;
  }

  if (max_size < kSpecialCount + 1) throw ConfigError("build_vocab: word mode needs room for [unk]");
  v.add(std::string(kUnkToken));
  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& line : corpus) {
    for (const auto& piece : split_specials(line)) {
      if (piece.special) continue;
      for_each_word(piece.text, [&](std::string_view w) {
        if (w == kUnkToken) return;
        auto it = counts.find(w);
        if (it == counts.end()) {
          counts.emplace(std::string(w), 1);
        } else {
          ++it->second;
        }
      });
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t room = max_size - v.size();
  for (std::size_t i = 0; i < ranked.size() && i < room; ++i) v.add(ranked[i].first);
  return v;
}

TokenId Vocab::unk() const {
  if (mode_ != TokenizerMode::Word) throw ContractError("byte-level vocab has no [unk] token");
  return static_cast<TokenId>(kSpecialCount);
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocab of " + std::to_string(size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& piece : split_specials(text)) {
    if (piece.special) {
      ids.push_back(piece.special_id);
      continue;
    }
    if (mode_ == TokenizerMode::Byte) {
      for (unsigned char c : piece.text) ids.push_back(static_cast<TokenId>(kSpecialCount + c));
    } else {
      for_each_word(piece.text, [&](std::string_view w) {
        auto it = token_to_id_.find(std::string(w));
        ids.push_back(it == token_to_id_.end() || it->second < static_cast<TokenId>(kSpecialCount) ? unk()
                                                                                                   : it->second);
      });
    }
  }
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string& tok = token(ids[i]);
    if (mode_ == TokenizerMode::Byte) {
      if (ids[i] < static_cast<TokenId>(kSpecialCount)) {
        out += tok;
      } else {
        out.push_back(static_cast<char>(ids[i] - static_cast<TokenId>(kSpecialCount)));
      }
    } else {
      if (i > 0) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& tok : id_to_token_) {
    out += tok;
    out.push_back('\n');
  }
  return out;
}

Vocab Vocab::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) throw FormatError("vocab file must end with a newline");
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.size() <= kSpecialCount) throw FormatError("vocab file is missing entries after the special tokens");
  for (std::size_t i = 0; i < kSpecialCount; ++i) {
    if (lines[i] != kSpecials[i]) throw FormatError("vocab line " + std::to_string(i) + " must be " + std::string(kSpecials[i]));
  }
  Vocab v;
  if (lines[kSpecialCount] == kUnkToken) {
    v.mode_ = TokenizerMode::Word;
  } else {
    v.mode_ = TokenizerMode::Byte;
    if (lines.size() != kSpecialCount + 256) throw FormatError("byte-level vocab must list exactly 256 byte units");
    for (unsigned b = 0; b < 256; ++b) {
      if (lines[kSpecialCount + b] != byte_unit(b)) throw FormatError("malformed byte unit on line " + std::to_string(kSpecialCount + b));
    }
  }
  for (auto& line : lines) {
    if (line.empty()) throw FormatError("empty token in vocab file");
    if (v.token_to_id_.count(line)) throw FormatError("duplicate token '" + line + "' in vocab file");
    v.add(std::move(line));
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocab to " + path.string());
  out << serialize();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocab from " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

std::uint64_t Vocab::hash() const { return fnv1a64(serialize()); }

}  // namespace dualsig
