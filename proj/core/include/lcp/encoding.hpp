/*
 * Copyright 2026 The lcp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LCP_ENCODING_HPP_
#define LCP_ENCODING_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lcp/corpus.hpp"

namespace lcp {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kStartId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr std::size_t kNumReserved = 4;
inline constexpr std::size_t kDefaultMaxLen = 512;

/// Lowercases, splits on whitespace, and emits every punctuation mark as its
/// own token ("Sarah's" -> "sarah", "'", "s").
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  /// Reserved tokens only.
  Vocabulary();

  TokenId id_of(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;

  /// Appends a token; returns its id (existing id when already present).
  TokenId add(std::string token);

  /// TSV token<TAB>id, one line per id in id order.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static Vocabulary parse(std::string_view text);
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> ids_;
};

/// Content tokens of the training sentences occurring at least min_count
/// times, ordered by descending count then lexicographically.
Vocabulary build_vocab(const Dataset& train, int min_count);
Vocabulary build_vocab(std::span<const Dataset* const> train_sets, int min_count);

struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

/// [START] sentence [SEP] target [SEP]. Only the sentence segment is
/// truncated (from the right) to respect max_len.
TokenSequence encode_single_word(const Instance& inst, const Vocabulary& vocab,
                                 std::size_t max_len = kDefaultMaxLen);
/// [START] target [SEP]; the sentence is not encoded.
TokenSequence encode_mwe(const Instance& inst, const Vocabulary& vocab,
                         std::size_t max_len = kDefaultMaxLen);
/// Dispatches on inst.subtask.
TokenSequence encode(const Instance& inst, const Vocabulary& vocab,
                     std::size_t max_len = kDefaultMaxLen);

}  // namespace lcp

#endif  // LCP_ENCODING_HPP_
