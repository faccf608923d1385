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

#include "lcp/encoding.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include <fmt/core.h>

#include "lcp/common.hpp"

namespace lcp {
namespace {

constexpr std::string_view kReserved[kNumReserved] = {"[PAD]", "[UNK]", "[START]", "[SEP]"};

bool is_ascii_punct(unsigned char c) {
  return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
         (c >= 0x7b && c <= 0x7e);
}

// Common UTF-8 punctuation in CompLex text: curly quotes, dashes, ellipsis.
std::size_t utf8_punct_len(std::string_view s, std::size_t i) {
  static constexpr std::string_view kMarks[] = {"‘", "’", "“", "”",
                                                "–", "—", "…"};
  for (auto m : kMarks) {
    if (s.substr(i, m.size()) == m) return m.size();
  }
  return 0;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(to_lower_ascii(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      flush();
      ++i;
    } else if (is_ascii_punct(static_cast<unsigned char>(c))) {
      flush();
      out.emplace_back(1, c);
      ++i;
    } else if (std::size_t n = utf8_punct_len(text, i); n > 0) {
      flush();
      out.emplace_back(text.substr(i, n));
      i += n;
    } else {
      current += c;
      ++i;
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (auto r : kReserved) add(std::string(r));
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

TokenId Vocabulary::add(std::string token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out += fmt::format("{}\t{}\n", tokens_[i], i);
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::size_t lineno = 0;
  for (auto line : split_char(text, '\n')) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_char(line, '\t');
    TokenId id = -1;
    bool ok = fields.size() == 2;
    if (ok) {
      const auto* end = fields[1].data() + fields[1].size();
      auto [ptr, ec] = std::from_chars(fields[1].data(), end, id);
      ok = ec == std::errc() && ptr == end;
    }
    if (!ok) throw DataError(fmt::format("vocabulary line {}: expected token<TAB>id", lineno));
    if (static_cast<std::size_t>(id) < kNumReserved) {
      if (fields[0] != kReserved[id]) {
        throw DataError(fmt::format("vocabulary line {}: reserved id {} must be {}", lineno, id,
                                    kReserved[id]));
      }
      continue;
    }
    if (static_cast<std::size_t>(id) != v.size() || v.contains(fields[0])) {
      throw DataError(fmt::format("vocabulary line {}: ids must be dense and tokens unique", lineno));
    }
    v.add(std::string(fields[0]));
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Vocabulary build_vocab(std::span<const Dataset* const> train_sets, int min_count) {
  std::size_t total = 0;
  std::map<std::string, int> counts;
  for (const Dataset* ds : train_sets) {
    total += ds->size();
    for (const auto& inst : ds->instances) {
      for (auto& tok : tokenize(inst.sentence)) ++counts[std::move(tok)];
    }
  }
  if (total == 0) throw DataError("build_vocab: training data is empty");

  std::vector<std::pair<std::string, int>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [tok, n] : kept) v.add(std::move(tok));
  return v;
}

Vocabulary build_vocab(const Dataset& train, int min_count) {
  const Dataset* sets[] = {&train};
  return build_vocab(sets, min_count);
}

namespace {

std::vector<TokenId> to_ids(std::string_view text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(vocab.id_of(tok));
  return ids;
}

}  // namespace

TokenSequence encode_single_word(const Instance& inst, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<TokenId> sentence = to_ids(inst.sentence, vocab);
  const std::vector<TokenId> target = to_ids(inst.target, vocab);
  if (target.size() + 3 > max_len) {
    throw DataError(fmt::format("instance '{}': target segment ({} tokens) cannot fit in max_len {}",
                                inst.id, target.size(), max_len));
  }
  const std::size_t room = max_len - 3 - target.size();
  if (sentence.size() > room) sentence.resize(room);

  TokenSequence seq;
  seq.ids.reserve(sentence.size() + target.size() + 3);
  seq.ids.push_back(kStartId);
  seq.ids.insert(seq.ids.end(), sentence.begin(), sentence.end());
  seq.ids.push_back(kSepId);
  seq.ids.insert(seq.ids.end(), target.begin(), target.end());
  seq.ids.push_back(kSepId);
  return seq;
}

TokenSequence encode_mwe(const Instance& inst, const Vocabulary& vocab, std::size_t max_len) {
  const std::vector<TokenId> target = to_ids(inst.target, vocab);
  if (target.size() + 2 > max_len) {
    throw DataError(fmt::format("instance '{}': target segment ({} tokens) cannot fit in max_len {}",
                                inst.id, target.size(), max_len));
  }
  TokenSequence seq;
  seq.ids.reserve(target.size() + 2);
  seq.ids.push_back(kStartId);
  seq.ids.insert(seq.ids.end(), target.begin(), target.end());
  seq.ids.push_back(kSepId);
  return seq;
}

TokenSequence encode(const Instance& inst, const Vocabulary& vocab, std::size_t max_len) {
  return inst.subtask == Subtask::single_word ? encode_single_word(inst, vocab, max_len)
                                              : encode_mwe(inst, vocab, max_len);
}

}  // namespace lcp
