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

#include <gtest/gtest.h>

#include <random>
#include <set>

#include <fmt/format.h>

#include "lcp/common.hpp"
#include "lcp/encoding.hpp"
#include "oracles.hpp"

namespace {

using lcp::Domain;
using lcp::Subtask;

std::vector<std::string> decode(const lcp::TokenSequence& seq, const lcp::Vocabulary& v) {
  std::vector<std::string> out;
  for (auto id : seq.ids) out.push_back(v.token(id));
  return out;
}

lcp::Dataset dataset(std::vector<std::string> sentences) {
  lcp::Dataset ds;
  int i = 0;
  for (auto& s : sentences) ds.instances.push_back(fixture::instance(fmt::format("s{}", i++), Domain::bible, s, "a"));
  return ds;
}

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(lcp::tokenize("This was the length of Sarah's life"),
            (std::vector<std::string>{"this", "was", "the", "length", "of", "sarah", "'", "s", "life"}));
  EXPECT_EQ(lcp::tokenize("Hi,there…“ok”"),
            (std::vector<std::string>{"hi", ",", "there", "…", "“", "ok", "”"}));
  EXPECT_TRUE(lcp::tokenize("   ").empty());
}

TEST(Vocabulary, ReservedIdsAreDistinctAndPadIsZero) {
  lcp::Vocabulary v;
  EXPECT_EQ(v.size(), lcp::kNumReserved);
  std::set<lcp::TokenId> ids = {lcp::kPadId, lcp::kUnkId, lcp::kStartId, lcp::kSepId};
  EXPECT_EQ(ids.size(), 4u);
  EXPECT_EQ(lcp::kPadId, 0);
  EXPECT_EQ(v.id_of("never-seen"), lcp::kUnkId);
}

TEST(BuildVocab, MinCountExamples) {
  const auto ds = dataset({"a b", "a c"});
  const auto v2 = lcp::build_vocab(ds, 2);
  EXPECT_EQ(v2.size(), lcp::kNumReserved + 1);
  EXPECT_TRUE(v2.contains("a"));
  EXPECT_FALSE(v2.contains("b"));
  const auto v1 = lcp::build_vocab(ds, 1);
  EXPECT_EQ(v1.size(), lcp::kNumReserved + 3);
  for (const char* t : {"a", "b", "c"}) EXPECT_TRUE(v1.contains(t));
  EXPECT_THROW(lcp::build_vocab(lcp::Dataset{}, 1), lcp::DataError);
}

TEST(BuildVocab, DeterministicAndInjective) {
  const auto ds = dataset({"z y x y", "x x q", "The the THE"});
  const auto a = lcp::build_vocab(ds, 1), b = lcp::build_vocab(ds, 1);
  EXPECT_EQ(a, b);
  std::set<std::string> tokens;
  for (std::size_t i = 0; i < a.size(); ++i) {
    tokens.insert(a.token(static_cast<lcp::TokenId>(i)));
    EXPECT_EQ(a.id_of(a.token(static_cast<lcp::TokenId>(i))), static_cast<lcp::TokenId>(i));
  }
  EXPECT_EQ(tokens.size(), a.size());
  // descending count: "the" (3) and "x" (3) before "y" (2)
  EXPECT_LT(a.id_of("the"), a.id_of("y"));
  EXPECT_LT(a.id_of("x"), a.id_of("y"));
}

TEST(Vocabulary, SerializeRoundTrip) {
  const auto v = lcp::build_vocab(dataset({"alpha beta beta"}), 1);
  EXPECT_EQ(lcp::Vocabulary::parse(v.serialize()), v);
  const auto dir = fixture::scratch("vocab_io");
  v.save(dir / "v.tsv");
  EXPECT_EQ(lcp::Vocabulary::load(dir / "v.tsv"), v);
  EXPECT_THROW(lcp::Vocabulary::parse("[PAD]\t0\nx\t7\n"), lcp::DataError);
}

TEST(Encode, SingleWordTemplate) {
  const auto inst = fixture::instance("e", Domain::bible, "This was the length of Sarah's life", "length");
  lcp::Dataset ds;
  ds.instances.push_back(inst);
  const auto v = lcp::build_vocab(ds, 1);
  const auto seq = lcp::encode_single_word(inst, v);
  EXPECT_EQ(decode(seq, v), (std::vector<std::string>{"[START]", "this", "was", "the", "length", "of", "sarah", "'",
                                                      "s", "life", "[SEP]", "length", "[SEP]"}));
}

TEST(Encode, EmptyContentVocabularyMapsToUnknown) {
  const auto inst = fixture::instance("e", Domain::bible, "one two three", "two");
  const lcp::Vocabulary v;
  const auto seq = lcp::encode_single_word(inst, v);
  EXPECT_EQ(seq.ids, (std::vector<lcp::TokenId>{lcp::kStartId, lcp::kUnkId, lcp::kUnkId, lcp::kUnkId, lcp::kSepId,
                                                lcp::kUnkId, lcp::kSepId}));
}

TEST(Encode, TruncatesOnlyTheSentence) {
  std::string sentence;
  for (int i = 0; i < 600; ++i) sentence += fmt::format("w{} ", i);
  const auto inst = fixture::instance("long", Domain::europarl, sentence, "target word");
  lcp::Dataset ds;
  ds.instances.push_back(inst);
  auto v = lcp::build_vocab(ds, 1);
  v.add("target");
  v.add("word");
  const auto seq = lcp::encode_single_word(inst, v, 512);
  ASSERT_EQ(seq.size(), 512u);
  EXPECT_EQ(seq.ids.front(), lcp::kStartId);
  EXPECT_EQ(seq.ids.back(), lcp::kSepId);
  EXPECT_EQ(seq.ids[509], v.id_of("target"));
  EXPECT_EQ(seq.ids[510], v.id_of("word"));
  EXPECT_EQ(seq.ids[508], lcp::kSepId);
  // 512 - 5 = 507 sentence tokens, the first 507 of the sentence
  EXPECT_EQ(seq.ids[507], v.id_of("w506"));
}

TEST(Encode, MweTemplates) {
  lcp::Vocabulary v;
  for (const char* t : {"financial", "world", "dry", "season"}) v.add(t);
  auto a = fixture::instance("m", Domain::europarl, "in the financial world", "financial world", 0.3, Subtask::mwe);
  EXPECT_EQ(decode(lcp::encode_mwe(a, v), v), (std::vector<std::string>{"[START]", "financial", "world", "[SEP]"}));
  auto b = fixture::instance("n", Domain::biomed, "during the dry season", "dry season", 0.3, Subtask::mwe);
  EXPECT_EQ(decode(lcp::encode(b, v), v), (std::vector<std::string>{"[START]", "dry", "season", "[SEP]"}));
  auto c = fixture::instance("o", Domain::biomed, "x", "dry", 0.3, Subtask::mwe);
  EXPECT_EQ(lcp::encode_mwe(c, v).size(), 3u);
}

TEST(Encode, RandomInstancesSatisfyInvariants) {
  std::mt19937_64 gen(17);
  lcp::Vocabulary v;
  for (int i = 0; i < 30; ++i) v.add(fmt::format("t{}", i));
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t max_len = 8 + gen() % 40;
    std::string sentence;
    const int n = static_cast<int>(gen() % 80);
    for (int i = 0; i < n; ++i) sentence += fmt::format("t{} ", gen() % 40);
    const int m = 1 + static_cast<int>(gen() % 3);
    std::string target;
    for (int i = 0; i < m; ++i) target += fmt::format("t{} ", gen() % 30);
    const Subtask st = gen() % 2 ? Subtask::mwe : Subtask::single_word;
    const auto inst = fixture::instance("r", Domain::bible, sentence, target, 0.5, st);
    const auto seq = lcp::encode(inst, v, max_len);
    ASSERT_LE(seq.size(), max_len);
    ASSERT_EQ(seq.ids.front(), lcp::kStartId);
    ASSERT_EQ(seq.ids.back(), lcp::kSepId);
    // target segment intact at the tail
    const auto target_ids = lcp::tokenize(target);
    for (std::size_t k = 0; k < target_ids.size(); ++k) {
      ASSERT_EQ(seq.ids[seq.size() - 1 - target_ids.size() + k], v.id_of(target_ids[k]));
    }
    ASSERT_EQ(lcp::encode(inst, v, max_len), seq);
  }
}

}  // namespace
