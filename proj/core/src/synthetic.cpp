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

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lcp/common.hpp"
#include "lcp/pipeline.hpp"

namespace lcp {
namespace {

constexpr double kNoiseStd = 0.05;

constexpr const char* kOnsets[] = {"b", "br", "c", "d", "dr", "f", "g", "gl", "k", "l", "m",
                                   "n", "p", "pl", "r", "s", "st", "t", "tr", "v", "z"};
constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
constexpr const char* kCodas[] = {"", "n", "r", "s", "l", "m", "x", "th"};

struct Filler {
  Domain domain;
  std::vector<std::string> words;
};

const std::vector<Filler>& fillers() {
  static const std::vector<Filler> table = {
      {Domain::europarl,
       {"the", "council", "member", "states", "commission", "must", "ensure", "that", "policy", "report",
        "vote", "in", "parliament", "of", "this", "we", "should", "agree", "on", "proposal"}},
      {Domain::biomed,
       {"the", "cells", "protein", "expression", "was", "observed", "in", "mice", "levels", "of", "gene",
        "tissue", "samples", "with", "increased", "binding", "activity", "and", "receptor", "signal"}},
      {Domain::bible,
       {"and", "the", "lord", "said", "unto", "him", "thou", "shalt", "not", "his", "people", "went",
        "into", "land", "of", "israel", "they", "came", "to", "house"}},
  };
  return table;
}

std::string pseudo_word(Rng& rng) {
  const std::size_t syllables = 2 + rng.index(2);
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.index(std::size(kOnsets))];
    w += kNuclei[rng.index(std::size(kNuclei))];
  }
  w += kCodas[rng.index(std::size(kCodas))];
  return w;
}

struct Draft {
  Domain domain;
  std::string sentence;
  std::string target;
};

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

Draft draft(Rng& rng, Domain domain, Subtask subtask, const std::vector<std::string>& lexicon) {
  const auto& words = fillers()[static_cast<std::size_t>(domain)].words;
  std::string target = lexicon[rng.index(lexicon.size())];
  if (subtask == Subtask::mwe) {
    std::string second = lexicon[rng.index(lexicon.size())];
    target += " " + second;
  }
  std::vector<std::string> tokens;
  const std::size_t before = 2 + rng.index(5);
  const std::size_t after = 2 + rng.index(5);
  for (std::size_t i = 0; i < before; ++i) tokens.push_back(words[rng.index(words.size())]);
  tokens.push_back(target);
  for (std::size_t i = 0; i < after; ++i) tokens.push_back(words[rng.index(words.size())]);
  tokens[0] = capitalize(tokens[0]);
  std::string sentence;
  for (const auto& t : tokens) {
    if (!sentence.empty()) sentence += ' ';
    sentence += t;
  }
  sentence += " .";
  return {domain, std::move(sentence), std::move(target)};
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

SyntheticCorpus make_synthetic(std::uint64_t seed, std::size_t size, Subtask subtask) {
  if (size < 10) throw ConfigError(fmt::format("synthetic size must be >= 10, got {}", size));
  Rng rng(seed);

  std::vector<std::string> lexicon;
  std::set<std::string> seen;
  for (const auto& f : fillers()) seen.insert(f.words.begin(), f.words.end());
  // One lexicon entry per training row: most dev targets are rare or unseen.
  const std::size_t lexicon_size = size;
  while (lexicon.size() < lexicon_size) {
    std::string w = pseudo_word(rng);
    if (seen.insert(w).second) lexicon.push_back(std::move(w));
  }

  SyntheticCorpus out;
  for (const auto& w : lexicon) {
    out.frequencies.set(w, static_cast<std::uint64_t>(std::floor(std::pow(10.0, 6.0 * rng.uniform()))));
  }
  for (const auto& f : fillers()) {
    for (const auto& w : f.words) out.frequencies.set(w, 1000000);
  }

  const std::size_t n_eval = size / 10;
  struct Pending {
    Split split;
    std::vector<Draft> drafts;
  };
  std::vector<Pending> splits = {{Split::train, {}}, {Split::trial, {}}, {Split::test, {}}};
  const std::size_t counts[] = {size, n_eval, n_eval};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (std::size_t i = 0; i < counts[s]; ++i) {
      splits[s].drafts.push_back(draft(rng, kDomains[i % kDomains.size()], subtask, lexicon));
    }
  }

  std::vector<double> train_lf;
  for (const auto& d : splits[0].drafts) train_lf.push_back(log_frequency(d.target, out.frequencies));
  const Normalizer norm = fit_normalizer(train_lf);

  const std::string prefix = subtask == Subtask::mwe ? "synmwe" : "syn";
  Dataset* targets[] = {&out.train, &out.trial, &out.test};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    Dataset& ds = *targets[s];
    ds.split = splits[s].split;
    ds.subtask = subtask;
    std::size_t i = 0;
    for (auto& d : splits[s].drafts) {
      const double lf = log_frequency(d.target, out.frequencies);
      const double gold = std::clamp(round6(1.0 - norm.apply(lf) + kNoiseStd * rng.normal()), 0.0, 1.0);
      Instance inst;
      inst.id = fmt::format("{}-{}-{:05d}", prefix, to_string(ds.split), i++);
      inst.subtask = subtask;
      inst.domain = d.domain;
      inst.sentence = std::move(d.sentence);
      inst.target = std::move(d.target);
      inst.gold = gold;
      ds.instances.push_back(std::move(inst));
    }
  }
  return out;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  write_dataset(corpus.train, dir / "train.tsv");
  write_dataset(corpus.trial, dir / "trial.tsv");
  write_dataset(corpus.test, dir / "test.tsv");
  corpus.frequencies.save(dir / "frequencies.tsv");
}

}  // namespace lcp
