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

#include "lcp/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <fmt/core.h>

#include "lcp/common.hpp"

namespace lcp {

std::string_view to_string(Subtask s) {
  return s == Subtask::single_word ? "single_word" : "mwe";
}

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::europarl: return "europarl";
    case Domain::biomed: return "biomed";
    case Domain::bible: return "bible";
  }
  return "unknown";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::trial: return "trial";
    case Split::test: return "test";
  }
  return "unknown";
}

Subtask parse_subtask(std::string_view s) {
  const std::string l = to_lower_ascii(s);
  if (l == "single_word" || l == "single" || l == "1") return Subtask::single_word;
  if (l == "mwe" || l == "multi" || l == "2") return Subtask::mwe;
  throw DataError(fmt::format("unknown subtask '{}'", s));
}

Domain parse_domain(std::string_view s) {
  const std::string l = to_lower_ascii(s);
  if (l == "europarl") return Domain::europarl;
  if (l == "biomed") return Domain::biomed;
  if (l == "bible") return Domain::bible;
  throw DataError(fmt::format("unknown domain '{}'", s));
}

Split parse_split(std::string_view s) {
  const std::string l = to_lower_ascii(s);
  if (l == "train") return Split::train;
  if (l == "trial" || l == "dev") return Split::trial;
  if (l == "test") return Split::test;
  throw DataError(fmt::format("unknown split '{}'", s));
}

void validate(const Instance& inst) {
  if (inst.gold && !(*inst.gold >= 0.0 && *inst.gold <= 1.0)) {
    throw DataError(fmt::format("instance '{}': complexity {} outside [0,1]", inst.id, *inst.gold));
  }
  const auto parts = split_whitespace(inst.target);
  if (parts.empty()) throw DataError(fmt::format("instance '{}': empty target", inst.id));
  if (inst.subtask == Subtask::mwe && parts.size() < 2) {
    throw DataError(fmt::format("instance '{}': MWE target '{}' has fewer than two components",
                                inst.id, inst.target));
  }
}

bool Dataset::labeled() const {
  return !instances.empty() &&
         std::all_of(instances.begin(), instances.end(), [](const Instance& i) { return i.gold.has_value(); });
}

void validate(const Dataset& ds) {
  std::unordered_set<std::string_view> seen;
  for (const auto& inst : ds.instances) {
    if (inst.subtask != ds.subtask) {
      throw DataError(fmt::format("instance '{}': subtask {} in a {} dataset", inst.id,
                                  to_string(inst.subtask), to_string(ds.subtask)));
    }
    validate(inst);
    if (!seen.insert(inst.id).second) throw DataError(fmt::format("duplicate id '{}'", inst.id));
  }
}

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

double parse_complexity(std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw DataError(fmt::format("unparseable complexity '{}'", text));
  }
  return v;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, Subtask subtask, Split split,
                     const ColumnMapping& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("dataset file '{}' not found or unreadable", path.string()));

  Dataset ds;
  ds.split = split;
  ds.subtask = subtask;

  std::string line;
  if (!std::getline(in, line)) return ds;
  const auto header = split_char(strip_cr(line), '\t');
  std::vector<std::string> names(header.begin(), header.end());
  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  };
  auto require_col = [&](const std::string& name) {
    auto c = find_col(name);
    if (!c) throw DataError(fmt::format("{}: header lacks column '{}'", path.string(), name));
    return *c;
  };
  const std::size_t c_id = require_col(columns.id);
  const std::size_t c_dom = require_col(columns.domain);
  const std::size_t c_sent = require_col(columns.sentence);
  const std::size_t c_tgt = require_col(columns.target);
  const std::optional<std::size_t> c_cx = find_col(columns.complexity);

  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    const auto fields = split_char(row, '\t');
    auto where = [&](std::string_view id) {
      return fmt::format("{}:{} (id '{}')", path.string(), lineno, id);
    };
    if (fields.size() != names.size()) {
      throw DataError(fmt::format("{}: expected {} fields, found {}",
                                  where(fields.empty() ? "" : fields[0]), names.size(), fields.size()));
    }
    Instance inst;
    inst.id = std::string(fields[c_id]);
    inst.subtask = subtask;
    try {
      inst.domain = parse_domain(fields[c_dom]);
      inst.sentence = std::string(fields[c_sent]);
      inst.target = std::string(fields[c_tgt]);
      if (c_cx && !fields[*c_cx].empty()) inst.gold = parse_complexity(fields[*c_cx]);
      validate(inst);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}: {}", where(inst.id), e.what()));
    }
    if (!seen.insert(inst.id).second) {
      throw DataError(fmt::format("{}: duplicate id", where(inst.id)));
    }
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

std::string format_dataset(const Dataset& ds) {
  const bool any_gold = std::any_of(ds.instances.begin(), ds.instances.end(),
                                    [](const Instance& i) { return i.gold.has_value(); });
  std::string out = any_gold ? "id\tcorpus\tsentence\ttoken\tcomplexity\n" : "id\tcorpus\tsentence\ttoken\n";
  for (const auto& inst : ds.instances) {
    out += fmt::format("{}\t{}\t{}\t{}", inst.id, to_string(inst.domain), inst.sentence, inst.target);
    if (any_gold) {
      out += '\t';
      // shortest round-trip representation
      if (inst.gold) out += fmt::format("{}", *inst.gold);
    }
    out += '\n';
  }
  return out;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, format_dataset(ds));
}

std::map<Domain, Dataset> partition_by_domain(const Dataset& ds) {
  std::map<Domain, Dataset> parts;
  for (Domain d : kDomains) parts[d] = Dataset{ds.split, ds.subtask, {}};
  for (const auto& inst : ds.instances) parts[inst.domain].instances.push_back(inst);
  return parts;
}

FrequencyTable FrequencyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("frequency table '{}' not found or unreadable", path.string()));
  FrequencyTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    const auto fields = split_char(row, '\t');
    std::uint64_t count = 0;
    bool ok = fields.size() == 2;
    if (ok) {
      const auto* end = fields[1].data() + fields[1].size();
      auto [ptr, ec] = std::from_chars(fields[1].data(), end, count);
      ok = ec == std::errc() && ptr == end;
    }
    if (!ok) throw DataError(fmt::format("{}:{}: expected token<TAB>count", path.string(), lineno));
    table.set(std::string(fields[0]), count);
  }
  return table;
}

void FrequencyTable::save(const std::filesystem::path& path) const {
  std::vector<std::pair<std::string_view, std::uint64_t>> rows(counts_.begin(), counts_.end());
  std::sort(rows.begin(), rows.end());
  std::string out;
  for (const auto& [tok, n] : rows) out += fmt::format("{}\t{}\n", tok, n);
  write_file_atomic(path, out);
}

void FrequencyTable::set(std::string token, std::uint64_t count) {
  counts_[std::move(token)] = count;
}

std::uint64_t FrequencyTable::count(std::string_view token) const {
  auto it = counts_.find(token);
  return it == counts_.end() ? 0 : it->second;
}

double log_frequency(std::string_view target, const FrequencyTable& table) {
  const auto parts = split_whitespace(target);
  if (parts.empty()) throw std::invalid_argument("log_frequency: empty target");
  double sum = 0.0;
  for (const auto& p : parts) sum += static_cast<double>(table.count(to_lower_ascii(p)));
  return std::log1p(sum / static_cast<double>(parts.size()));
}

double Normalizer::apply(double v) const {
  if (degenerate()) return 0.0;
  return std::clamp((v - min) / (max - min), 0.0, 1.0);
}

Normalizer fit_normalizer(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("fit_normalizer: empty input");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return Normalizer{*lo, *hi};
}

}  // namespace lcp
