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

// CompLex-style corpus handling: instances, splits, TSV I/O and the
// normalized log-frequency feature used by feature-enriched models.

#ifndef LCP_CORPUS_HPP_
#define LCP_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lcp {

enum class Subtask { single_word, mwe };
enum class Domain { europarl, biomed, bible };
enum class Split { train, trial, test };

inline constexpr std::array<Domain, 3> kDomains = {Domain::europarl, Domain::biomed,
                                                   Domain::bible};

std::string_view to_string(Subtask s);
std::string_view to_string(Domain d);
std::string_view to_string(Split s);
Subtask parse_subtask(std::string_view s);
/// Case-insensitive; throws DataError on anything outside the three domains.
Domain parse_domain(std::string_view s);
Split parse_split(std::string_view s);

struct Instance {
  std::string id;
  Subtask subtask = Subtask::single_word;
  Domain domain = Domain::europarl;
  std::string sentence;
  std::string target;
  std::optional<double> gold;

  bool operator==(const Instance&) const = default;
};

/// Throws DataError when gold is outside [0,1], the target is empty, or an
/// MWE target has fewer than two components.
void validate(const Instance& inst);

struct Dataset {
  Split split = Split::train;
  Subtask subtask = Subtask::single_word;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool empty() const { return instances.empty(); }
  bool labeled() const;

  bool operator==(const Dataset&) const = default;
};

/// Throws DataError on mixed subtasks or duplicate ids.
void validate(const Dataset& ds);

/// Header names for the TSV columns; defaults match the public CompLex release.
struct ColumnMapping {
  std::string id = "id";
  std::string domain = "corpus";
  std::string sentence = "sentence";
  std::string target = "token";
  std::string complexity = "complexity";
};

Dataset load_dataset(const std::filesystem::path& path, Subtask subtask,
                     Split split = Split::train, const ColumnMapping& columns = {});
/// Serializes with the default column names (complexity column omitted when
/// no instance is labeled).
std::string format_dataset(const Dataset& ds);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);

/// Splits into the three domains; every domain key is present, possibly empty.
std::map<Domain, Dataset> partition_by_domain(const Dataset& ds);

class FrequencyTable {
 public:
  FrequencyTable() = default;

  /// Two-column token<TAB>count file without header.
  static FrequencyTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void set(std::string token, std::uint64_t count);
  /// Absent tokens count as zero.
  std::uint64_t count(std::string_view token) const;
  std::size_t size() const { return counts_.size(); }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::unordered_map<std::string, std::uint64_t, Hash, std::equal_to<>> counts_;
};

/// ln(1 + mean count) over the whitespace components of the target, looked
/// up lowercased. Average first, then log.
double log_frequency(std::string_view target, const FrequencyTable& table);

struct Normalizer {
  double min = 0.0;
  double max = 0.0;

  bool degenerate() const { return !(max > min); }
  /// Clamped min-max scaling; a degenerate normalizer maps everything to 0.
  double apply(double v) const;
};

Normalizer fit_normalizer(std::span<const double> values);
inline double apply_normalizer(const Normalizer& n, double v) { return n.apply(v); }

}  // namespace lcp

#endif  // LCP_CORPUS_HPP_
