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

#ifndef LCP_ENSEMBLE_HPP_
#define LCP_ENSEMBLE_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcp/corpus.hpp"
#include "lcp/evaluation.hpp"

namespace lcp {

/// Per-id arithmetic mean of the members' scores. All members must cover
/// the same id set; output follows the first member's id order.
PredictionSet ensemble_average(std::span<const PredictionSet> members);

/// Domain -> checkpoint variant. Must name all three domains.
struct DomainRouting {
  std::map<Domain, std::string> variants;

  /// Throws ConfigError when a domain is missing.
  void validate() const;
};

/// The variant to run for `inst`. Throws ConfigError when the routing has no
/// entry for the instance's domain.
const std::string& route_by_domain(const DomainRouting& routing, const Instance& inst);

struct EnsembleMember {
  enum class Kind { predictions, checkpoint, routed };

  std::string name;
  Kind kind = Kind::predictions;
  /// Prediction CSV or checkpoint/bundle path for the first two kinds.
  std::string path;
  std::optional<DomainRouting> routing;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;

  /// Throws ConfigError: needs >= 1 member; routed members need full routing.
  void validate() const;

  /// JSON: {"members": [{"name": ..., "predictions": path} |
  ///                    {"name": ..., "checkpoint": path} |
  ///                    {"name": ..., "routing": {"bible": path, ...}}]}.
  /// Relative paths resolve against `base_dir`.
  static EnsembleSpec parse(std::string_view json_text, const std::filesystem::path& base_dir = {});
  static EnsembleSpec load(const std::filesystem::path& path);
};

/// Produces a full PredictionSet for one member over a dataset.
using MemberPredictor = std::function<PredictionSet(const EnsembleMember&, const Dataset&)>;

/// Resolves prediction-file members by reading the CSV (restricted to the
/// dataset's ids); other kinds need a caller-supplied predictor.
PredictionSet predict_member_from_file(const EnsembleMember& member, const Dataset& ds);

/// Runs every member then averages. A member failure is rethrown as
/// DataError naming the member.
PredictionSet predict_ensemble(const EnsembleSpec& spec, const Dataset& ds, const MemberPredictor& predictor);

}  // namespace lcp

#endif  // LCP_ENSEMBLE_HPP_
