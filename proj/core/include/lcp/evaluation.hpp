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

#ifndef LCP_EVALUATION_HPP_
#define LCP_EVALUATION_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lcp/common.hpp"
#include "lcp/corpus.hpp"

namespace lcp {

/// Thrown when a correlation or R2 is undefined (zero variance, n < 2).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

/// Sample Pearson correlation. Requires equal lengths >= 2 and nonzero
/// variance in both inputs.
double pearson(std::span<const double> pred, std::span<const double> gold);
/// Pearson over fractional ranks; ties share their average rank.
double spearman(std::span<const double> pred, std::span<const double> gold);
double mae(std::span<const double> pred, std::span<const double> gold);
double mse(std::span<const double> pred, std::span<const double> gold);
/// Coefficient of determination, 1 - SS_res / SS_tot. May be negative.
double r2(std::span<const double> pred, std::span<const double> gold);

/// 1-based fractional ranks.
std::vector<double> fractional_ranks(std::span<const double> values);

struct MetricBlock {
  std::size_t count = 0;
  double pearson = 0.0;
  double spearman = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  double r2 = 0.0;
};

/// Strict: throws UndefinedMetricError on degenerate input.
MetricBlock compute_metrics(std::span<const double> pred, std::span<const double> gold);
/// Lenient: undefined correlations/R2 come back as NaN. Used for per-epoch
/// monitoring where an early, constant-output model is expected.
MetricBlock compute_metrics_lenient(std::span<const double> pred, std::span<const double> gold);

struct EvaluationReport {
  MetricBlock overall;
  /// Every domain is present; nullopt when the domain has fewer than two
  /// instances.
  std::map<Domain, std::optional<MetricBlock>> per_domain;
};

class PredictionSet {
 public:
  /// Throws DataError on a duplicate id or a score outside [0,1].
  void add(std::string id, double score);
  std::optional<double> find(std::string_view id) const;
  double at(std::string_view id) const;

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<double>& scores() const { return scores_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  bool operator==(const PredictionSet& o) const { return ids_ == o.ids_ && scores_ == o.scores_; }

 private:
  std::vector<std::string> ids_;
  std::vector<double> scores_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// CSV with header "id,prediction"; scores written in shortest round-trip form.
std::string format_predictions(const PredictionSet& preds);
void write_predictions(const PredictionSet& preds, const std::filesystem::path& path);
PredictionSet read_predictions(const std::filesystem::path& path);

/// Scores every labeled instance of `gold`; throws DataError when a labeled
/// instance has no prediction or the dataset carries no labels.
EvaluationReport evaluate(const PredictionSet& preds, const Dataset& gold);

std::string report_to_json(const EvaluationReport& report);
/// Fixed-order single line: count R Rho MAE MSE R2 (tab separated).
std::string report_to_tsv_line(const EvaluationReport& report);

struct AnalysisOptions {
  double bin_width = 0.05;
};

/// Writes scatter.csv (id,domain,prediction,gold), histogram.csv (score
/// distributions of predictions and gold) and per_domain.csv.
void export_analysis(const PredictionSet& preds, const Dataset& gold, const std::filesystem::path& out_dir,
                     const AnalysisOptions& options = {});

/// Histogram bin counts over [0,1]; 1.0 lands in the last bin.
std::vector<std::size_t> histogram(std::span<const double> values, double bin_width);

}  // namespace lcp

#endif  // LCP_EVALUATION_HPP_
