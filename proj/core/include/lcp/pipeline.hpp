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

// Experiment orchestration: run configs, training runs written to disk as
// checkpoint bundles with an append-only manifest, bundle-based prediction
// and the synthetic desk-scale corpus generator.

#ifndef LCP_PIPELINE_HPP_
#define LCP_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lcp/corpus.hpp"
#include "lcp/encoding.hpp"
#include "lcp/ensemble.hpp"
#include "lcp/evaluation.hpp"
#include "lcp/model.hpp"
#include "lcp/training.hpp"

namespace lcp {

/// Composable training regimes, written "adv+msft", "feat", "standard", ...
struct MethodSet {
  bool feat = false;
  bool adv = false;
  bool msft = false;
  bool mtl = false;

  /// Throws ConfigError on unknown tokens or msft combined with mtl.
  static MethodSet parse(std::string_view text);
  std::string str() const;
  bool operator==(const MethodSet&) const = default;
};

struct DataPaths {
  std::string train;
  std::string dev;
  std::string stage1_train;
  std::string stage1_dev;
  Subtask stage1_subtask = Subtask::single_word;
  std::string aux_train;
  std::string aux_dev;
  std::optional<Subtask> aux_subtask;  // defaults to the other subtask
  std::string frequency_table;
};

struct RunConfig {
  Subtask subtask = Subtask::single_word;
  MethodSet method;
  std::string encoder_preset = "toy";
  AdversarialConfig adv;
  TrainingConfig optimizer;
  bool per_domain_selection = false;
  DataPaths data;
  int min_count = 1;
  std::size_t max_len = kDefaultMaxLen;
  std::vector<double> grid_learning_rates;
  std::vector<int> grid_batch_sizes;
  std::string output_dir;

  /// Relative data paths resolve against `base_dir`. The "feat" key is
  /// folded into the method set.
  static RunConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json() const;
  /// Throws ConfigError for missing inputs or illegal combinations.
  void validate() const;
};

/// Output root used when a run does not name its output directory:
/// $LCP_OUTPUT_ROOT, else "runs".
std::filesystem::path default_output_root();

struct RunResult {
  std::filesystem::path output_dir;
  std::filesystem::path bundle;
  Selection selection;
  TrainingConfig optimizer;  // the winning config for grid searches
  std::vector<std::string> checkpoint_digests;
};

/// Executes the configured regime and writes vocab.tsv, checkpoints/,
/// bundle.json, dev_predictions.csv, train.log and manifest.jsonl into the
/// output directory. Epoch lines are echoed to `log` when given.
RunResult run_train(const RunConfig& cfg, std::ostream* log = nullptr);

/// Exhaustive search over the config's grid (defaults to the three learning
/// rates and three batch sizes when the grid is empty); the best run is
/// written out as in run_train.
RunResult run_grid_search(const RunConfig& cfg, std::ostream* log = nullptr);

/// Everything needed to score new data with a trained model.
struct Bundle {
  std::filesystem::path dir;
  Subtask subtask = Subtask::single_word;
  std::string task;
  std::size_t max_len = kDefaultMaxLen;
  Vocabulary vocab;
  std::string vocab_sha256;
  std::optional<FrequencyTable> frequencies;
  std::optional<Normalizer> normalizer;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<DomainRouting> routing;
};

/// Accepts a bundle.json, a directory holding one, or a bare checkpoint
/// (whose vocabulary reference is then followed). Verifies digests.
Bundle load_bundle(const std::filesystem::path& path);

/// One clamped prediction per instance, routing by domain when the bundle
/// declares it. Throws DataError on vocabulary/config mismatch.
PredictionSet predict_with_bundle(const Bundle& bundle, const Dataset& ds);

/// Member predictor for ensembles: prediction files, bundles/checkpoints and
/// explicitly routed checkpoints.
PredictionSet predict_member(const EnsembleMember& member, const Dataset& ds);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticCorpus {
  Dataset train;
  Dataset trial;
  Dataset test;
  FrequencyTable frequencies;
};

/// Frequency-driven corpus: gold = 1 - normalized log-frequency of the target
/// + N(0, 0.05^2), clamped to [0,1], with domains assigned round-robin.
/// Split sizes are size / size/10 / size/10. Throws ConfigError for size < 10.
SyntheticCorpus make_synthetic(std::uint64_t seed, std::size_t size, Subtask subtask = Subtask::single_word);

/// train.tsv, trial.tsv, test.tsv and frequencies.tsv.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace lcp

#endif  // LCP_PIPELINE_HPP_
