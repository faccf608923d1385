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

#ifndef LCP_TRAINING_HPP_
#define LCP_TRAINING_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcp/corpus.hpp"
#include "lcp/encoding.hpp"
#include "lcp/evaluation.hpp"
#include "lcp/model.hpp"

namespace lcp {

inline constexpr std::array<double, 3> kTargetLearningRates = {8e-6, 9e-6, 1e-5};
inline constexpr std::array<int, 3> kTargetBatchSizes = {8, 16, 32};

struct TrainingConfig {
  /// 1e-3 suits randomly initialized toy encoders; pretrained-scale
  /// encoders use kTargetLearningRates.
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_epochs = 10;
  double warmup_fraction = 0.1;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

/// Virtual-adversarial (SMART) regularization settings.
struct AdversarialConfig {
  double epsilon = 1e-5;        // radius of the infinity-norm ball
  double step_size = 1e-3;      // ascent step
  double init_variance = 1e-5;  // variance of the random start
  int pgd_steps = 1;
  double alpha = 1.0;           // regularizer weight

  /// Throws ConfigError unless every field is positive (alpha may be 0 for
  /// ablations).
  void validate() const;
  bool operator==(const AdversarialConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Schedule, clipping, optimizer

std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction);

/// Linear warm-up from 0 to `peak` over the first ceil(warmup_fraction *
/// total) steps, then linear decay to 0 at `total_steps`.
double lr_at(std::size_t step, std::size_t total_steps, double peak, double warmup_fraction);
inline double lr_at(std::size_t step, std::size_t total_steps, const TrainingConfig& cfg) {
  return lr_at(step, total_steps, cfg.learning_rate, cfg.warmup_fraction);
}

/// Rescales all gradients when their global L2 norm exceeds clip_norm.
/// Returns the pre-clip norm; throws NumericError on non-finite gradients.
double clip_gradients(Gradients& grads, double clip_norm);

/// Adam without weight decay. Parameter groups marked inactive in a step are
/// left untouched (moments and step count included).
class Adam {
 public:
  explicit Adam(const Model& model, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-6);
  void step(Model& model, const Gradients& grads, double lr, const std::vector<bool>& active = {});

 private:
  double beta1_, beta2_, eps_;
  std::vector<Matrix> m_, v_;
  std::vector<std::int64_t> t_;
};

// ---------------------------------------------------------------------------
// Prepared examples

struct Example {
  std::string id;
  Domain domain = Domain::europarl;
  TokenSequence seq;
  std::optional<double> feat;
  std::optional<double> gold;
};

struct ExampleSet {
  Subtask subtask = Subtask::single_word;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

struct FeatureContext {
  const Vocabulary* vocab = nullptr;
  std::size_t max_len = kDefaultMaxLen;
  /// Both set: examples carry the normalized log-frequency feature.
  const FrequencyTable* frequencies = nullptr;
  std::optional<Normalizer> normalizer;
};

ExampleSet prepare(const Dataset& ds, const FeatureContext& ctx);

/// Min-max normalizer over the log-frequency of every training target.
Normalizer fit_feature_normalizer(std::span<const Dataset* const> train_sets, const FrequencyTable& table);

// ---------------------------------------------------------------------------
// Losses and perturbations

/// Mean squared error of raw head outputs. Throws DataError on unlabeled input.
double task_loss(const Model& model, std::size_t task, std::span<const Example> batch);

/// task_loss plus its parameter gradient, accumulated into `grads`.
double task_loss_and_grad(const Model& model, std::size_t task, std::span<const Example> batch, Gradients& grads,
                          Rng* dropout_rng = nullptr);

/// Scalar function of a perturbation: returns f(x + delta) and, when `grad`
/// is non-null, writes df/d(delta) into it.
using PerturbedFunction = std::function<double(const Matrix& delta, Matrix* grad)>;

/// Projected gradient ascent on l_s = (f(x+delta) - f(x))^2 inside the
/// infinity-norm ball of radius epsilon. Rows where mask == 0 stay zero.
Matrix pgd_perturb(Eigen::Index rows, Eigen::Index cols, std::span<const std::uint8_t> mask,
                   const PerturbedFunction& f, const AdversarialConfig& adv, Rng& rng);

/// One perturbation per example, drawn from a single stream seeded by `seed`.
std::vector<Matrix> pgd_perturb(const Model& model, std::size_t task, std::span<const Example> batch,
                                const AdversarialConfig& adv, std::uint64_t seed);

struct SmartLoss {
  double total = 0.0;
  double task = 0.0;
  double regularizer = 0.0;  // unweighted mean smoothness term
};

/// task + alpha * mean (f(x+delta) - sg(f(x)))^2 for the given
/// perturbations. Accumulates the parameter gradient when `grads` is set.
SmartLoss smart_loss_with_perturbation(const Model& model, std::size_t task, std::span<const Example> batch,
                                       std::span<const Matrix> deltas, double alpha, Gradients* grads = nullptr,
                                       Rng* dropout_rng = nullptr);

/// SMART objective with perturbations found by pgd_perturb(seed).
SmartLoss smart_loss(const Model& model, std::size_t task, std::span<const Example> batch,
                     const AdversarialConfig& adv, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training procedures

enum class Method { standard, feat, adv };

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::shared_ptr<const Model> snapshot;
  PredictionSet dev_predictions;
  MetricBlock dev_metrics;  // lenient: undefined metrics are NaN
  std::map<Domain, MetricBlock> dev_domain_metrics;
};

struct CheckpointSet {
  std::string task;
  std::vector<EpochRecord> epochs;
};

struct TrainHooks {
  std::function<void(const Model&)> on_start;
  /// Called after each optimizer update with the global step and the index
  /// (into the task list) of the task that owned the batch.
  std::function<void(const Model&, std::size_t step, std::size_t task)> on_step;
  std::function<void(const std::string& task, const EpochRecord&)> on_epoch;
};

/// Fine-tunes the model's first head. Adam + lr_at schedule + clipping every
/// step, shuffled (seeded) batches, one dev evaluation and snapshot per epoch.
CheckpointSet train(Model& model, const ExampleSet& train_data, const ExampleSet& dev_data,
                    const TrainingConfig& cfg, Method method, const AdversarialConfig* adv = nullptr,
                    const TrainHooks& hooks = {});

struct Stage {
  const ExampleSet* train = nullptr;
  const ExampleSet* dev = nullptr;
};

struct MsftResult {
  CheckpointSet stage1;
  CheckpointSet stage2;
  std::size_t stage1_best = 0;  // 0-based epoch index
  std::string stage1_best_digest;
  std::string stage2_initial_digest;
};

/// Multi-step fine-tuning: train on stage 1, select its best epoch by whole
/// dev Pearson, then continue from that snapshot on stage 2.
MsftResult train_msft(Model& model, const Stage& stage1, const Stage& stage2, const TrainingConfig& cfg,
                      Method method, const AdversarialConfig* adv = nullptr, const TrainHooks& hooks = {});

struct TaskData {
  std::string task;
  const ExampleSet* train = nullptr;
  const ExampleSet* dev = nullptr;
};

/// Multi-task training: per epoch, every task's batches are interleaved in a
/// seeded random order; each step updates the shared encoder and only the
/// owning task's head.
std::map<std::string, CheckpointSet> train_mtl(Model& model, std::span<const TaskData> tasks,
                                               const TrainingConfig& cfg, const AdversarialConfig* adv = nullptr,
                                               const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Selection

/// Index of the maximum, earliest on ties; NaN ranks below everything.
std::size_t argmax_earliest(std::span<const double> values);

struct Selection {
  std::size_t overall = 0;                    // 0-based epoch index
  std::map<Domain, std::size_t> per_domain;   // filled when selecting per domain
  bool by_domain = false;

  /// Epoch index to use for an instance of `d`.
  std::size_t for_domain(Domain d) const { return by_domain ? per_domain.at(d) : overall; }
};

/// Best epoch by dev Pearson, over the whole dev set or per domain. Throws
/// DataError when a required partition has fewer than two labeled instances.
Selection select_best(const CheckpointSet& cs, const ExampleSet& dev, bool per_domain);

struct GridResult {
  std::size_t best_index = 0;
  TrainingConfig config;
  CheckpointSet checkpoints;
  std::vector<double> run_scores;  // best dev Pearson of each run, grid order
};

/// Cartesian product in declared order (learning rate major).
std::vector<TrainingConfig> make_grid(const TrainingConfig& base, std::span<const double> learning_rates,
                                      std::span<const int> batch_sizes);

/// Runs every grid point; picks the run whose best checkpoint has the
/// highest dev Pearson (first in grid order on ties).
GridResult grid_search(std::span<const TrainingConfig> grid,
                       const std::function<CheckpointSet(const TrainingConfig&)>& train_fn,
                       const ExampleSet& dev);

/// Clamped predictions of `task` for every example.
PredictionSet predict_examples(const Model& model, std::size_t task, const ExampleSet& data);

}  // namespace lcp

#endif  // LCP_TRAINING_HPP_
