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

// Transformer encoder with scalar regression heads.
//
// A Model owns one encoder and one linear head per task id. A plain
// regression model is a Model with a single task. All arithmetic is double
// precision and every operation has a hand-derived backward pass so the
// training code can take gradients with respect to both the parameters and
// the embedding-layer output (the injection site for adversarial
// perturbations).

#ifndef LCP_MODEL_HPP_
#define LCP_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lcp/common.hpp"
#include "lcp/encoding.hpp"

namespace lcp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct EncoderConfig {
  int layers = 2;
  int heads = 2;
  int hidden = 32;
  int feedforward = 64;
  int vocab_size = 0;
  int max_len = static_cast<int>(kDefaultMaxLen);
  double dropout = 0.0;

  /// layers may be 0 (debug identity encoder); every other count must be >= 1
  /// and hidden must be divisible by heads. Throws ConfigError.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

/// Named architecture presets: "toy" (2/2/32, ff 64, dropout 0), "bert_base",
/// "roberta_base" (12/12/768), "roberta_large" (24/16/1024). vocab_size and
/// max_len are left for the caller to fill.
EncoderConfig encoder_preset(std::string_view name);

struct Parameter {
  std::string name;
  Matrix value;
};

class Model {
 public:
  struct LayerIndex {
    std::size_t ln1_gamma, ln1_beta;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_gamma, ln2_beta;
    std::size_t w1, b1, w2, b2;
  };
  struct HeadIndex {
    std::size_t weight, bias;
  };

  /// Deterministic initialization: weights uniform in +-1/sqrt(fan_in),
  /// biases zero, layer-norm gains one. Throws ConfigError on a bad config or
  /// duplicate task ids.
  static Model init(const EncoderConfig& cfg, bool feat, std::vector<std::string> tasks,
                    std::uint64_t seed);

  /// Rebuilds a model from stored tensors; throws DataError when names or
  /// shapes do not match the layout implied by the config and tasks.
  static Model assemble(const EncoderConfig& cfg, bool feat, std::vector<std::string> tasks,
                        std::uint64_t seed, std::vector<Parameter> params);

  const EncoderConfig& config() const { return config_; }
  bool feat_enabled() const { return feat_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& tasks() const { return tasks_; }
  /// Throws std::out_of_range for an unregistered task.
  std::size_t task_index(std::string_view task) const;
  std::size_t head_width() const { return static_cast<std::size_t>(config_.hidden) + (feat_ ? 1 : 0); }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t num_scalars() const;

  std::size_t token_embedding() const { return 0; }
  std::size_t position_embedding() const { return 1; }
  const LayerIndex& layer(std::size_t i) const { return layers_.at(i); }
  const HeadIndex& head(std::size_t task) const { return heads_.at(task); }
  /// True when parameter `index` belongs to some task head.
  bool is_head_parameter(std::size_t index) const;

  bool operator==(const Model& other) const;

 private:
  EncoderConfig config_;
  bool feat_ = false;
  std::uint64_t seed_ = 0;
  std::vector<std::string> tasks_;
  std::vector<Parameter> params_;
  std::vector<LayerIndex> layers_;
  std::vector<HeadIndex> heads_;

  void build_layout();
};

inline constexpr std::string_view kDefaultTask = "main";

/// Single-head regression model.
inline Model init_model(const EncoderConfig& cfg, bool feat, std::uint64_t seed) {
  return Model::init(cfg, feat, {std::string(kDefaultTask)}, seed);
}

/// Shared encoder with one head per task.
inline Model init_multitask(const EncoderConfig& cfg, bool feat, std::vector<std::string> tasks,
                            std::uint64_t seed) {
  return Model::init(cfg, feat, std::move(tasks), seed);
}

/// 1 for real tokens, 0 for padding.
std::vector<std::uint8_t> token_mask(const TokenSequence& seq);

/// Token embedding plus learned position embedding. Throws std::out_of_range
/// for ids outside the vocabulary or sequences longer than max_len.
Matrix embed(const Model& model, const TokenSequence& seq);

/// Last-layer hidden states; padding keys are excluded from attention.
Matrix encode_states(const Model& model, const Matrix& emb, std::span<const std::uint8_t> mask);

/// Clamped score in [0,1] from the first task head. feat must be present
/// exactly when the model is feature-enriched.
double predict(const Model& model, const TokenSequence& seq, std::optional<double> feat = std::nullopt);

/// Clamped score from the named task head.
double mtl_forward(const Model& model, std::string_view task, const TokenSequence& seq,
                   std::optional<double> feat = std::nullopt);

// ---------------------------------------------------------------------------
// Differentiable core used by training and gradient checks.

struct LayerCache {
  Matrix x_in;
  Matrix xhat1;
  Eigen::VectorXd rstd1;
  Matrix h1, q, k, v;
  std::vector<Matrix> probs;
  Matrix attn;
  Matrix drop1;
  Matrix x1;
  Matrix xhat2;
  Eigen::VectorXd rstd2;
  Matrix h2, u, g;
  Matrix drop2;
};

struct ForwardCache {
  std::size_t task = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;
  std::vector<LayerCache> layers;
  Matrix states;
  RowVector head_input;
  RowVector pool_drop;
  double output = 0.0;
};

/// Gradient buffers aligned with Model::parameters().
struct Gradients {
  std::vector<Matrix> tensors;

  Gradients() = default;
  explicit Gradients(const Model& model);
  void zero();
  double global_norm() const;
  void scale(double s);
};

/// Raw (unclamped) head output for `task`. `delta`, when given, is added to
/// the embedding output. Passing a dropout RNG enables train-mode dropout.
double forward(const Model& model, std::size_t task, const TokenSequence& seq,
               std::optional<double> feat, const Matrix* delta = nullptr,
               ForwardCache* cache = nullptr, Rng* dropout_rng = nullptr);

/// Backpropagates d(loss)/d(output) through a cached forward pass. Adds
/// parameter gradients into `grads` when non-null and returns the gradient
/// with respect to the embedding output (equivalently, the perturbation).
Matrix backward(const Model& model, const ForwardCache& cache, double d_output, Gradients* grads);

/// SHA-256 over the names and raw bytes of every parameter whose name starts
/// with `prefix` (all parameters when empty).
std::string parameter_digest(const Model& model, std::string_view prefix = "");

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON with config, seed, tasks, vocabulary reference
// and every parameter tensor. Doubles are written in shortest round-trip form
// so save/load is bit-exact.

struct CheckpointRef {
  std::string vocab_path;
  std::string vocab_sha256;
};

std::string serialize_checkpoint(const Model& model, const CheckpointRef& ref = {});
Model parse_checkpoint(std::string_view text, CheckpointRef* ref = nullptr);
void save_checkpoint(const Model& model, const std::filesystem::path& path, const CheckpointRef& ref = {});
Model load_checkpoint(const std::filesystem::path& path, CheckpointRef* ref = nullptr);

}  // namespace lcp

#endif  // LCP_MODEL_HPP_
