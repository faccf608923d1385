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

#include "lcp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/core.h>
#include <json.hpp>

namespace lcp {

using json = nlohmann::json;

void EncoderConfig::validate() const {
  if (layers < 0) throw ConfigError("encoder: layers must be >= 0");
  if (heads < 1 || hidden < 1 || feedforward < 1 || vocab_size < 1 || max_len < 1) {
    throw ConfigError(fmt::format(
        "encoder: heads/hidden/feedforward/vocab_size/max_len must be >= 1 (got {}/{}/{}/{}/{})",
        heads, hidden, feedforward, vocab_size, max_len));
  }
  if (hidden % heads != 0) {
    throw ConfigError(fmt::format("encoder: hidden {} not divisible by heads {}", hidden, heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0,1)");
}

EncoderConfig encoder_preset(std::string_view name) {
  EncoderConfig c;
  if (name == "toy") {
    c.layers = 2, c.heads = 2, c.hidden = 32, c.feedforward = 64, c.dropout = 0.0;
  } else if (name == "bert_base" || name == "roberta_base") {
    c.layers = 12, c.heads = 12, c.hidden = 768, c.feedforward = 3072, c.dropout = 0.1;
  } else if (name == "roberta_large") {
    c.layers = 24, c.heads = 16, c.hidden = 1024, c.feedforward = 4096, c.dropout = 0.1;
  } else {
    throw ConfigError(fmt::format("unknown encoder preset '{}'", name));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Layout and initialization

void Model::build_layout() {
  const auto h = static_cast<Eigen::Index>(config_.hidden);
  const auto f = static_cast<Eigen::Index>(config_.feedforward);
  params_.clear();
  layers_.clear();
  heads_.clear();
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    params_.push_back(Parameter{std::move(name), Matrix::Zero(rows, cols)});
    return params_.size() - 1;
  };
  add("encoder.embeddings.token", config_.vocab_size, h);
  add("encoder.embeddings.position", config_.max_len, h);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = fmt::format("encoder.layer{}.", l);
    LayerIndex li{};
    li.ln1_gamma = add(p + "ln1.gamma", 1, h);
    li.ln1_beta = add(p + "ln1.beta", 1, h);
    li.wq = add(p + "attn.wq", h, h);
    li.bq = add(p + "attn.bq", 1, h);
    li.wk = add(p + "attn.wk", h, h);
    li.bk = add(p + "attn.bk", 1, h);
    li.wv = add(p + "attn.wv", h, h);
    li.bv = add(p + "attn.bv", 1, h);
    li.wo = add(p + "attn.wo", h, h);
    li.bo = add(p + "attn.bo", 1, h);
    li.ln2_gamma = add(p + "ln2.gamma", 1, h);
    li.ln2_beta = add(p + "ln2.beta", 1, h);
    li.w1 = add(p + "ffn.w1", h, f);
    li.b1 = add(p + "ffn.b1", 1, f);
    li.w2 = add(p + "ffn.w2", f, h);
    li.b2 = add(p + "ffn.b2", 1, h);
    layers_.push_back(li);
  }
  for (const auto& t : tasks_) {
    HeadIndex hi{};
    hi.weight = add(fmt::format("head.{}.weight", t), 1, static_cast<Eigen::Index>(head_width()));
    hi.bias = add(fmt::format("head.{}.bias", t), 1, 1);
    heads_.push_back(hi);
  }
}

namespace {

void check_tasks(const std::vector<std::string>& tasks) {
  if (tasks.empty()) throw ConfigError("model needs at least one task head");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].empty()) throw ConfigError("task id must be non-empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (tasks[i] == tasks[j]) throw ConfigError(fmt::format("duplicate task id '{}'", tasks[i]));
    }
  }
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

Model Model::init(const EncoderConfig& cfg, bool feat, std::vector<std::string> tasks, std::uint64_t seed) {
  cfg.validate();
  check_tasks(tasks);
  Model m;
  m.config_ = cfg;
  m.feat_ = feat;
  m.seed_ = seed;
  m.tasks_ = std::move(tasks);
  m.build_layout();

  Rng rng(seed);
  for (auto& p : m.params_) {
    if (ends_with(p.name, "gamma")) {
      p.value.setOnes();
    } else if (p.value.rows() == 1 && !ends_with(p.name, ".weight")) {
      p.value.setZero();  // biases and layer-norm shifts
    } else {
      // embedding tables are indexed by row, so their fan-in is the width
      const bool is_table = p.name.starts_with("encoder.embeddings.") || ends_with(p.name, ".weight");
      const double fan_in = static_cast<double>(is_table ? p.value.cols() : p.value.rows());
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-bound, bound);
    }
  }
  return m;
}

Model Model::assemble(const EncoderConfig& cfg, bool feat, std::vector<std::string> tasks,
                      std::uint64_t seed, std::vector<Parameter> params) {
  cfg.validate();
  check_tasks(tasks);
  Model m;
  m.config_ = cfg;
  m.feat_ = feat;
  m.seed_ = seed;
  m.tasks_ = std::move(tasks);
  m.build_layout();
  if (params.size() != m.params_.size()) {
    throw DataError(fmt::format("checkpoint has {} tensors, layout expects {}", params.size(),
                                m.params_.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = m.params_[i];
    if (params[i].name != want.name || params[i].value.rows() != want.value.rows() ||
        params[i].value.cols() != want.value.cols()) {
      throw DataError(fmt::format("checkpoint tensor {} ('{}' {}x{}) does not match layout ('{}' {}x{})", i,
                                  params[i].name, params[i].value.rows(), params[i].value.cols(), want.name,
                                  want.value.rows(), want.value.cols()));
    }
  }
  m.params_ = std::move(params);
  return m;
}

std::size_t Model::task_index(std::string_view task) const {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i] == task) return i;
  }
  throw std::out_of_range(fmt::format("unknown task '{}'", task));
}

std::size_t Model::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool Model::is_head_parameter(std::size_t index) const {
  return std::any_of(heads_.begin(), heads_.end(),
                     [&](const HeadIndex& h) { return h.weight == index || h.bias == index; });
}

bool Model::operator==(const Model& other) const {
  if (config_ != other.config_ || feat_ != other.feat_ || seed_ != other.seed_ || tasks_ != other.tasks_ ||
      params_.size() != other.params_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i];
    const auto& b = other.params_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
    if (!std::equal(a.value.data(), a.value.data() + a.value.size(), b.value.data())) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward / backward building blocks

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, Matrix& xhat,
                  Eigen::VectorXd& rstd) {
  const Eigen::Index n = x.rows();
  const double width = static_cast<double>(x.cols());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / width;
    const double var = (x.row(i).array() - mu).square().sum() / width;
    rstd(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  Matrix y = xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Eigen::VectorXd& rstd,
                           const Matrix& gamma, Matrix* dgamma, Matrix* dbeta) {
  if (dgamma) dgamma->row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  if (dbeta) dbeta->row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  const double width = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / width;
    const double mean_dx = dxhat.row(i).dot(xhat.row(i)) / width;
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - mean_d - xhat.row(i).array() * mean_dx);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (!rng || p <= 0.0) return {};
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng->uniform() >= p ? keep : 0.0;
  return m;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

Matrix add_bias(Matrix x, const Matrix& bias) {
  x.rowwise() += bias.row(0);
  return x;
}

const Matrix& P(const Model& m, std::size_t i) { return m.parameters()[i].value; }

Matrix layer_forward(const Model& model, const Model::LayerIndex& li, const Matrix& x,
                     std::span<const std::uint8_t> mask, LayerCache& c, Rng* rng) {
  const auto& cfg = model.config();
  const Eigen::Index len = x.rows();
  const int d = cfg.hidden / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  c.x_in = x;
  c.h1 = layer_norm(x, P(model, li.ln1_gamma), P(model, li.ln1_beta), c.xhat1, c.rstd1);
  c.q = add_bias(c.h1 * P(model, li.wq), P(model, li.bq));
  c.k = add_bias(c.h1 * P(model, li.wk), P(model, li.bk));
  c.v = add_bias(c.h1 * P(model, li.wv), P(model, li.bv));

  c.attn = Matrix::Zero(len, cfg.hidden);
  c.probs.assign(static_cast<std::size_t>(cfg.heads), Matrix());
  for (int h = 0; h < cfg.heads; ++h) {
    const auto qh = c.q.middleCols(h * d, d);
    const auto kh = c.k.middleCols(h * d, d);
    Matrix scores = (qh * kh.transpose()) * scale;
    Matrix& probs = c.probs[static_cast<std::size_t>(h)];
    probs = Matrix::Zero(len, len);
    for (Eigen::Index i = 0; i < len; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < len; ++j) {
        if (mask[static_cast<std::size_t>(j)]) mx = std::max(mx, scores(i, j));
      }
      if (!std::isfinite(mx)) continue;  // no attendable keys
      double z = 0.0;
      for (Eigen::Index j = 0; j < len; ++j) {
        if (mask[static_cast<std::size_t>(j)]) {
          probs(i, j) = std::exp(scores(i, j) - mx);
          z += probs(i, j);
        }
      }
      probs.row(i) /= z;
    }
    c.attn.middleCols(h * d, d) = probs * c.v.middleCols(h * d, d);
  }
  Matrix o = add_bias(c.attn * P(model, li.wo), P(model, li.bo));
  c.drop1 = dropout_mask(len, cfg.hidden, cfg.dropout, rng);
  apply_mask(o, c.drop1);
  c.x1 = x + o;

  c.h2 = layer_norm(c.x1, P(model, li.ln2_gamma), P(model, li.ln2_beta), c.xhat2, c.rstd2);
  c.u = add_bias(c.h2 * P(model, li.w1), P(model, li.b1));
  c.g = c.u.unaryExpr([](double v) { return gelu(v); });
  Matrix mlp = add_bias(c.g * P(model, li.w2), P(model, li.b2));
  c.drop2 = dropout_mask(len, cfg.hidden, cfg.dropout, rng);
  apply_mask(mlp, c.drop2);
  return c.x1 + mlp;
}

Matrix layer_backward(const Model& model, const Model::LayerIndex& li, const LayerCache& c, const Matrix& dout,
                      std::span<const std::uint8_t> mask, Gradients* grads) {
  const auto& cfg = model.config();
  const int d = cfg.hidden / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto G = [&](std::size_t i) -> Matrix* { return grads ? &grads->tensors[i] : nullptr; };

  // feed-forward block
  Matrix dmlp = dout;
  apply_mask(dmlp, c.drop2);
  if (grads) {
    *G(li.w2) += c.g.transpose() * dmlp;
    G(li.b2)->row(0) += dmlp.colwise().sum();
  }
  Matrix du = (dmlp * P(model, li.w2).transpose()).array() *
              c.u.unaryExpr([](double v) { return gelu_grad(v); }).array();
  if (grads) {
    *G(li.w1) += c.h2.transpose() * du;
    G(li.b1)->row(0) += du.colwise().sum();
  }
  const Matrix dh2 = du * P(model, li.w1).transpose();
  Matrix dx1 = dout + layer_norm_backward(dh2, c.xhat2, c.rstd2, P(model, li.ln2_gamma), G(li.ln2_gamma),
                                          G(li.ln2_beta));

  // attention block
  Matrix dattn_out = dx1;
  apply_mask(dattn_out, c.drop1);
  if (grads) {
    *G(li.wo) += c.attn.transpose() * dattn_out;
    G(li.bo)->row(0) += dattn_out.colwise().sum();
  }
  const Matrix dattn = dattn_out * P(model, li.wo).transpose();
  Matrix dq = Matrix::Zero(c.q.rows(), c.q.cols());
  Matrix dk = Matrix::Zero(c.k.rows(), c.k.cols());
  Matrix dv = Matrix::Zero(c.v.rows(), c.v.cols());
  for (int h = 0; h < cfg.heads; ++h) {
    const Matrix& probs = c.probs[static_cast<std::size_t>(h)];
    const auto dA = dattn.middleCols(h * d, d);
    const Matrix dprobs = dA * c.v.middleCols(h * d, d).transpose();
    dv.middleCols(h * d, d) += probs.transpose() * dA;
    Matrix dscores(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const double inner = probs.row(i).dot(dprobs.row(i));
      dscores.row(i) = probs.row(i).array() * (dprobs.row(i).array() - inner);
    }
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      if (!mask[static_cast<std::size_t>(j)]) dscores.col(j).setZero();
    }
    dscores *= scale;
    dq.middleCols(h * d, d) += dscores * c.k.middleCols(h * d, d);
    dk.middleCols(h * d, d) += dscores.transpose() * c.q.middleCols(h * d, d);
  }
  if (grads) {
    *G(li.wq) += c.h1.transpose() * dq;
    G(li.bq)->row(0) += dq.colwise().sum();
    *G(li.wk) += c.h1.transpose() * dk;
    G(li.bk)->row(0) += dk.colwise().sum();
    *G(li.wv) += c.h1.transpose() * dv;
    G(li.bv)->row(0) += dv.colwise().sum();
  }
  const Matrix dh1 = dq * P(model, li.wq).transpose() + dk * P(model, li.wk).transpose() +
                     dv * P(model, li.wv).transpose();
  return dx1 + layer_norm_backward(dh1, c.xhat1, c.rstd1, P(model, li.ln1_gamma), G(li.ln1_gamma),
                                   G(li.ln1_beta));
}

Matrix run_encoder(const Model& model, Matrix x, std::span<const std::uint8_t> mask,
                   std::vector<LayerCache>& caches, Rng* rng) {
  caches.resize(static_cast<std::size_t>(model.config().layers));
  for (int l = 0; l < model.config().layers; ++l) {
    x = layer_forward(model, model.layer(static_cast<std::size_t>(l)), x, mask,
                      caches[static_cast<std::size_t>(l)], rng);
  }
  return x;
}

void check_feat(const Model& model, const std::optional<double>& feat) {
  if (feat.has_value() != model.feat_enabled()) {
    throw std::invalid_argument(model.feat_enabled() ? "feature-enriched model requires a feature value"
                                                     : "model does not take a feature value");
  }
  if (feat && !(*feat >= 0.0 && *feat <= 1.0)) {
    throw std::invalid_argument(fmt::format("feature value {} outside [0,1]", *feat));
  }
}

}  // namespace

std::vector<std::uint8_t> token_mask(const TokenSequence& seq) {
  std::vector<std::uint8_t> mask(seq.ids.size());
  for (std::size_t i = 0; i < seq.ids.size(); ++i) mask[i] = seq.ids[i] != kPadId ? 1 : 0;
  return mask;
}

Matrix embed(const Model& model, const TokenSequence& seq) {
  const auto& cfg = model.config();
  if (seq.ids.size() > static_cast<std::size_t>(cfg.max_len)) {
    throw std::out_of_range(fmt::format("sequence length {} exceeds max_len {}", seq.ids.size(), cfg.max_len));
  }
  const Matrix& tok = P(model, model.token_embedding());
  const Matrix& pos = P(model, model.position_embedding());
  Matrix emb(static_cast<Eigen::Index>(seq.ids.size()), cfg.hidden);
  for (std::size_t t = 0; t < seq.ids.size(); ++t) {
    const TokenId id = seq.ids[t];
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::out_of_range(fmt::format("token id {} outside vocabulary of size {}", id, cfg.vocab_size));
    }
    emb.row(static_cast<Eigen::Index>(t)) = tok.row(id) + pos.row(static_cast<Eigen::Index>(t));
  }
  return emb;
}

Matrix encode_states(const Model& model, const Matrix& emb, std::span<const std::uint8_t> mask) {
  if (emb.cols() != model.config().hidden) {
    throw std::invalid_argument(fmt::format("embedding width {} != hidden {}", emb.cols(), model.config().hidden));
  }
  if (static_cast<std::size_t>(emb.rows()) != mask.size()) {
    throw std::invalid_argument("mask length does not match embedding rows");
  }
  std::vector<LayerCache> caches;
  return run_encoder(model, emb, mask, caches, nullptr);
}

double forward(const Model& model, std::size_t task, const TokenSequence& seq, std::optional<double> feat,
               const Matrix* delta, ForwardCache* cache, Rng* dropout_rng) {
  check_feat(model, feat);
  if (seq.ids.empty()) throw std::invalid_argument("empty token sequence");
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.task = task;
  c.ids = seq.ids;
  c.mask = token_mask(seq);

  Matrix x = embed(model, seq);
  if (delta) {
    if (delta->rows() != x.rows() || delta->cols() != x.cols()) {
      throw std::invalid_argument("perturbation shape does not match embedding");
    }
    x += *delta;
  }
  c.states = run_encoder(model, std::move(x), c.mask, c.layers, dropout_rng);

  const auto hidden = model.config().hidden;
  RowVector pooled = c.states.row(0);
  c.pool_drop = RowVector();
  if (dropout_rng && model.config().dropout > 0.0) {
    Matrix m = dropout_mask(1, hidden, model.config().dropout, dropout_rng);
    c.pool_drop = m.row(0);
    pooled.array() *= c.pool_drop.array();
  }
  c.head_input.resize(static_cast<Eigen::Index>(model.head_width()));
  c.head_input.head(hidden) = pooled;
  if (feat) c.head_input(hidden) = *feat;

  const auto& head = model.head(task);
  c.output = c.head_input.dot(P(model, head.weight).row(0)) + P(model, head.bias)(0, 0);
  return c.output;
}

Matrix backward(const Model& model, const ForwardCache& c, double d_output, Gradients* grads) {
  const auto hidden = model.config().hidden;
  const auto& head = model.head(c.task);
  if (grads) {
    grads->tensors[head.weight].row(0) += d_output * c.head_input;
    grads->tensors[head.bias](0, 0) += d_output;
  }
  RowVector dpooled = d_output * P(model, head.weight).row(0).head(hidden);
  if (c.pool_drop.size() != 0) dpooled.array() *= c.pool_drop.array();

  Matrix dx = Matrix::Zero(c.states.rows(), c.states.cols());
  dx.row(0) = dpooled;
  for (int l = model.config().layers - 1; l >= 0; --l) {
    dx = layer_backward(model, model.layer(static_cast<std::size_t>(l)), c.layers[static_cast<std::size_t>(l)], dx,
                        c.mask, grads);
  }
  if (grads) {
    Matrix& dtok = grads->tensors[model.token_embedding()];
    Matrix& dpos = grads->tensors[model.position_embedding()];
    for (std::size_t t = 0; t < c.ids.size(); ++t) {
      const auto row = static_cast<Eigen::Index>(t);
      dtok.row(c.ids[t]) += dx.row(row);
      dpos.row(row) += dx.row(row);
    }
  }
  return dx;
}

double predict(const Model& model, const TokenSequence& seq, std::optional<double> feat) {
  return std::clamp(forward(model, 0, seq, feat), 0.0, 1.0);
}

double mtl_forward(const Model& model, std::string_view task, const TokenSequence& seq,
                   std::optional<double> feat) {
  return std::clamp(forward(model, model.task_index(task), seq, feat), 0.0, 1.0);
}

Gradients::Gradients(const Model& model) {
  tensors.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) tensors.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
}

void Gradients::zero() {
  for (auto& t : tensors) t.setZero();
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& t : tensors) sq += t.squaredNorm();
  return std::sqrt(sq);
}

void Gradients::scale(double s) {
  for (auto& t : tensors) t *= s;
}

std::string parameter_digest(const Model& model, std::string_view prefix) {
  std::string bytes;
  for (const auto& p : model.parameters()) {
    if (!p.name.starts_with(prefix)) continue;
    bytes += p.name;
    bytes += '\0';
    bytes += fmt::format("{}x{}", p.value.rows(), p.value.cols());
    bytes += '\0';
    bytes.append(reinterpret_cast<const char*>(p.value.data()),
                 static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return sha256_hex(bytes);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::string_view kCheckpointFormat = "lcp-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

std::string serialize_checkpoint(const Model& model, const CheckpointRef& ref) {
  const auto& cfg = model.config();
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"layers", cfg.layers},         {"heads", cfg.heads},
                 {"hidden", cfg.hidden},         {"feedforward", cfg.feedforward},
                 {"vocab_size", cfg.vocab_size}, {"max_len", cfg.max_len},
                 {"dropout", cfg.dropout}};
  j["feat"] = model.feat_enabled();
  j["seed"] = model.seed();
  j["tasks"] = model.tasks();
  j["vocab"] = {{"path", ref.vocab_path}, {"sha256", ref.vocab_sha256}};
  json params = json::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"data", std::vector<double>(p.value.data(), p.value.data() + p.value.size())}});
  }
  j["parameters"] = std::move(params);
  return j.dump() + "\n";
}

Model parse_checkpoint(std::string_view text, CheckpointRef* ref) {
  json j;
  try {
    j = json::parse(text);
    if (j.at("format") != kCheckpointFormat) throw DataError("not an lcp checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw DataError(fmt::format("unsupported checkpoint version {}", j.at("version").dump()));
    }
    EncoderConfig cfg;
    const auto& c = j.at("config");
    cfg.layers = c.at("layers");
    cfg.heads = c.at("heads");
    cfg.hidden = c.at("hidden");
    cfg.feedforward = c.at("feedforward");
    cfg.vocab_size = c.at("vocab_size");
    cfg.max_len = c.at("max_len");
    cfg.dropout = c.at("dropout");
    std::vector<Parameter> params;
    for (const auto& p : j.at("parameters")) {
      const auto rows = p.at("rows").get<Eigen::Index>();
      const auto cols = p.at("cols").get<Eigen::Index>();
      const auto data = p.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DataError(fmt::format("tensor '{}' has {} values for shape {}x{}",
                                    p.at("name").get<std::string>(), data.size(), rows, cols));
      }
      Matrix m = Eigen::Map<const Matrix>(data.data(), rows, cols);
      params.push_back(Parameter{p.at("name").get<std::string>(), std::move(m)});
    }
    if (ref) {
      ref->vocab_path = j.at("vocab").at("path");
      ref->vocab_sha256 = j.at("vocab").at("sha256");
    }
    return Model::assemble(cfg, j.at("feat"), j.at("tasks").get<std::vector<std::string>>(),
                           j.at("seed").get<std::uint64_t>(), std::move(params));
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed checkpoint: {}", e.what()));
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const CheckpointRef& ref) {
  write_file_atomic(path, serialize_checkpoint(model, ref));
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointRef* ref) {
  if (!std::filesystem::exists(path)) throw DataError(fmt::format("checkpoint '{}' not found", path.string()));
  try {
    return parse_checkpoint(read_file(path), ref);
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace lcp
