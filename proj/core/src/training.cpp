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

#include "lcp/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>

namespace lcp {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must be in (0,1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
}

void AdversarialConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("adv.epsilon must be > 0");
  if (!(step_size > 0.0)) throw ConfigError("adv.step_size must be > 0");
  if (!(init_variance > 0.0)) throw ConfigError("adv.init_variance must be > 0");
  if (pgd_steps < 1) throw ConfigError("adv.pgd_steps must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("adv.alpha must be >= 0");
}

// ---------------------------------------------------------------------------

std::size_t warmup_steps(std::size_t total_steps, double warmup_fraction) {
  // the epsilon keeps products like 0.1 * 30 = 3.0000000000000004 from rounding up
  const double w = std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9);
  return std::min(total_steps, static_cast<std::size_t>(std::max(0.0, w)));
}

double lr_at(std::size_t step, std::size_t total_steps, double peak, double warmup_fraction) {
  if (total_steps == 0 || step > total_steps) {
    throw std::invalid_argument(fmt::format("lr_at: step {} outside [0, {}]", step, total_steps));
  }
  if (step == total_steps) return 0.0;
  const std::size_t warm = warmup_steps(total_steps, warmup_fraction);
  if (step < warm) return peak * (static_cast<double>(step) / static_cast<double>(warm));
  return peak * (static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warm));
}

double clip_gradients(Gradients& grads, double clip_norm) {
  const double norm = grads.global_norm();
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > clip_norm) grads.scale(clip_norm / norm);
  return norm;
}

Adam::Adam(const Model& model, double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : model.parameters()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  t_.assign(m_.size(), 0);
}

void Adam::step(Model& model, const Gradients& grads, double lr, const std::vector<bool>& active) {
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    const Matrix& g = grads.tensors[i];
    ++t_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_[i]));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_[i]));
    params[i].value.array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------

ExampleSet prepare(const Dataset& ds, const FeatureContext& ctx) {
  if (!ctx.vocab) throw std::invalid_argument("prepare: no vocabulary");
  const bool with_feat = ctx.frequencies != nullptr && ctx.normalizer.has_value();
  ExampleSet out;
  out.subtask = ds.subtask;
  out.examples.reserve(ds.size());
  for (const auto& inst : ds.instances) {
    Example ex;
    ex.id = inst.id;
    ex.domain = inst.domain;
    ex.seq = encode(inst, *ctx.vocab, ctx.max_len);
    if (with_feat) ex.feat = ctx.normalizer->apply(log_frequency(inst.target, *ctx.frequencies));
    ex.gold = inst.gold;
    out.examples.push_back(std::move(ex));
  }
  return out;
}

Normalizer fit_feature_normalizer(std::span<const Dataset* const> train_sets, const FrequencyTable& table) {
  std::vector<double> values;
  for (const Dataset* ds : train_sets) {
    for (const auto& inst : ds->instances) values.push_back(log_frequency(inst.target, table));
  }
  if (values.empty()) throw DataError("cannot fit the feature normalizer on empty training data");
  return fit_normalizer(values);
}

// ---------------------------------------------------------------------------

namespace {

double gold_of(const Example& ex) {
  if (!ex.gold) throw DataError(fmt::format("instance '{}' has no gold label", ex.id));
  return *ex.gold;
}

void zero_masked_rows(Matrix& m, std::span<const std::uint8_t> mask) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) m.row(r).setZero();
  }
}

}  // namespace

double task_loss(const Model& model, std::size_t task, std::span<const Example> batch) {
  if (batch.empty()) throw std::invalid_argument("task_loss: empty batch");
  double sum = 0.0;
  for (const auto& ex : batch) {
    const double y = gold_of(ex);
    const double e = forward(model, task, ex.seq, ex.feat) - y;
    sum += e * e;
  }
  return sum / static_cast<double>(batch.size());
}

double task_loss_and_grad(const Model& model, std::size_t task, std::span<const Example> batch, Gradients& grads,
                          Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("task_loss: empty batch");
  const double n = static_cast<double>(batch.size());
  double sum = 0.0;
  ForwardCache cache;
  for (const auto& ex : batch) {
    const double y = gold_of(ex);
    const double e = forward(model, task, ex.seq, ex.feat, nullptr, &cache, dropout_rng) - y;
    sum += e * e;
    backward(model, cache, 2.0 * e / n, &grads);
  }
  return sum / n;
}

Matrix pgd_perturb(Eigen::Index rows, Eigen::Index cols, std::span<const std::uint8_t> mask,
                   const PerturbedFunction& f, const AdversarialConfig& adv, Rng& rng) {
  adv.validate();
  if (static_cast<std::size_t>(rows) != mask.size()) throw std::invalid_argument("pgd_perturb: mask length mismatch");
  const double eps = adv.epsilon;
  const double sd = std::sqrt(adv.init_variance);

  Matrix delta(rows, cols);
  for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] = std::clamp(rng.normal() * sd, -eps, eps);
  zero_masked_rows(delta, mask);

  const double reference = f(Matrix::Zero(rows, cols), nullptr);
  Matrix grad;
  for (int k = 0; k < adv.pgd_steps; ++k) {
    const double perturbed = f(delta, &grad);
    grad *= 2.0 * (perturbed - reference);
    zero_masked_rows(grad, mask);
    const double gmax = grad.cwiseAbs().maxCoeff();
    if (!std::isfinite(gmax)) throw NumericError("non-finite perturbation gradient");
    if (gmax == 0.0) break;
    delta += (adv.step_size / gmax) * grad;
    delta = delta.cwiseMax(-eps).cwiseMin(eps);
    zero_masked_rows(delta, mask);
  }
  return delta;
}

std::vector<Matrix> pgd_perturb(const Model& model, std::size_t task, std::span<const Example> batch,
                                const AdversarialConfig& adv, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> deltas;
  deltas.reserve(batch.size());
  for (const auto& ex : batch) {
    const auto mask = token_mask(ex.seq);
    PerturbedFunction fn = [&](const Matrix& delta, Matrix* grad) {
      ForwardCache cache;
      const double out = forward(model, task, ex.seq, ex.feat, &delta, &cache);
      if (grad) *grad = backward(model, cache, 1.0, nullptr);
      return out;
    };
    deltas.push_back(pgd_perturb(static_cast<Eigen::Index>(ex.seq.size()), model.config().hidden, mask, fn, adv, rng));
  }
  return deltas;
}

SmartLoss smart_loss_with_perturbation(const Model& model, std::size_t task, std::span<const Example> batch,
                                       std::span<const Matrix> deltas, double alpha, Gradients* grads,
                                       Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("smart_loss: empty batch");
  if (deltas.size() != batch.size()) throw std::invalid_argument("smart_loss: one perturbation per example required");
  const double n = static_cast<double>(batch.size());
  const bool train_mode_differs = dropout_rng != nullptr && model.config().dropout > 0.0;
  SmartLoss loss;
  ForwardCache clean, perturbed;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const double y = gold_of(ex);
    const double out = forward(model, task, ex.seq, ex.feat, nullptr, &clean, dropout_rng);
    const double e = out - y;
    loss.task += e * e;
    if (grads) backward(model, clean, 2.0 * e / n, grads);

    // reference output is a constant target: no gradient flows through it
    const double reference = train_mode_differs ? forward(model, task, ex.seq, ex.feat) : out;
    const double out_adv = forward(model, task, ex.seq, ex.feat, &deltas[i], &perturbed);
    const double diff = out_adv - reference;
    loss.regularizer += diff * diff;
    if (grads && alpha != 0.0) backward(model, perturbed, 2.0 * alpha * diff / n, grads);
  }
  loss.task /= n;
  loss.regularizer /= n;
  loss.total = loss.task + alpha * loss.regularizer;
  return loss;
}

SmartLoss smart_loss(const Model& model, std::size_t task, std::span<const Example> batch,
                     const AdversarialConfig& adv, std::uint64_t seed) {
  const auto deltas = pgd_perturb(model, task, batch, adv, seed);
  return smart_loss_with_perturbation(model, task, batch, deltas, adv.alpha);
}

// ---------------------------------------------------------------------------

PredictionSet predict_examples(const Model& model, std::size_t task, const ExampleSet& data) {
  PredictionSet preds;
  for (const auto& ex : data.examples) {
    preds.add(ex.id, std::clamp(forward(model, task, ex.seq, ex.feat), 0.0, 1.0));
  }
  return preds;
}

namespace {

enum StreamTag : std::uint64_t { kBatchOrder = 1, kInterleave = 2, kPerturb = 3, kDropout = 4 };

struct TaskRun {
  std::size_t head = 0;
  const ExampleSet* train = nullptr;
  const ExampleSet* dev = nullptr;
  CheckpointSet checkpoints;
  std::size_t batches_per_epoch = 0;
};

void check_examples(const ExampleSet& set, const Model& model, std::string_view what, bool need_labels) {
  for (const auto& ex : set.examples) {
    if (ex.feat.has_value() != model.feat_enabled()) {
      throw ConfigError(fmt::format("{} example '{}' {} a feature value but the model is {}feature-enriched", what,
                                    ex.id, ex.feat ? "has" : "lacks", model.feat_enabled() ? "" : "not "));
    }
    if (need_labels && !ex.gold) throw DataError(fmt::format("{} example '{}' has no gold label", what, ex.id));
  }
}

EpochRecord evaluate_epoch(const Model& model, std::size_t head, const ExampleSet& dev) {
  EpochRecord rec;
  rec.dev_predictions = predict_examples(model, head, dev);
  std::vector<double> p, g;
  std::map<Domain, std::pair<std::vector<double>, std::vector<double>>> parts;
  for (std::size_t i = 0; i < dev.examples.size(); ++i) {
    const auto& ex = dev.examples[i];
    const double s = rec.dev_predictions.scores()[i];
    p.push_back(s);
    g.push_back(*ex.gold);
    parts[ex.domain].first.push_back(s);
    parts[ex.domain].second.push_back(*ex.gold);
  }
  rec.dev_metrics = compute_metrics_lenient(p, g);
  for (Domain d : kDomains) rec.dev_domain_metrics[d] = compute_metrics_lenient(parts[d].first, parts[d].second);
  return rec;
}

// Shared loop behind train() and train_mtl().
std::vector<CheckpointSet> run_training(Model& model, std::vector<TaskRun>& runs, const TrainingConfig& cfg,
                                        const AdversarialConfig* adv, const TrainHooks& hooks) {
  cfg.validate();
  if (adv) adv->validate();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::size_t per_epoch = 0;
  for (auto& r : runs) {
    r.batches_per_epoch = (r.train->size() + bs - 1) / bs;
    per_epoch += r.batches_per_epoch;
  }
  const std::size_t total_steps = per_epoch * static_cast<std::size_t>(cfg.max_epochs);

  Adam optimizer(model);
  Gradients grads(model);
  const auto& params = model.parameters();
  std::vector<std::vector<bool>> active(runs.size(), std::vector<bool>(params.size(), false));
  for (std::size_t t = 0; t < runs.size(); ++t) {
    const auto& head = model.head(runs[t].head);
    for (std::size_t i = 0; i < params.size(); ++i) {
      active[t][i] = !model.is_head_parameter(i) || i == head.weight || i == head.bias;
    }
  }

  if (hooks.on_start) hooks.on_start(model);
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    std::vector<std::vector<std::vector<std::size_t>>> batches(runs.size());
    std::vector<std::size_t> schedule;
    for (std::size_t t = 0; t < runs.size(); ++t) {
      std::vector<std::size_t> order(runs[t].train->size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(mix_seed(cfg.seed, {kBatchOrder, e, t}));
      rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += bs) {
        batches[t].emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                                order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + bs)));
      }
      schedule.insert(schedule.end(), batches[t].size(), t);
    }
    Rng interleave(mix_seed(cfg.seed, {kInterleave, e}));
    interleave.shuffle(schedule);

    std::vector<std::size_t> next(runs.size(), 0);
    std::vector<double> loss_sum(runs.size(), 0.0);
    std::vector<Example> batch;
    for (std::size_t t : schedule) {
      const auto& idx = batches[t][next[t]++];
      batch.clear();
      for (std::size_t i : idx) batch.push_back(runs[t].train->examples[i]);
      const std::size_t head = runs[t].head;

      grads.zero();
      Rng dropout(mix_seed(cfg.seed, {kDropout, step}));
      Rng* dropout_rng = model.config().dropout > 0.0 ? &dropout : nullptr;
      double loss = 0.0;
      if (adv) {
        const auto deltas = pgd_perturb(model, head, batch, *adv, mix_seed(cfg.seed, {kPerturb, step}));
        loss = smart_loss_with_perturbation(model, head, batch, deltas, adv->alpha, &grads, dropout_rng).total;
      } else {
        loss = task_loss_and_grad(model, head, batch, grads, dropout_rng);
      }
      if (!std::isfinite(loss)) {
        throw NumericError(fmt::format("non-finite training loss at epoch {} step {}", epoch, step));
      }
      loss_sum[t] += loss * static_cast<double>(batch.size());
      clip_gradients(grads, cfg.clip_norm);
      optimizer.step(model, grads, lr_at(step, total_steps, cfg), active[t]);
      ++step;
      if (hooks.on_step) hooks.on_step(model, step, t);
    }

    auto snapshot = std::make_shared<const Model>(model);
    for (std::size_t t = 0; t < runs.size(); ++t) {
      EpochRecord rec = evaluate_epoch(model, runs[t].head, *runs[t].dev);
      rec.epoch = epoch;
      rec.train_loss = loss_sum[t] / static_cast<double>(runs[t].train->size());
      rec.snapshot = snapshot;
      if (hooks.on_epoch) hooks.on_epoch(runs[t].checkpoints.task, rec);
      runs[t].checkpoints.epochs.push_back(std::move(rec));
    }
  }
  std::vector<CheckpointSet> out;
  for (auto& r : runs) out.push_back(std::move(r.checkpoints));
  return out;
}

}  // namespace

CheckpointSet train(Model& model, const ExampleSet& train_data, const ExampleSet& dev_data,
                    const TrainingConfig& cfg, Method method, const AdversarialConfig* adv, const TrainHooks& hooks) {
  if (train_data.empty()) throw DataError("train: training data is empty");
  switch (method) {
    case Method::standard:
      if (model.feat_enabled()) throw ConfigError("standard fine-tuning expects a model without the feature input");
      break;
    case Method::feat:
      if (!model.feat_enabled()) throw ConfigError("feature-enriched training needs a model built with feat=true");
      break;
    case Method::adv:
      if (!adv) throw ConfigError("adversarial training needs an AdversarialConfig");
      break;
  }
  check_examples(train_data, model, "train", true);
  check_examples(dev_data, model, "dev", true);
  std::vector<TaskRun> runs(1);
  runs[0].head = 0;
  runs[0].train = &train_data;
  runs[0].dev = &dev_data;
  runs[0].checkpoints.task = model.tasks()[0];
  return std::move(run_training(model, runs, cfg, method == Method::adv ? adv : nullptr, hooks)[0]);
}

MsftResult train_msft(Model& model, const Stage& stage1, const Stage& stage2, const TrainingConfig& cfg,
                      Method method, const AdversarialConfig* adv, const TrainHooks& hooks) {
  if (!stage1.train || !stage1.dev || !stage2.train || !stage2.dev) {
    throw ConfigError("multi-step fine-tuning needs train and dev data for both stages");
  }
  if (stage1.train->empty() || stage2.train->empty()) throw DataError("multi-step fine-tuning: empty stage dataset");
  cfg.validate();

  MsftResult result;
  TrainHooks first = hooks;
  first.on_start = nullptr;
  result.stage1 = train(model, *stage1.train, *stage1.dev, cfg, method, adv, first);
  result.stage1_best = select_best(result.stage1, *stage1.dev, false).overall;
  const Model& best = *result.stage1.epochs[result.stage1_best].snapshot;
  result.stage1_best_digest = parameter_digest(best);
  model = best;

  TrainHooks second = hooks;
  second.on_start = [&](const Model& m) {
    result.stage2_initial_digest = parameter_digest(m);
    if (hooks.on_start) hooks.on_start(m);
  };
  result.stage2 = train(model, *stage2.train, *stage2.dev, cfg, method, adv, second);
  return result;
}

std::map<std::string, CheckpointSet> train_mtl(Model& model, std::span<const TaskData> tasks,
                                               const TrainingConfig& cfg, const AdversarialConfig* adv,
                                               const TrainHooks& hooks) {
  if (tasks.empty()) throw ConfigError("multi-task training needs at least one task");
  std::vector<TaskRun> runs;
  for (const auto& td : tasks) {
    if (!td.train || !td.dev) throw ConfigError(fmt::format("task '{}' lacks train or dev data", td.task));
    if (td.train->empty()) throw DataError(fmt::format("task '{}': training data is empty", td.task));
    check_examples(*td.train, model, "train", true);
    check_examples(*td.dev, model, "dev", true);
    TaskRun r;
    try {
      r.head = model.task_index(td.task);
    } catch (const std::out_of_range&) {
      throw ConfigError(fmt::format("task '{}' has no head in the model", td.task));
    }
    for (const auto& other : runs) {
      if (other.head == r.head) throw ConfigError(fmt::format("task '{}' listed twice", td.task));
    }
    r.train = td.train;
    r.dev = td.dev;
    r.checkpoints.task = td.task;
    runs.push_back(std::move(r));
  }
  auto sets = run_training(model, runs, cfg, adv, hooks);
  std::map<std::string, CheckpointSet> out;
  for (auto& cs : sets) out.emplace(cs.task, std::move(cs));
  return out;
}

// ---------------------------------------------------------------------------

std::size_t argmax_earliest(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax_earliest: empty input");
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isnan(values[i]) ? -std::numeric_limits<double>::infinity() : values[i];
    if (!found || v > best_v) {
      best = i;
      best_v = v;
      found = true;
    }
  }
  return best;
}

namespace {

double pearson_or_nan(std::span<const double> p, std::span<const double> g) {
  try {
    return pearson(p, g);
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

Selection select_best(const CheckpointSet& cs, const ExampleSet& dev, bool per_domain) {
  if (cs.epochs.empty()) throw DataError("select_best: no checkpoints");
  std::map<Domain, std::vector<std::size_t>> members;
  std::vector<double> gold;
  for (std::size_t i = 0; i < dev.examples.size(); ++i) {
    const auto& ex = dev.examples[i];
    if (!ex.gold) throw DataError(fmt::format("select_best: dev example '{}' is unlabeled", ex.id));
    gold.push_back(*ex.gold);
    members[ex.domain].push_back(i);
  }
  if (gold.size() < 2) throw DataError("select_best: dev split needs at least two labeled instances");

  auto scores_for = [&](const EpochRecord& rec) {
    std::vector<double> s;
    for (const auto& ex : dev.examples) s.push_back(rec.dev_predictions.at(ex.id));
    return s;
  };

  Selection sel;
  sel.by_domain = per_domain;
  std::vector<double> trace;
  std::map<Domain, std::vector<double>> domain_traces;
  for (Domain d : kDomains) {
    if (per_domain && members[d].size() < 2) {
      throw DataError(fmt::format("select_best: domain {} has {} labeled dev instances (need >= 2)", to_string(d),
                                  members[d].size()));
    }
  }
  for (const auto& rec : cs.epochs) {
    const auto s = scores_for(rec);
    trace.push_back(pearson_or_nan(s, gold));
    if (per_domain) {
      for (Domain d : kDomains) {
        std::vector<double> dp, dg;
        for (std::size_t i : members[d]) {
          dp.push_back(s[i]);
          dg.push_back(gold[i]);
        }
        domain_traces[d].push_back(pearson_or_nan(dp, dg));
      }
    }
  }
  sel.overall = argmax_earliest(trace);
  if (per_domain) {
    for (Domain d : kDomains) sel.per_domain[d] = argmax_earliest(domain_traces[d]);
  }
  return sel;
}

std::vector<TrainingConfig> make_grid(const TrainingConfig& base, std::span<const double> learning_rates,
                                      std::span<const int> batch_sizes) {
  std::vector<TrainingConfig> grid;
  for (double lr : learning_rates) {
    for (int b : batch_sizes) {
      TrainingConfig c = base;
      c.learning_rate = lr;
      c.batch_size = b;
      grid.push_back(c);
    }
  }
  return grid;
}

GridResult grid_search(std::span<const TrainingConfig> grid,
                       const std::function<CheckpointSet(const TrainingConfig&)>& train_fn, const ExampleSet& dev) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  GridResult result;
  std::optional<std::size_t> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CheckpointSet cs = train_fn(grid[i]);
    const auto sel = select_best(cs, dev, false);
    std::vector<double> s, g;
    for (const auto& ex : dev.examples) {
      s.push_back(cs.epochs[sel.overall].dev_predictions.at(ex.id));
      g.push_back(*ex.gold);
    }
    const double score = pearson_or_nan(s, g);
    result.run_scores.push_back(score);
    const double ranked = std::isnan(score) ? -std::numeric_limits<double>::infinity() : score;
    if (!best || ranked > best_score) {
      best = i;
      best_score = ranked;
      result.checkpoints = std::move(cs);
    }
  }
  result.best_index = *best;
  result.config = grid[*best];
  return result;
}

}  // namespace lcp
