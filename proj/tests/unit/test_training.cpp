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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "gradcheck.hpp"
#include "lcp/common.hpp"
#include "lcp/pipeline.hpp"
#include "lcp/training.hpp"
#include "oracles.hpp"

namespace {

using lcp::Domain;

struct Fixture {
  lcp::SyntheticCorpus corpus;
  lcp::Vocabulary vocab;
  lcp::Normalizer norm;
  lcp::ExampleSet train, dev, train_feat, dev_feat;
  lcp::EncoderConfig encoder;
};

Fixture make_fixture(std::size_t size = 60, std::uint64_t seed = 3) {
  Fixture f;
  f.corpus = lcp::make_synthetic(seed, size);
  f.vocab = lcp::build_vocab(f.corpus.train, 1);
  const lcp::Dataset* sets[] = {&f.corpus.train};
  f.norm = lcp::fit_feature_normalizer(sets, f.corpus.frequencies);
  lcp::FeatureContext ctx{&f.vocab, 64, nullptr, std::nullopt};
  f.train = lcp::prepare(f.corpus.train, ctx);
  f.dev = lcp::prepare(f.corpus.trial, ctx);
  ctx.frequencies = &f.corpus.frequencies;
  ctx.normalizer = f.norm;
  f.train_feat = lcp::prepare(f.corpus.train, ctx);
  f.dev_feat = lcp::prepare(f.corpus.trial, ctx);
  f.encoder = lcp::encoder_preset("toy");
  f.encoder.vocab_size = static_cast<int>(f.vocab.size());
  f.encoder.max_len = 64;
  return f;
}

lcp::TrainingConfig quick(int epochs = 2, int batch = 8) {
  lcp::TrainingConfig c;
  c.max_epochs = epochs;
  c.batch_size = batch;
  c.learning_rate = 1e-2;
  return c;
}

// ---------------------------------------------------------------------------

TEST(Validation, ConfigInvariants) {
  lcp::TrainingConfig t;
  EXPECT_NO_THROW(t.validate());
  EXPECT_DOUBLE_EQ(t.learning_rate, 1e-3);
  EXPECT_EQ(t.max_epochs, 10);
  t.max_epochs = 0;
  EXPECT_THROW(t.validate(), lcp::ConfigError);
  t = {};
  t.warmup_fraction = 1.0;
  EXPECT_THROW(t.validate(), lcp::ConfigError);
  t = {};
  t.clip_norm = 0.0;
  EXPECT_THROW(t.validate(), lcp::ConfigError);

  lcp::AdversarialConfig a;
  EXPECT_EQ(a.epsilon, 1e-5);
  EXPECT_EQ(a.step_size, 1e-3);
  EXPECT_EQ(a.init_variance, 1e-5);
  EXPECT_EQ(a.pgd_steps, 1);
  EXPECT_EQ(a.alpha, 1.0);
  a.pgd_steps = 0;
  EXPECT_THROW(a.validate(), lcp::ConfigError);
  a = {};
  a.epsilon = -1;
  EXPECT_THROW(a.validate(), lcp::ConfigError);
}

TEST(Schedule, Examples) {
  EXPECT_EQ(lcp::lr_at(0, 100, 1e-5, 0.1), 0.0);
  EXPECT_EQ(lcp::lr_at(10, 100, 1e-5, 0.1), 1e-5);
  EXPECT_NEAR(lcp::lr_at(55, 100, 1e-5, 0.1), 5e-6, 1e-20);
  EXPECT_EQ(lcp::lr_at(100, 100, 1e-5, 0.1), 0.0);
  EXPECT_THROW(lcp::lr_at(101, 100, 1e-5, 0.1), std::invalid_argument);
  EXPECT_EQ(lcp::warmup_steps(30, 0.1), 3u);
  EXPECT_EQ(lcp::warmup_steps(31, 0.1), 4u);
}

TEST(Schedule, PiecewiseLinearProperty) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 200; ++t) {
    const std::size_t total = 2 + gen() % 2000;
    const double peak = 1e-5 * (1 + gen() % 100);
    const std::size_t w = lcp::warmup_steps(total, 0.1);
    EXPECT_EQ(w, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(total) - 1e-9)));
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t s = 0; s <= total; ++s) {
      const double v = lcp::lr_at(s, total, peak, 0.1);
      if (v > best) {
        best = v;
        arg = s;
      }
      if (s > 0) {
        // neighbouring values move by at most one slope increment
        const double slope = peak / static_cast<double>(std::min(w, total - w));
        EXPECT_LE(std::fabs(v - lcp::lr_at(s - 1, total, peak, 0.1)), slope * (1 + 1e-12));
      }
    }
    EXPECT_EQ(arg, w);
    EXPECT_EQ(best, peak);
  }
}

TEST(Clipping, Examples) {
  const auto m = lcp::init_model(make_fixture(30).encoder, false, 1);
  auto with_norm = [&](double norm) {
    lcp::Gradients g(m);
    g.tensors[0](0, 0) = norm;
    return g;
  };
  auto g = with_norm(0.5);
  EXPECT_EQ(lcp::clip_gradients(g, 1.0), 0.5);
  EXPECT_EQ(g.global_norm(), 0.5);
  g = with_norm(4.0);
  lcp::clip_gradients(g, 1.0);
  EXPECT_DOUBLE_EQ(g.tensors[0](0, 0), 1.0);
  g = with_norm(1.0);
  lcp::clip_gradients(g, 1.0);
  EXPECT_EQ(g.tensors[0](0, 0), 1.0);
  g = with_norm(std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(lcp::clip_gradients(g, 1.0), lcp::NumericError);
}

TEST(Adam, InactiveGroupsAreUntouched) {
  auto m = lcp::init_multitask(make_fixture(30).encoder, false, {"a", "b"}, 2);
  const auto before_b = lcp::parameter_digest(m, "head.b.");
  const auto before_enc = lcp::parameter_digest(m, "encoder.");
  lcp::Gradients g(m);
  for (auto& t : g.tensors) t.setConstant(0.1);
  std::vector<bool> active(m.parameters().size(), true);
  active[m.head(1).weight] = false;
  active[m.head(1).bias] = false;
  lcp::Adam opt(m);
  opt.step(m, g, 1e-3, active);
  EXPECT_EQ(lcp::parameter_digest(m, "head.b."), before_b);
  EXPECT_NE(lcp::parameter_digest(m, "encoder."), before_enc);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto m = lcp::init_model(make_fixture(30).encoder, false, 2);
  const lcp::Matrix w0 = m.parameters()[5].value;
  lcp::Gradients g(m);
  g.tensors[5].setConstant(0.37);
  lcp::Adam opt(m);
  opt.step(m, g, 1e-2);
  // bias-corrected first step: lr * g / (|g| + eps)
  const double expected = 1e-2 * 0.37 / (0.37 + 1e-6);
  EXPECT_NEAR((w0 - m.parameters()[5].value).maxCoeff(), expected, 1e-15);
}

TEST(TaskLoss, ExamplesAndOracle) {
  const auto f = make_fixture(30);
  auto m = lcp::init_model(f.encoder, false, 4);
  auto h = m.head(0);
  m.parameters()[h.weight].value.setZero();
  m.parameters()[h.bias].value.setConstant(0.0);
  std::vector<lcp::Example> batch(f.train.examples.begin(), f.train.examples.begin() + 2);
  batch[0].gold = 1.0;
  batch[1].gold = 0.0;
  m.parameters()[h.bias].value.setConstant(0.0);
  EXPECT_DOUBLE_EQ(lcp::task_loss(m, 0, batch), 0.5);
  batch[0].gold = 0.0;
  EXPECT_EQ(lcp::task_loss(m, 0, batch), 0.0);

  const auto r = lcp::init_model(f.encoder, false, 5);
  std::vector<lcp::Example> rb(f.train.examples.begin(), f.train.examples.begin() + 7);
  long double s = 0;
  for (const auto& ex : rb) {
    const long double e = lcp::forward(r, 0, ex.seq, std::nullopt) - *ex.gold;
    s += e * e;
  }
  EXPECT_NEAR(lcp::task_loss(r, 0, rb), static_cast<double>(s / rb.size()), 1e-12);

  rb[3].gold.reset();
  EXPECT_THROW(lcp::task_loss(r, 0, rb), lcp::DataError);
}

TEST(TaskLoss, PredictionsVersusLabelsArithmetic) {
  // preds [0, 1] against gold [1, 0] -> 1.0, using a zero-weight head whose bias plays the prediction
  const auto f = make_fixture(30);
  auto m = lcp::init_model(f.encoder, false, 4);
  const auto h = m.head(0);
  m.parameters()[h.weight].value.setZero();
  std::vector<lcp::Example> one(f.train.examples.begin(), f.train.examples.begin() + 1);
  one[0].gold = 1.0;
  m.parameters()[h.bias].value.setConstant(0.0);
  const double a = lcp::task_loss(m, 0, one);
  one[0].gold = 0.0;
  m.parameters()[h.bias].value.setConstant(1.0);
  const double b = lcp::task_loss(m, 0, one);
  EXPECT_EQ((a + b) / 2.0, 1.0);
}

TEST(Pgd, StaysInBallAndPaddingStaysZero) {
  const auto f = make_fixture(30);
  const auto m = lcp::init_model(f.encoder, false, 6);
  std::vector<lcp::Example> batch(f.train.examples.begin(), f.train.examples.begin() + 4);
  for (auto& ex : batch) ex.seq.ids.insert(ex.seq.ids.end(), 3, lcp::kPadId);
  lcp::AdversarialConfig adv;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto deltas = lcp::pgd_perturb(m, 0, batch, adv, seed);
    ASSERT_EQ(deltas.size(), batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      EXPECT_LE(deltas[i].cwiseAbs().maxCoeff(), adv.epsilon);
      EXPECT_EQ(deltas[i].bottomRows(3).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(Pgd, ZeroGradientReturnsStartingPoint) {
  lcp::AdversarialConfig adv;
  lcp::Rng a(3), b(3);
  const std::vector<std::uint8_t> mask = {1, 1};
  lcp::PerturbedFunction constant = [](const lcp::Matrix& d, lcp::Matrix* g) {
    if (g) *g = lcp::Matrix::Zero(d.rows(), d.cols());
    return 1.0;
  };
  const auto d = lcp::pgd_perturb(2, 3, mask, constant, adv, a);
  lcp::Matrix start(2, 3);
  const double sd = std::sqrt(adv.init_variance);
  for (Eigen::Index i = 0; i < 6; ++i) start.data()[i] = std::clamp(b.normal() * sd, -adv.epsilon, adv.epsilon);
  EXPECT_TRUE(d == start);
}

TEST(Pgd, DeterministicPerSeed) {
  const auto f = make_fixture(30);
  const auto m = lcp::init_model(f.encoder, false, 6);
  std::vector<lcp::Example> batch(f.train.examples.begin(), f.train.examples.begin() + 3);
  lcp::AdversarialConfig adv;
  const auto a = lcp::pgd_perturb(m, 0, batch, adv, 5), b = lcp::pgd_perturb(m, 0, batch, adv, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
}

TEST(Smart, Reductions) {
  const auto f = make_fixture(30);
  const auto m = lcp::init_model(f.encoder, false, 8);
  std::vector<lcp::Example> batch(f.train.examples.begin(), f.train.examples.begin() + 5);
  lcp::AdversarialConfig adv;
  adv.alpha = 0.0;
  EXPECT_NEAR(lcp::smart_loss(m, 0, batch, adv, 3).total, lcp::task_loss(m, 0, batch), 1e-12);
  std::vector<lcp::Matrix> zeros;
  for (const auto& ex : batch) zeros.push_back(lcp::Matrix::Zero(static_cast<Eigen::Index>(ex.seq.size()), 32));
  EXPECT_EQ(lcp::smart_loss_with_perturbation(m, 0, batch, zeros, 1.0).regularizer, 0.0);
  adv.alpha = 1.0;
  const auto s = lcp::smart_loss(m, 0, batch, adv, 3);
  EXPECT_GE(s.total, lcp::task_loss(m, 0, batch));
  EXPECT_GE(s.regularizer, 0.0);
}

TEST(Train, SnapshotsDeterminismAndProgress) {
  const auto f = make_fixture(90);
  auto run = [&] {
    auto m = lcp::init_model(f.encoder, false, 1);
    return lcp::train(m, f.train, f.dev, quick(3), lcp::Method::standard);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.epochs[e].epoch, static_cast<int>(e + 1));
    EXPECT_EQ(lcp::parameter_digest(*a.epochs[e].snapshot), lcp::parameter_digest(*b.epochs[e].snapshot));
    EXPECT_TRUE(a.epochs[e].dev_predictions == b.epochs[e].dev_predictions);
  }
  EXPECT_LT(a.epochs.back().train_loss, a.epochs.front().train_loss);
}

TEST(Train, MethodAndDataValidation) {
  const auto f = make_fixture(30);
  auto plain = lcp::init_model(f.encoder, false, 1);
  auto feat = lcp::init_model(f.encoder, true, 1);
  EXPECT_THROW(lcp::train(plain, f.train, f.dev, quick(1), lcp::Method::feat), lcp::ConfigError);
  EXPECT_THROW(lcp::train(feat, f.train_feat, f.dev_feat, quick(1), lcp::Method::standard), lcp::ConfigError);
  EXPECT_THROW(lcp::train(plain, f.train, f.dev, quick(1), lcp::Method::adv), lcp::ConfigError);
  EXPECT_THROW(lcp::train(plain, lcp::ExampleSet{}, f.dev, quick(1), lcp::Method::standard), lcp::DataError);
  EXPECT_THROW(lcp::train(feat, f.train, f.dev, quick(1), lcp::Method::feat), lcp::ConfigError);
  lcp::AdversarialConfig adv;
  EXPECT_EQ(lcp::train(feat, f.train_feat, f.dev_feat, quick(1), lcp::Method::adv, &adv).epochs.size(), 1u);
}

TEST(Msft, HandoffDigestMatchesSelectedSnapshot) {
  const auto f = make_fixture(60, 4);
  auto m = lcp::init_model(f.encoder, false, 2);
  const auto r = lcp::train_msft(m, {&f.train, &f.dev}, {&f.train, &f.dev}, quick(2), lcp::Method::standard);
  EXPECT_EQ(r.stage2_initial_digest, r.stage1_best_digest);
  EXPECT_EQ(r.stage1_best_digest, lcp::parameter_digest(*r.stage1.epochs[r.stage1_best].snapshot));
  EXPECT_EQ(r.stage2.epochs.size(), 2u);
  auto bad = quick(0);
  EXPECT_THROW(lcp::train_msft(m, {&f.train, &f.dev}, {&f.train, &f.dev}, bad, lcp::Method::standard),
               lcp::ConfigError);
  const lcp::ExampleSet empty;
  EXPECT_THROW(lcp::train_msft(m, {&empty, &f.dev}, {&f.train, &f.dev}, quick(1), lcp::Method::standard),
               lcp::DataError);
}

TEST(Mtl, SingleTaskReducesToStandardTraining) {
  const auto f = make_fixture(60, 5);
  auto a = lcp::init_model(f.encoder, false, 3);
  auto b = lcp::init_model(f.encoder, false, 3);
  const auto std_run = lcp::train(a, f.train, f.dev, quick(3), lcp::Method::standard);
  const std::vector<lcp::TaskData> tasks = {{std::string(lcp::kDefaultTask), &f.train, &f.dev}};
  const auto mtl_run = lcp::train_mtl(b, tasks, quick(3)).at(std::string(lcp::kDefaultTask));
  ASSERT_EQ(std_run.epochs.size(), mtl_run.epochs.size());
  for (std::size_t e = 0; e < std_run.epochs.size(); ++e) {
    EXPECT_EQ(std::memcmp(&std_run.epochs[e].dev_metrics.pearson, &mtl_run.epochs[e].dev_metrics.pearson,
                          sizeof(double)),
              0);
  }
  EXPECT_THROW(lcp::train_mtl(b, std::span<const lcp::TaskData>{}, quick(1)), lcp::ConfigError);
}

TEST(Mtl, StepsOnOneTaskLeaveTheOtherHeadBitUnchanged) {
  const auto f = make_fixture(60, 6);
  auto m = lcp::init_multitask(f.encoder, false, {"a", "b"}, 4);
  const std::vector<lcp::TaskData> tasks = {{"a", &f.train, &f.dev}, {"b", &f.train, &f.dev}};
  std::string head_a = lcp::parameter_digest(m, "head.a."), head_b = lcp::parameter_digest(m, "head.b.");
  std::size_t checked = 0;
  lcp::TrainHooks hooks;
  hooks.on_step = [&](const lcp::Model& mm, std::size_t, std::size_t task) {
    const auto a = lcp::parameter_digest(mm, "head.a."), b = lcp::parameter_digest(mm, "head.b.");
    if (task == 0) {
      EXPECT_EQ(b, head_b);
    }
    if (task == 1) {
      EXPECT_EQ(a, head_a);
    }
    head_a = a;
    head_b = b;
    ++checked;
  };
  lcp::train_mtl(m, tasks, quick(1), nullptr, hooks);
  EXPECT_GT(checked, 10u);
}

TEST(Selection, ArgmaxExamples) {
  const std::vector<double> a = {0.5, 0.7, 0.6}, b = {0.7, 0.7}, c = {std::nan(""), 0.1};
  EXPECT_EQ(lcp::argmax_earliest(a), 1u);
  EXPECT_EQ(lcp::argmax_earliest(b), 0u);
  EXPECT_EQ(lcp::argmax_earliest(c), 1u);
}

// Two epochs; per domain one epoch predicts in gold order ("good") and the other scrambled.
TEST(Selection, PerDomainArgmax) {
  lcp::ExampleSet dev;
  const double golds[] = {0.1, 0.5, 0.9};
  int id = 0;
  for (Domain d : lcp::kDomains) {
    for (double g : golds) {
      lcp::Example ex;
      ex.id = fmt::format("d{}", id++);
      ex.domain = d;
      ex.gold = g;
      dev.examples.push_back(ex);
    }
  }
  // bible better at epoch 2, biomed at epoch 1, europarl at epoch 2
  auto epoch = [&](bool bible_good, bool biomed_good, bool euro_good) {
    lcp::EpochRecord rec;
    for (const auto& ex : dev.examples) {
      const bool good = ex.domain == Domain::bible ? bible_good : ex.domain == Domain::biomed ? biomed_good : euro_good;
      const double g = *ex.gold;
      rec.dev_predictions.add(ex.id, good ? g : (g == 0.1 ? 0.5 : g == 0.5 ? 0.1 : 0.9));
    }
    return rec;
  };
  lcp::CheckpointSet cs;
  cs.epochs.push_back(epoch(false, true, false));
  cs.epochs.push_back(epoch(true, false, true));
  const auto sel = lcp::select_best(cs, dev, true);
  EXPECT_EQ(sel.per_domain.at(Domain::bible), 1u);
  EXPECT_EQ(sel.per_domain.at(Domain::biomed), 0u);
  EXPECT_EQ(sel.per_domain.at(Domain::europarl), 1u);
  EXPECT_EQ(sel.for_domain(Domain::biomed), 0u);

  lcp::ExampleSet tiny;
  tiny.examples.push_back(dev.examples[0]);
  EXPECT_THROW(lcp::select_best(cs, tiny, false), lcp::DataError);
}

TEST(Grid, OrderSizeAndTieBreak) {
  lcp::TrainingConfig base;
  const auto grid = lcp::make_grid(base, lcp::kTargetLearningRates, lcp::kTargetBatchSizes);
  ASSERT_EQ(grid.size(), 9u);
  EXPECT_EQ(grid[0].learning_rate, 8e-6);
  EXPECT_EQ(grid[0].batch_size, 8);
  EXPECT_EQ(grid[1].batch_size, 16);
  EXPECT_EQ(grid[3].learning_rate, 9e-6);

  const auto f = make_fixture(30);
  int runs = 0;
  // every run produces the same checkpoints: first grid point wins the tie
  auto fn = [&](const lcp::TrainingConfig& c) {
    ++runs;
    auto m = lcp::init_model(f.encoder, false, 1);
    auto q = c;
    q.learning_rate = 1e-2;
    return lcp::train(m, f.train, f.dev, q, lcp::Method::standard);
  };
  const std::vector<lcp::TrainingConfig> two = {grid[4], grid[7]};
  const auto r = lcp::grid_search(two, fn, f.dev);
  EXPECT_EQ(runs, 2);
  EXPECT_EQ(r.best_index, 0u);
  EXPECT_TRUE(r.config == grid[4]);
  const std::vector<lcp::TrainingConfig> one = {grid[2]};
  EXPECT_TRUE(lcp::grid_search(one, fn, f.dev).config == grid[2]);
}

TEST(Gradients, SmartLossWithFixedDeltaMatchesFiniteDifferences) {
  lcp::EncoderConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.hidden = 8;
  cfg.feedforward = 10;
  cfg.vocab_size = 10;
  cfg.max_len = 8;
  auto m = lcp::init_model(cfg, false, 3);
  std::vector<lcp::Example> batch(2);
  batch[0].seq.ids = {2, 4, 5, 3, 6, 3};
  batch[0].gold = 0.2;
  batch[1].seq.ids = {2, 7, 3, 8, 3};
  batch[1].gold = 0.9;
  std::vector<lcp::Matrix> deltas;
  lcp::Rng rng(9);
  for (const auto& ex : batch) {
    lcp::Matrix d(static_cast<Eigen::Index>(ex.seq.size()), 8);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.uniform(-0.05, 0.05);
    deltas.push_back(d);
  }
  // stop-gradient target: reference outputs frozen at the base parameters
  std::vector<double> ref;
  for (const auto& ex : batch) ref.push_back(lcp::forward(m, 0, ex.seq, std::nullopt));
  auto loss = [&](const lcp::Model& mm) {
    double task = 0, reg = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double e = lcp::forward(mm, 0, batch[i].seq, std::nullopt) - *batch[i].gold;
      const double r = lcp::forward(mm, 0, batch[i].seq, std::nullopt, &deltas[i]) - ref[i];
      task += e * e;
      reg += r * r;
    }
    return (task + 0.7 * reg) / 2.0;
  };
  lcp::Gradients g(m);
  lcp::smart_loss_with_perturbation(m, 0, batch, deltas, 0.7, &g);
  for (const auto& e : gradcheck::check(m, loss, g, 1e-5, 1e-7)) EXPECT_LE(e.relative, 1e-4) << e.name;
}

}  // namespace
