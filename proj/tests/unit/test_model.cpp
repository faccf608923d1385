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

#include <random>

#include "gradcheck.hpp"
#include "lcp/common.hpp"
#include "lcp/model.hpp"
#include "oracles.hpp"

namespace {

lcp::EncoderConfig small(int vocab = 20, int max_len = 16) {
  auto cfg = lcp::encoder_preset("toy");
  cfg.vocab_size = vocab;
  cfg.max_len = max_len;
  return cfg;
}

lcp::TokenSequence seq(std::vector<lcp::TokenId> ids) { return lcp::TokenSequence{std::move(ids)}; }

void set_head(lcp::Model& m, std::size_t task, double weight, double bias) {
  const auto h = m.head(task);
  m.parameters()[h.weight].value.setConstant(weight);
  m.parameters()[h.bias].value.setConstant(bias);
}

TEST(Config, PresetsAndValidation) {
  const auto toy = lcp::encoder_preset("toy");
  EXPECT_EQ(toy.layers, 2);
  EXPECT_EQ(toy.heads, 2);
  EXPECT_EQ(toy.hidden, 32);
  EXPECT_EQ(toy.feedforward, 64);
  const auto base = lcp::encoder_preset("bert_base");
  EXPECT_EQ(base.layers, 12);
  EXPECT_EQ(base.heads, 12);
  EXPECT_EQ(base.hidden, 768);
  const auto large = lcp::encoder_preset("roberta_large");
  EXPECT_EQ(large.layers, 24);
  EXPECT_EQ(large.heads, 16);
  EXPECT_EQ(large.hidden, 1024);
  EXPECT_THROW(lcp::encoder_preset("gpt"), lcp::ConfigError);
  auto bad = small();
  bad.heads = 3;
  EXPECT_THROW(lcp::init_model(bad, false, 1), lcp::ConfigError);
}

TEST(Init, DeterministicPerSeed) {
  const auto a = lcp::init_model(small(), false, 7), b = lcp::init_model(small(), false, 7);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(lcp::parameter_digest(a), lcp::parameter_digest(b));
  const auto c = lcp::init_model(small(), false, 8);
  EXPECT_NE(lcp::parameter_digest(a), lcp::parameter_digest(c));
}

TEST(Init, HeadWidthFollowsFeatFlag) {
  const auto plain = lcp::init_model(small(), false, 1);
  const auto feat = lcp::init_model(small(), true, 1);
  EXPECT_EQ(plain.parameters()[plain.head(0).weight].value.cols(), 32);
  EXPECT_EQ(feat.parameters()[feat.head(0).weight].value.cols(), 33);
  EXPECT_EQ(feat.head_width(), 33u);
  EXPECT_THROW(lcp::init_multitask(small(), false, {"a", "a"}, 1), lcp::ConfigError);
}

TEST(Embed, RowsAreTokenPlusPosition) {
  const auto m = lcp::init_model(small(), false, 3);
  const auto& tok = m.parameters()[m.token_embedding()].value;
  const auto& pos = m.parameters()[m.position_embedding()].value;
  const auto pad = lcp::embed(m, seq({0, 0, 0}));
  for (int r = 0; r < 3; ++r) EXPECT_TRUE(pad.row(r).isApprox(tok.row(0) + pos.row(r), 0.0));
  const auto a = lcp::embed(m, seq({2, 5, 7, 3})), b = lcp::embed(m, seq({2, 5, 7, 3}));
  EXPECT_TRUE(a == b);
  const auto c = lcp::embed(m, seq({2, 5, 9, 3}));
  for (int r = 0; r < 4; ++r) EXPECT_EQ(a.row(r) == c.row(r), r != 2);
  EXPECT_THROW(lcp::embed(m, seq({2, 20})), std::out_of_range);
  EXPECT_THROW(lcp::embed(m, seq(std::vector<lcp::TokenId>(17, 4))), std::out_of_range);
}

TEST(EncodeStates, ShapeAndZeroLayerIdentity) {
  const auto m = lcp::init_model(small(), false, 3);
  const auto s = seq({2, 5, 6, 3, 8, 3});
  const auto emb = lcp::embed(m, s);
  const auto h = lcp::encode_states(m, emb, lcp::token_mask(s));
  EXPECT_EQ(h.rows(), 6);
  EXPECT_EQ(h.cols(), 32);
  auto cfg0 = small();
  cfg0.layers = 0;
  const auto m0 = lcp::init_model(cfg0, false, 3);
  const auto e0 = lcp::embed(m0, s);
  EXPECT_TRUE(lcp::encode_states(m0, e0, lcp::token_mask(s)) == e0);
}

TEST(EncodeStates, TrailingPaddingDoesNotMoveRealRows) {
  const auto m = lcp::init_model(small(), false, 5);
  const auto s = seq({2, 5, 6, 3, 8, 3});
  auto padded = s;
  for (int i = 0; i < 5; ++i) padded.ids.push_back(lcp::kPadId);
  const auto h = lcp::encode_states(m, lcp::embed(m, s), lcp::token_mask(s));
  const auto hp = lcp::encode_states(m, lcp::embed(m, padded), lcp::token_mask(padded));
  EXPECT_LE((h - hp.topRows(6)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(lcp::predict(m, s), lcp::predict(m, padded), 1e-6);
}

TEST(Predict, HeadArithmeticAndClamping) {
  auto m = lcp::init_model(small(), false, 2);
  set_head(m, 0, 0.0, 0.3);
  EXPECT_DOUBLE_EQ(lcp::predict(m, seq({2, 4, 3})), 0.3);
  set_head(m, 0, 0.0, 1.7);
  EXPECT_EQ(lcp::predict(m, seq({2, 4, 3})), 1.0);
  EXPECT_THROW(lcp::predict(m, seq({2, 4, 3}), 0.5), std::invalid_argument);
}

TEST(Predict, FeatureContributionIsTheHeadWeight) {
  auto m = lcp::init_model(small(), true, 2);
  const auto s = seq({2, 4, 7, 3});
  EXPECT_THROW(lcp::predict(m, s), std::invalid_argument);
  EXPECT_THROW(lcp::predict(m, s, 1.5), std::invalid_argument);
  const auto h = m.head(0);
  const double w_feat = m.parameters()[h.weight].value(0, 32);
  const double raw0 = lcp::forward(m, 0, s, 0.0);
  const double raw1 = lcp::forward(m, 0, s, 1.0);
  EXPECT_NEAR(raw1 - raw0, w_feat, 1e-12);
  EXPECT_NEAR(lcp::predict(m, s, 1.0) - lcp::predict(m, s, 0.0),
              std::clamp(raw0 + w_feat, 0.0, 1.0) - std::clamp(raw0, 0.0, 1.0), 1e-12);
}

TEST(MultiTask, SharedEncoderAndHeads) {
  auto m = lcp::init_multitask(small(), false, {"a", "b"}, 4);
  const auto ha = m.head(0), hb = m.head(1);
  m.parameters()[hb.weight].value = m.parameters()[ha.weight].value;
  m.parameters()[hb.bias].value = m.parameters()[ha.bias].value;
  std::mt19937_64 gen(1);
  for (int t = 0; t < 20; ++t) {
    lcp::TokenSequence s{{lcp::kStartId}};
    for (int i = 0; i < 5; ++i) s.ids.push_back(static_cast<lcp::TokenId>(4 + gen() % 16));
    s.ids.push_back(lcp::kSepId);
    EXPECT_EQ(lcp::mtl_forward(m, "a", s), lcp::mtl_forward(m, "b", s));
  }
  EXPECT_THROW(lcp::mtl_forward(m, "c", seq({2, 3})), std::out_of_range);

  const auto single = lcp::init_multitask(small(), false, {"main"}, 9);
  const auto plain = lcp::init_model(small(), false, 9);
  EXPECT_EQ(lcp::mtl_forward(single, "main", seq({2, 6, 3})), lcp::predict(plain, seq({2, 6, 3})));
}

TEST(MultiTask, LossThroughOneHeadLeavesOtherHeadGradientZero) {
  const auto m = lcp::init_multitask(small(), false, {"a", "b"}, 4);
  lcp::Gradients g(m);
  lcp::ForwardCache cache;
  lcp::forward(m, 0, seq({2, 5, 6, 3}), std::nullopt, nullptr, &cache);
  lcp::backward(m, cache, 0.7, &g);
  const auto hb = m.head(1);
  EXPECT_EQ(g.tensors[hb.weight].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.tensors[hb.bias].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(g.tensors[m.head(0).weight].cwiseAbs().maxCoeff(), 0.0);
}

TEST(Shapes, RandomConfigsProperty) {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 15; ++t) {
    lcp::EncoderConfig cfg;
    cfg.layers = static_cast<int>(gen() % 3);
    cfg.heads = 1 + static_cast<int>(gen() % 4);
    cfg.hidden = cfg.heads * (1 + static_cast<int>(gen() % 6));
    cfg.feedforward = 1 + static_cast<int>(gen() % 20);
    cfg.vocab_size = 6 + static_cast<int>(gen() % 10);
    cfg.max_len = 4 + static_cast<int>(gen() % 10);
    const bool feat = gen() % 2;
    const auto m = lcp::init_multitask(cfg, feat, {"x", "y"}, gen());
    EXPECT_EQ(m.head_width(), static_cast<std::size_t>(cfg.hidden + (feat ? 1 : 0)));
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(m.parameters()[m.head(k).weight].value.cols(), static_cast<Eigen::Index>(m.head_width()));
    }
    lcp::TokenSequence s{{lcp::kStartId, 4, lcp::kSepId}};
    const auto h = lcp::encode_states(m, lcp::embed(m, s), lcp::token_mask(s));
    EXPECT_EQ(h.rows(), 3);
    EXPECT_EQ(h.cols(), cfg.hidden);
    const double p = lcp::mtl_forward(m, "y", s, feat ? std::optional<double>(0.4) : std::nullopt);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Gradients, FiniteDifferenceOnOneLayerModel) {
  auto cfg = small(12, 8);
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.feedforward = 12;
  auto m = lcp::init_model(cfg, true, 21);
  const auto s = seq({2, 5, 6, 7, 3, 9, 3});
  const double gold = 0.8;
  auto loss = [&](const lcp::Model& mm) {
    const double y = lcp::forward(mm, 0, s, 0.35);
    return (y - gold) * (y - gold);
  };
  lcp::Gradients g(m);
  lcp::ForwardCache cache;
  const double y = lcp::forward(m, 0, s, 0.35, nullptr, &cache);
  lcp::backward(m, cache, 2.0 * (y - gold), &g);
  const auto errors = gradcheck::check(m, loss, g, 1e-5, 1e-7);
  for (const auto& e : errors) EXPECT_LE(e.relative, 1e-4) << e.name;
}

TEST(Backward, EmbeddingGradientMatchesDeltaFiniteDifference) {
  const auto m = lcp::init_model(small(), false, 2);
  const auto s = seq({2, 5, 6, 3});
  lcp::ForwardCache cache;
  lcp::forward(m, 0, s, std::nullopt, nullptr, &cache);
  const auto d = lcp::backward(m, cache, 1.0, nullptr);
  lcp::Matrix delta = lcp::Matrix::Zero(4, 32);
  const double h = 1e-6;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 32; c += 7) {
      delta(r, c) = h;
      const double up = lcp::forward(m, 0, s, std::nullopt, &delta);
      delta(r, c) = -h;
      const double down = lcp::forward(m, 0, s, std::nullopt, &delta);
      delta(r, c) = 0;
      EXPECT_NEAR(d(r, c), (up - down) / (2 * h), 1e-7);
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto m = lcp::init_multitask(small(), true, {"single_word", "mwe"}, 77);
  const auto dir = fixture::scratch("model_ckpt");
  lcp::save_checkpoint(m, dir / "c.json", {"vocab.tsv", "abc"});
  lcp::CheckpointRef ref;
  const auto back = lcp::load_checkpoint(dir / "c.json", &ref);
  EXPECT_TRUE(back == m);
  EXPECT_EQ(lcp::parameter_digest(back), lcp::parameter_digest(m));
  EXPECT_EQ(ref.vocab_path, "vocab.tsv");
  EXPECT_EQ(ref.vocab_sha256, "abc");
  EXPECT_EQ(lcp::serialize_checkpoint(back, ref), lcp::serialize_checkpoint(m, ref));
}

TEST(Checkpoint, CorruptInputIsADataError) {
  EXPECT_THROW(lcp::parse_checkpoint("{not json"), lcp::DataError);
  EXPECT_THROW(lcp::parse_checkpoint("{\"format\":\"other\"}"), lcp::DataError);
  const auto m = lcp::init_model(small(), false, 1);
  std::string text = lcp::serialize_checkpoint(m);
  const auto pos = text.find("\"rows\":20");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 9, "\"rows\":21");
  EXPECT_THROW(lcp::parse_checkpoint(text), lcp::DataError);
  EXPECT_THROW(lcp::load_checkpoint("/nonexistent/ckpt.json"), lcp::DataError);
}

}  // namespace
