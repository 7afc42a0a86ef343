// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/lens.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rscope/errors.hpp"
#include "rscope/fixture.hpp"
#include "test_util.hpp"

namespace rscope {
namespace {

// Vocabulary of 6 tokens in 3 dimensions; tokens 2, 3, 4 spell digits 1, 2, 3.
struct Toy {
  UnembedBlock unembed;
  DigitVocab digits;

  Toy() {
    unembed.unembed = {1, 0, 0,    // 0: text
                       0, 0, 0.5,  // 1: text
                       0, 1, 0,    // 2: digit 1
                       0, 0, 1,    // 3: digit 2
                       0, 1, 1,    // 4: digit 3
                       -1, 0, 0};  // 5: text
    unembed.final_norm_weight = {1, 1, 1};
    digits.entries[1] = DigitEntry{{2}, true};
    digits.entries[2] = DigitEntry{{3}, true};
    digits.entries[3] = DigitEntry{{4}, true};
  }
  LensInputs inputs(NormKind kind = NormKind::rms) const { return {unembed, digits, kind, 1e-5, 3, 6}; }
};

TEST(Project, RmsScoresMatchHandComputation) {
  Toy toy;
  const std::vector<float> x = {2.0f, 0.5f, 0.25f};
  const double rms = std::sqrt((4.0 + 0.25 + 0.0625) / 3.0 + 1e-5);
  const auto p = project(x, toy.inputs());
  EXPECT_EQ(p.top1_token, 0);
  EXPECT_FALSE(p.is_numeric_top1);
  ASSERT_EQ(p.top5.size(), 3u);
  EXPECT_EQ(p.top_digit, 3);
  EXPECT_NEAR(p.top5[0].score, 0.75 / rms, 1e-12);
  EXPECT_EQ(p.top5[1].digit, 1);
  EXPECT_NEAR(p.top5[1].score, 0.5 / rms, 1e-12);
  EXPECT_NEAR(p.top5[2].score, 0.25 / rms, 1e-12);
}

TEST(Project, StandardNormSubtractsMeanAndAddsBias) {
  Toy toy;
  toy.unembed.final_norm_bias = std::vector<float>{0.0f, 0.0f, 0.0f};
  const std::vector<float> x = {1.0f, 2.0f, 6.0f};
  const double mean = 3.0;
  const double var = (4.0 + 1.0 + 9.0) / 3.0;
  const double sd = std::sqrt(var + 1e-5);
  const auto p = project(x, toy.inputs(NormKind::standard));
  EXPECT_EQ(p.top_digit, 2);
  EXPECT_NEAR(p.top5[0].score, (6.0 - mean) / sd, 1e-12);
}

TEST(Project, ScaleInvariantRanking) {
  auto cfg = testutil::small_config();
  cfg.count_noise_sigma = 0.3;
  const auto t = generate(cfg, 7);
  const auto lens = LensInputs::of(t);
  for (int layer = 1; layer <= cfg.n_layers; ++layer) {
    const auto state = t.states.post_layer(layer);
    const auto base = project(state, lens);
    for (float c : {0.01f, 3.0f, 250.0f}) {
      std::vector<float> scaled(state.begin(), state.end());
      for (float& v : scaled) v *= c;
      const auto p = project(scaled, lens);
      EXPECT_EQ(p.top_digit, base.top_digit);
      EXPECT_EQ(p.top1_token, base.top1_token);
      ASSERT_EQ(p.top5.size(), base.top5.size());
      for (std::size_t i = 0; i < p.top5.size(); ++i) {
        if (base.top5[i].score > 1e-4) EXPECT_EQ(p.top5[i].digit, base.top5[i].digit);
      }
    }
  }
}

TEST(Project, DigitRestrictionPreservesRelativeOrder) {
  auto cfg = testutil::small_config();
  cfg.count_noise_sigma = 0.5;
  const auto t = generate(cfg, 9);
  const auto lens = LensInputs::of(t);
  const auto p = project(t.states.post_layer(4), lens);
  const auto state = t.states.post_layer(4);
  double ss = 0.0;
  for (float v : state) ss += static_cast<double>(v) * v;
  const double rms = std::sqrt(ss / cfg.d_model + 1e-5);
  for (std::size_t i = 0; i + 1 < p.top5.size(); ++i) {
    auto full = [&](int digit) {
      const auto row = t.unembed.row(fixture_digit_token(cfg, digit), cfg.d_model);
      double s = 0.0;
      for (int k = 0; k < cfg.d_model; ++k) s += state[static_cast<std::size_t>(k)] / rms * row[static_cast<std::size_t>(k)];
      return s;
    };
    EXPECT_GE(full(p.top5[i].digit), full(p.top5[i + 1].digit));
    EXPECT_NEAR(full(p.top5[i].digit), p.top5[i].score, 1e-5);
  }
}

TEST(Project, TiesGoToLowerDigit) {
  Toy toy;
  const std::vector<float> x = {0.0f, 1.0f, 1.0f};
  const auto p = project(x, toy.inputs());
  EXPECT_EQ(p.top_digit, 3);
  EXPECT_EQ(p.top5[1].digit, 1);
  EXPECT_EQ(p.top5[2].digit, 2);
}

TEST(Project, BestSpellingScoresTheDigit) {
  Toy toy;
  toy.digits.entries[1].token_ids = {2, 5};
  const std::vector<float> x = {-3.0f, 0.1f, 0.0f};
  const auto p = project(x, toy.inputs());
  EXPECT_EQ(p.top_digit, 1);
  EXPECT_EQ(p.top1_token, 5);
  EXPECT_TRUE(p.is_numeric_top1);
}

TEST(Project, Errors) {
  Toy toy;
  DigitVocab empty;
  const LensInputs no_digits{toy.unembed, empty, NormKind::rms, 1e-5, 3, 6};
  const std::vector<float> x = {1.0f, 0.0f, 0.0f};
  EXPECT_THROW(project(x, no_digits), ConfigError);
  EXPECT_THROW(project(std::vector<float>{1.0f}, toy.inputs()), UsageError);
  EXPECT_THROW(project(std::vector<float>{NAN, 0.0f, 0.0f}, toy.inputs()), DataError);
}

TEST(Depth, PublishedArithmetic) {
  EXPECT_DOUBLE_EQ(depth_pct(14, 16), 87.5);
  EXPECT_NEAR(depth_pct(22, 28), 78.571, 5e-4);
  EXPECT_NEAR(depth_pct(26, 28), 92.857, 5e-4);
  EXPECT_DOUBLE_EQ(depth_pct(14, 28), 50.0);
}

TEST(Trajectory, WriterLocksIn) {
  for (int writer : {3, 5, 8}) {
    auto cfg = testutil::small_config();
    cfg.writer = FixtureWriter{writer, 8, 2.0, std::nullopt, 1.0};
    const auto traj = trajectory(generate(cfg, 10));
    EXPECT_EQ(traj.numeric_from_layer, 1);
    EXPECT_EQ(traj.final_answer_digit, 8);
    EXPECT_EQ(traj.target_source, LockinTarget::behavioral);
    EXPECT_EQ(traj.lockin_layer, writer);
    EXPECT_DOUBLE_EQ(*traj.lockin_depth_pct, 100.0 * writer / 8);
  }
}

TEST(Trajectory, NumericFromFollowsTextBias) {
  auto cfg = testutil::small_config();
  cfg.numeric_from_layer = 4;
  const auto traj = trajectory(generate(cfg, 6));
  EXPECT_EQ(traj.numeric_from_layer, 4);
  EXPECT_EQ(traj.lockin_layer, 4);
  EXPECT_EQ(*traj.numeric_from_depth_pct(), 50.0);
}

TEST(Trajectory, InferredTargetWithoutBehavior) {
  auto t = generate(testutil::small_config(), 6);
  t.behavior.reset();
  const auto traj = trajectory(t);
  EXPECT_EQ(traj.target_source, LockinTarget::inferred);
  EXPECT_EQ(traj.final_answer_digit, 6);
}

TEST(Trajectory, UnrepresentableAnswer) {
  auto cfg = testutil::small_config();
  cfg.digit_values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 14, 15};
  const auto t = generate(cfg, 13);
  EXPECT_EQ(t.behavior->parsed_integer, 13);
  const auto traj = trajectory(t);
  EXPECT_TRUE(traj.answer_unrepresentable);
  EXPECT_FALSE(traj.lockin_layer);
  EXPECT_FALSE(correct_in_top5(traj, 13, t.digits).representable);
}

TEST(Trajectory, CorrectAnswerOutrankedAfterWriter) {
  auto cfg = testutil::small_config();
  cfg.writer = FixtureWriter{5, 8, 2.0, std::nullopt, 1.0};
  const auto t = generate(cfg, 10);
  const auto check = correct_in_top5(trajectory(t), 10, t.digits);
  ASSERT_EQ(check.outranked.size(), 8u);
  for (int layer = 1; layer <= 8; ++layer) {
    EXPECT_EQ(check.outranked[static_cast<std::size_t>(layer - 1)], layer >= 5) << layer;
  }
}

TEST(Trajectory, HandCheckedSmallModel) {
  FixtureConfig cfg;
  cfg.n_layers = 3;
  cfg.d_model = 8;
  cfg.n_heads = 1;
  cfg.vocab_size = 24;
  cfg.digit_token_base = 19;
  cfg.digit_values = {1, 2, 3, 4};
  cfg.count_noise_sigma = 0.0;
  const auto t = generate(cfg, 3);
  // Layer 1 output: background + 3 * v_count + 0.5 * u_3, all orthonormal.
  const double rms = std::sqrt((1.0 + 9.0 + 0.25) / 8.0 + 1e-5);
  const auto p = project(t.states.post_layer(1), LensInputs::of(t));
  EXPECT_EQ(p.top_digit, 3);
  EXPECT_NEAR(p.top5[0].score, 0.5 / rms, 1e-6);
  EXPECT_NEAR(p.top5[1].score, 0.0, 1e-6);
  // Embedding: text component 3 dominates.
  const auto e = project(t.states.post_layer(0), LensInputs::of(t));
  EXPECT_EQ(e.top1_token, 1);
  EXPECT_FALSE(e.is_numeric_top1);
}

}  // namespace
}  // namespace rscope
