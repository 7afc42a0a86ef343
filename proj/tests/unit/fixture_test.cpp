// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/fixture.hpp"

#include <fstream>

#include <gtest/gtest.h>

#include "rscope/attn.hpp"
#include "rscope/container.hpp"
#include "rscope/errors.hpp"
#include "rscope/lens.hpp"
#include "test_util.hpp"

namespace rscope {
namespace {

int output_of(const ActivationTrace& t) { return *t.behavior->parsed_integer; }

TEST(Generate, Deterministic) {
  auto cfg = testutil::writer_config(28, 14);
  const auto a = generate(cfg, 10);
  const auto b = generate(cfg, 10);
  EXPECT_EQ(a, b);
  EXPECT_EQ(encode_trace(a), encode_trace(b));
  EXPECT_NE(encode_trace(a), encode_trace(generate(cfg, 11)));
}

TEST(Generate, SeedsChangeGeometry) {
  auto cfg = testutil::small_config();
  const auto a = generate(cfg, 6);
  cfg.count_direction_seed = 99;
  EXPECT_NE(generate(cfg, 6).states.layers[3].post_layer, a.states.layers[3].post_layer);
}

TEST(Generate, EveryTraceValidates) {
  auto cfg = testutil::small_config();
  cfg.intruder_positions = {1, 4};
  cfg.writer = FixtureWriter{4, 8, 2.0, 12, 1.0};
  cfg.attention.profile = AttentionProfile::mixture;
  cfg.attention.bos_mass = 0.4;
  cfg.attention.prompt_mass = 0.1;
  for (auto cond : {ProbeCondition::repeated, ProbeCondition::unique}) {
    for (int n = 1; n <= 19; ++n) {
      const auto t = generate(cfg, n, cond);
      EXPECT_NO_THROW(validate(t)) << n;
      EXPECT_LE(max_continuity_gap(t.states), 1e-4);
      EXPECT_EQ(t.tokens.list_span.size(), n);
      EXPECT_EQ(t.tokens.seq_len(), 1 + cfg.prefix_len + n + cfg.suffix_len);
    }
  }
}

TEST(Generate, TokensAndLabels) {
  auto cfg = testutil::small_config();
  cfg.intruder_positions = {2};
  const auto t = generate(cfg, 5);
  EXPECT_EQ(t.prompt_label, "fixture.repeated.n05");
  EXPECT_EQ(t.tokens.token_texts[0], "<bos>");
  EXPECT_EQ(t.tokens.token_texts[static_cast<std::size_t>(t.tokens.list_span.start + 2)], "banana");
  EXPECT_EQ(t.tokens.intruder_positions, std::vector<int>{2});
  const auto u = generate(cfg, 12, ProbeCondition::unique);
  EXPECT_EQ(u.prompt_label, "fixture.unique.n12");
  EXPECT_TRUE(u.tokens.intruder_positions.empty());
  EXPECT_EQ(u.tokens.token_texts[static_cast<std::size_t>(u.tokens.list_span.start)], "cat");
  EXPECT_EQ(t.digits.entries.at(7).token_ids, std::vector<std::int64_t>{fixture_digit_token(cfg, 7)});
}

TEST(Generate, BehaviorFollowsPlantedWriter) {
  auto cfg = testutil::small_config();
  EXPECT_EQ(output_of(generate(cfg, 7)), 7);
  cfg.writer = FixtureWriter{5, 8, 2.0, std::nullopt, 1.0};
  EXPECT_EQ(output_of(generate(cfg, 7)), 8);
  EXPECT_EQ(output_of(generate(cfg, 13)), 8);
}

TEST(Ablation, WriterAblationRestoresCount) {
  auto cfg = testutil::small_config();
  cfg.writer = FixtureWriter{5, 8, 2.0, std::nullopt, 1.0};
  const auto t = apply_ablation(cfg, {5, Sublayer::mlp, "zero"}, 10);
  EXPECT_EQ(output_of(t), 10);
  EXPECT_EQ(t.prompt_label, "fixture.repeated.n10.ablate-5-mlp");
  EXPECT_NO_THROW(validate(t));
}

TEST(Ablation, SecondaryWriterTakesOver) {
  auto cfg = testutil::small_config();
  cfg.writer = FixtureWriter{4, 8, 2.0, std::nullopt, 1.0};
  cfg.secondary = FixtureSecondary{6, 16, 2.0};
  EXPECT_EQ(output_of(generate(cfg, 10)), 8);
  EXPECT_EQ(output_of(apply_ablation(cfg, {4, Sublayer::mlp, "zero"}, 10)), 16);
}

TEST(Ablation, NonWriterSublayersLeaveOutputUnchanged) {
  auto cfg = testutil::small_config();
  cfg.writer = FixtureWriter{5, 8, 2.0, std::nullopt, 1.0};
  for (int layer : {2, 3, 6, 8}) {
    EXPECT_EQ(output_of(apply_ablation(cfg, {layer, Sublayer::mlp, "zero"}, 10)), 8) << layer;
    EXPECT_EQ(output_of(apply_ablation(cfg, {layer, Sublayer::attn, "zero"}, 10)), 8) << layer;
  }
}

TEST(Ablation, StatesMatchIntactBeforeTheAblatedLayer) {
  auto cfg = testutil::small_config();
  cfg.writer = FixtureWriter{5, 8, 2.0, std::nullopt, 1.0};
  const auto intact = generate(cfg, 10);
  const auto ablated = apply_ablation(cfg, {5, Sublayer::mlp, "zero"}, 10);
  for (int layer = 1; layer < 5; ++layer) EXPECT_EQ(ablated.states.layer(layer), intact.states.layer(layer));
  EXPECT_EQ(ablated.states.layer(5).post_attn, intact.states.layer(5).post_attn);
  EXPECT_NE(ablated.states.layer(5).post_layer, intact.states.layer(5).post_layer);
}

TEST(Ablation, RejectsOutOfRange) {
  const auto cfg = testutil::small_config();
  EXPECT_THROW(apply_ablation(cfg, {9, Sublayer::mlp, "zero"}, 5), ValidationError);
  EXPECT_THROW(apply_ablation(cfg, {2, Sublayer::mlp, "mean"}, 5), ValidationError);
}

TEST(Config, ValidationFailures) {
  auto expect_bad = [](auto mutate) {
    auto c = testutil::small_config();
    mutate(c);
    EXPECT_THROW(validate(c), ConfigError);
  };
  expect_bad([](FixtureConfig& c) { c.n_layers = 0; });
  expect_bad([](FixtureConfig& c) { c.d_model = 10; });
  expect_bad([](FixtureConfig& c) { c.digit_values = {}; });
  expect_bad([](FixtureConfig& c) { c.digit_values = {3, 3}; });
  expect_bad([](FixtureConfig& c) { c.digit_values = {20}; });
  expect_bad([](FixtureConfig& c) { c.vocab_size = 50; });
  expect_bad([](FixtureConfig& c) { c.digit_token_base = 10; });
  expect_bad([](FixtureConfig& c) { c.count_noise_sigma = -1.0; });
  expect_bad([](FixtureConfig& c) { c.condition_noise["other"] = 0.1; });
  expect_bad([](FixtureConfig& c) { c.numeric_from_layer = 9; });
  expect_bad([](FixtureConfig& c) { c.writer = FixtureWriter{9, 8}; });
  expect_bad([](FixtureConfig& c) { c.writer = FixtureWriter{3, 25}; });
  expect_bad([](FixtureConfig& c) { c.writer = FixtureWriter{3, 8, 0.0}; });
  expect_bad([](FixtureConfig& c) { c.secondary = FixtureSecondary{5, 16}; });
  expect_bad([](FixtureConfig& c) {
    c.writer = FixtureWriter{5, 8};
    c.secondary = FixtureSecondary{4, 16};
  });
  expect_bad([](FixtureConfig& c) { c.attention.bos_mass = 0.7, c.attention.prompt_mass = 0.3; });
  expect_bad([](FixtureConfig& c) { c.attention.profile = AttentionProfile::custom; });
  expect_bad([](FixtureConfig& c) { c.intruder_positions = {-1}; });
  EXPECT_NO_THROW(validate(testutil::small_config()));
}

TEST(Config, PerTraceFailures) {
  auto c = testutil::small_config();
  EXPECT_THROW(generate(c, 0), ConfigError);
  c.attention.profile = AttentionProfile::one_hot;
  c.attention.position = 6;
  EXPECT_THROW(generate(c, 5), ConfigError);
  c.attention.profile = AttentionProfile::custom;
  c.attention.weights = {{1.0, 2.0}};
  EXPECT_THROW(generate(c, 5), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = testutil::small_config();
  c.model_id = "rt";
  c.writer = FixtureWriter{3, 8, 1.5, 12, 0.75};
  c.secondary = FixtureSecondary{6, 16, 2.5};
  c.attention = FixtureAttention{AttentionProfile::custom, 0, 0.2, 0.1, {{1, 2, 3}}};
  c.condition_noise = {{"unique", 0.5}};
  c.intruder_positions = {1};
  EXPECT_EQ(fixture_config_from_json(to_json(c)), c);
  EXPECT_EQ(fixture_config_from_json(to_json(testutil::small_config())), testutil::small_config());
}

TEST(Config, PartialJsonUsesDefaults) {
  const auto c = fixture_config_from_json(nlohmann::json{{"n_layers", 16}, {"writer", {{"layer", 14}, {"wrong_digit", 8}}}});
  EXPECT_EQ(c.n_layers, 16);
  EXPECT_EQ(c.d_model, 64);
  ASSERT_TRUE(c.writer);
  EXPECT_EQ(c.writer->margin, 2.0);
  EXPECT_THROW(fixture_config_from_json(nlohmann::json{{"n_layers", "many"}}), ConfigError);
  EXPECT_THROW(fixture_config_from_json(nlohmann::json{{"writer", {{"layer", 3}}}}), ConfigError);
  EXPECT_THROW(fixture_config_from_json(nlohmann::json{{"attention", {{"profile", "zigzag"}}}}), ConfigError);
}

TEST(Config, LoadFromFile) {
  testutil::TempDir dir("fixcfg");
  std::ofstream(dir / "ok.json") << R"({"n_layers": 12, "writer": {"layer": 9, "wrong_digit": 14}})";
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(load_fixture_config(dir / "ok.json").writer->wrong_digit, 14);
  EXPECT_THROW(load_fixture_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_fixture_config(dir / "missing.json"), IoError);
}

TEST(Bundle, WritesReadableTraces) {
  testutil::TempDir dir("bundle");
  auto cfg = testutil::small_config();
  BundleOptions opts;
  opts.n_min = 3;
  opts.n_max = 6;
  opts.focus_n = 5;
  const auto path = write_bundle(cfg, dir.path(), opts);
  EXPECT_EQ(path, dir / "bundle.json");
  EXPECT_EQ(list_trace_files(dir / "probe/repeated").size(), 4u);
  EXPECT_EQ(list_trace_files(dir / "probe/unique").size(), 4u);
  EXPECT_EQ(read_trace(dir / "lens/focus.rscope"), generate(cfg, 5));
  EXPECT_THROW(write_bundle(cfg, dir.path(), BundleOptions{5, 4, 4, true}), ConfigError);
}

TEST(Recovery, AttentionClosedForms) {
  auto cfg = testutil::small_config();
  cfg.attention.profile = AttentionProfile::one_hot;
  cfg.attention.position = 3;
  const auto s = layer_summaries(generate(cfg, 8));
  EXPECT_NEAR(s.mean_entropy, 0.0, 1e-12);
  cfg.attention.profile = AttentionProfile::uniform;
  EXPECT_NEAR(layer_summaries(generate(cfg, 8)).mean_entropy, std::log(8.0), 1e-6);
}

}  // namespace
}  // namespace rscope
