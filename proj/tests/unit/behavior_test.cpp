// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/behavior.hpp"

#include <gtest/gtest.h>

#include "published_data.hpp"
#include "rscope/errors.hpp"

namespace rscope {
namespace {

std::vector<SweepPoint> sweep_of(const testdata::Series& s) {
  std::vector<std::pair<int, std::optional<int>>> pts(s.begin(), s.end());
  return make_sweep(pts);
}

std::vector<int> values(const std::vector<AttractorSegment>& segs) {
  std::vector<int> out;
  for (const auto& s : segs) out.push_back(s.value.value_or(-1));
  return out;
}

TEST(Sweep, CorrectMeansOutputEqualsN) {
  const auto s = sweep_of(testdata::nsweep_llama1b());
  ASSERT_EQ(s.size(), 10u);
  EXPECT_FALSE(s[0].correct);
  EXPECT_TRUE(s[3].correct);
}

TEST(Segments, Llama1B) {
  const auto seg = segment_attractors(sweep_of(testdata::nsweep_llama1b()));
  EXPECT_EQ(values(seg.segments), (std::vector<int>{3, 8, 15}));
  EXPECT_EQ(seg.segments[0], (AttractorSegment{3, 5, 6, 2, true}));
  EXPECT_EQ(seg.segments[1], (AttractorSegment{8, 7, 15, 7, false}));
  EXPECT_EQ(seg.segments[2], (AttractorSegment{15, 20, 20, 1, true}));
  EXPECT_EQ(seg.first_failing_n, 5);
}

TEST(Segments, Llama3B) {
  const auto seg = segment_attractors(sweep_of(testdata::nsweep_llama3b()));
  EXPECT_EQ(seg.first_failing_n, 9);
  const auto att = seg.attractors();
  ASSERT_FALSE(att.empty());
  EXPECT_EQ(att.back().value, 14);
  EXPECT_EQ(att.back().n_first, 10);
  EXPECT_EQ(att.back().n_last, 20);
}

TEST(Segments, Qwen7BHasNoAttractorThroughTwelve) {
  const auto seg = segment_attractors(sweep_of(testdata::nsweep_qwen7b()));
  for (const auto& a : seg.attractors()) EXPECT_GT(a.n_first, 12);
  EXPECT_EQ(seg.first_failing_n, 15);
}

TEST(Segments, PartitionProperty) {
  for (const auto* s : {&testdata::nsweep_llama1b(), &testdata::nsweep_llama3b(), &testdata::nsweep_qwen15b(),
                        &testdata::nsweep_qwen3b(), &testdata::nsweep_qwen7b()}) {
    const auto sweep = sweep_of(*s);
    const auto seg = segment_attractors(sweep);
    std::size_t i = 0;
    for (const auto& segment : seg.segments) {
      ASSERT_LT(i, sweep.size());
      EXPECT_EQ(segment.n_first, sweep[i].n);
      for (int k = 0; k < segment.points; ++k, ++i) EXPECT_EQ(sweep[i].output, segment.value);
      EXPECT_EQ(segment.n_last, sweep[i - 1].n);
    }
    EXPECT_EQ(i, sweep.size());
  }
}

TEST(Segments, UnparseableRunsAndOrdering) {
  std::vector<std::pair<int, std::optional<int>>> pts = {{3, 3}, {4, std::nullopt}, {5, std::nullopt}, {6, 6}};
  const auto seg = segment_attractors(make_sweep(pts));
  ASSERT_EQ(seg.segments.size(), 3u);
  EXPECT_FALSE(seg.segments[1].value);
  EXPECT_TRUE(seg.segments[1].all_wrong);
  EXPECT_EQ(seg.first_failing_n, 4);
  std::vector<std::pair<int, std::optional<int>>> bad = {{5, 5}, {5, 5}};
  EXPECT_THROW(segment_attractors(make_sweep(bad)), UsageError);
}

TEST(Segments, JsonIdempotent) {
  for (const auto* s : {&testdata::nsweep_llama1b(), &testdata::nsweep_qwen3b()}) {
    const auto seg = segment_attractors(sweep_of(*s));
    const auto j = to_json(seg);
    EXPECT_EQ(segmentation_from_json(j), seg);
    EXPECT_EQ(to_json(segmentation_from_json(j)), j);
  }
  EXPECT_THROW(segmentation_from_json(nlohmann::json{{"segments", 3}}), ConfigError);
}

TEST(Accuracy, PublishedModelTypes) {
  const std::map<std::string, ModelType> want = {{"Llama-1B", ModelType::C},
                                                 {"Llama-3B", ModelType::C},
                                                 {"Qwen-1.5B", ModelType::C},
                                                 {"Qwen-3B", ModelType::A},
                                                 {"Qwen-7B", ModelType::A}};
  for (const auto& [model, type] : want) {
    std::vector<BehaviorRecord> records;
    for (const auto& c : testdata::accuracy_cells()) {
      if (c.model != model) continue;
      for (int seed = 0; seed < 10; ++seed) {
        records.push_back({condition_from_string(c.condition), delimiter_from_string(c.delimiter),
                           c.attractor.value_or(c.expected), c.expected});
      }
    }
    const auto table = accuracy_table(records);
    EXPECT_EQ(table.type, type) << model;
    EXPECT_TRUE(table.warnings.empty());
    for (const auto& c : testdata::accuracy_cells()) {
      if (c.model != model) continue;
      const auto* cell = table.find(condition_from_string(c.condition), delimiter_from_string(c.delimiter));
      ASSERT_NE(cell, nullptr);
      EXPECT_EQ(cell->runs, 10);
      EXPECT_EQ(cell->accuracy_pct, c.attractor ? 0.0 : 100.0) << model << " " << c.condition;
      EXPECT_EQ(cell->attractor, c.attractor) << model << " " << c.condition;
    }
  }
}

TEST(Accuracy, IntegrityWarningOnDisagreement) {
  std::vector<BehaviorRecord> records = {{Condition::P1, Delimiter::space, 10, 10},
                                         {Condition::P1, Delimiter::space, 8, 10}};
  const auto table = accuracy_table(records);
  ASSERT_EQ(table.cells.size(), 1u);
  EXPECT_TRUE(table.cells[0].integrity_warning);
  EXPECT_EQ(table.cells[0].accuracy_pct, 50.0);
  EXPECT_FALSE(table.cells[0].attractor);
  EXPECT_EQ(table.warnings.size(), 1u);
}

TEST(Accuracy, CellOrderAndTypes) {
  std::vector<BehaviorRecord> records = {{Condition::P3, Delimiter::comma, 9, 10},
                                         {Condition::P1, Delimiter::space, 10, 10},
                                         {Condition::P2, Delimiter::space, 9, 9}};
  const auto table = accuracy_table(records);
  ASSERT_EQ(table.cells.size(), 3u);
  EXPECT_EQ(table.cells[0].condition, Condition::P1);
  EXPECT_EQ(table.cells[2].condition, Condition::P3);
  EXPECT_EQ(table.type, ModelType::other);
  records.pop_back();
  records.erase(records.begin());
  EXPECT_EQ(accuracy_table(records).type, ModelType::solved);
  std::vector<BehaviorRecord> none = {{Condition::P1, Delimiter::space, std::nullopt, 10}};
  EXPECT_TRUE(accuracy_table(none).cells[0].unparseable);
}

TEST(Anomaly, PublishedDetectionSweeps) {
  auto check = [](const testdata::AnomalySweep& s, std::vector<int> positions, int min_k) {
    const auto summary = anomaly_summary(s.positions, s.counts);
    EXPECT_EQ(summary.detected_positions, positions);
    EXPECT_EQ(summary.min_bananas, min_k);
    EXPECT_TRUE(summary.recency);
  };
  check(testdata::anomaly_qwen3b(), {7, 9}, 5);
  check(testdata::anomaly_qwen7b(), {6, 7, 9}, 2);
}

TEST(Anomaly, Validation) {
  std::vector<std::pair<int, std::optional<int>>> pos = {{10, 9}};
  EXPECT_THROW(anomaly_summary(pos, {}), UsageError);
  std::vector<std::pair<int, std::optional<int>>> counts = {{6, 4}};
  EXPECT_THROW(anomaly_summary({}, counts), UsageError);
  std::vector<std::pair<int, std::optional<int>>> early = {{1, 9}, {7, 9}};
  const auto s = anomaly_summary(early, {});
  EXPECT_FALSE(s.recency);
  EXPECT_FALSE(s.min_bananas);
}

}  // namespace
}  // namespace rscope
