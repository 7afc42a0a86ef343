// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Behavioral analytics over greedy outputs: accuracy cells, attractor runs in
// n-sweeps, and intruder-detection sweeps.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rscope/prompts.hpp"

namespace rscope {

struct BehaviorRecord {
  Condition condition = Condition::P1;
  Delimiter delimiter = Delimiter::space;
  std::optional<int> output;
  int expected = 0;
};

struct AccuracyCell {
  Condition condition = Condition::P1;
  Delimiter delimiter = Delimiter::space;
  int runs = 0;
  double accuracy_pct = 0.0;
  /// The deterministic wrong answer of a 0% cell.
  std::optional<int> attractor;
  /// Runs disagreed, which greedy decoding should never produce.
  bool integrity_warning = false;
  bool unparseable = false;
};

enum class ModelType { C, A, solved, other };

std::string_view to_string(ModelType t) noexcept;

struct AccuracyTable {
  /// Ordered P1 SP, P1 CS, P2 SP, P2 CS, P3 SP, P3 CS (present cells only).
  std::vector<AccuracyCell> cells;
  ModelType type = ModelType::solved;
  std::vector<std::string> warnings;

  const AccuracyCell* find(Condition c, Delimiter d) const;
};

/// Groups records by (condition, delimiter); several records per cell are
/// seeds. Type C fails some P1 cell; type A passes every P1 cell but fails
/// some P2 cell.
AccuracyTable accuracy_table(std::span<const BehaviorRecord> records);

struct SweepPoint {
  int n = 0;
  std::optional<int> output;
  bool correct = false;
};

/// Points for a repeated-token n-sweep, where the expected answer is n.
std::vector<SweepPoint> make_sweep(std::span<const std::pair<int, std::optional<int>>> outputs);

struct AttractorSegment {
  /// nullopt for a run of unparseable outputs.
  std::optional<int> value;
  int n_first = 0;
  int n_last = 0;
  int points = 0;
  bool all_wrong = false;

  bool operator==(const AttractorSegment&) const = default;
};

struct Segmentation {
  /// Maximal constant-output runs; together they partition the sweep.
  std::vector<AttractorSegment> segments;
  std::optional<int> first_failing_n;

  /// Segments that are wrong at every sampled point.
  std::vector<AttractorSegment> attractors() const;
  bool operator==(const Segmentation&) const = default;
};

/// Requires strictly increasing n. Ranges cover sampled points only.
Segmentation segment_attractors(std::span<const SweepPoint> sweep);

nlohmann::json to_json(const Segmentation& s);
Segmentation segmentation_from_json(const nlohmann::json& j);

struct AnomalySummary {
  std::vector<int> detected_positions;
  std::optional<int> min_bananas;
  /// Every detected position lies in the back half of a ten-token list.
  bool recency = false;
};

/// A position is detected when its single-intruder output differs from
/// `expected_base`; min_bananas is the smallest intruder count that does so.
AnomalySummary anomaly_summary(std::span<const std::pair<int, std::optional<int>>> position_sweep,
                               std::span<const std::pair<int, std::optional<int>>> count_sweep,
                               int expected_base = 10);

}  // namespace rscope
