// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Last-token attention over the word-list span. Each head's row is restricted
// to the span and renormalized, then heads are averaged.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rscope/trace.hpp"

namespace rscope {

inline constexpr double kDefaultRatioThreshold = 1.5;

/// Natural-log entropy of a probability vector (0 log 0 = 0).
double entropy(std::span<const double> p);
/// min(p) / max(p); 1 exactly when p is uniform.
double uniformity(std::span<const double> p);
/// Index of the largest entry, lowest index on ties.
int argmax(std::span<const double> p);

/// One head's last-token row restricted to the span and renormalized, or
/// nullopt when the head puts no mass on the span.
std::optional<std::vector<double>> head_span_distribution(const ActivationTrace& trace, int layer, int head);

/// Mean over heads of the per-head span distributions (heads with zero span
/// mass are skipped). Throws DegenerateError when every head has zero mass.
std::vector<double> span_distribution(const ActivationTrace& trace, int layer);

struct AttnLayerSummary {
  int layer_index = 0;
  double entropy = 0.0;
  double uniformity = 0.0;
  int argmax_list_pos = 0;
  /// Mean over heads of the raw (pre-renormalization) mass on the span.
  double span_mass = 0.0;
  /// Head-mean global argmax falls on the BOS token.
  bool bos_dominant = false;
};

struct AttnSummary {
  std::vector<AttnLayerSummary> layers;
  double mean_entropy = 0.0;
  double mean_uniformity = 0.0;
  int bos_dominant_layers = 0;
};

/// How heads are combined before entropy and uniformity are computed.
enum class HeadAggregation {
  /// Average the per-head span distributions, then compute metrics.
  mean_distribution,
  /// Compute metrics per head, then average (sensitivity check).
  mean_metrics,
};

AttnLayerSummary layer_summary(const ActivationTrace& trace, int layer,
                               HeadAggregation agg = HeadAggregation::mean_distribution);
AttnSummary layer_summaries(const ActivationTrace& trace, HeadAggregation agg = HeadAggregation::mean_distribution);

struct HeadRatio {
  int head = 0;
  /// nullopt when the head puts no mass on the span.
  std::optional<double> ratio;
};

struct LayerHeadRatios {
  int layer_index = 0;
  std::vector<HeadRatio> heads;
};

struct AnomalyAttnSummary {
  int intruder_pos = 0;
  double threshold = kDefaultRatioThreshold;
  /// ratios[i] belongs to layer i+1.
  std::vector<double> ratios;
  std::vector<int> over_attended_layers;
  std::vector<LayerHeadRatios> per_head;
  /// H(p2) - H(p1) per layer; empty without a P1 trace.
  std::vector<double> entropy_delta;
};

/// p[intruder] / mean of p over the other span positions. A uniform vector
/// gives exactly 1; zero mass on the other positions gives +inf.
double intruder_ratio(std::span<const double> p, int intruder_pos);

/// Layers (1-based) whose ratio exceeds `threshold`.
std::vector<int> over_attended(std::span<const double> ratios, double threshold = kDefaultRatioThreshold);

/// Requires `intruder_pos` to be one of p2's intruder positions.
AnomalyAttnSummary anomaly_ratios(const ActivationTrace& p2, const ActivationTrace* p1, int intruder_pos,
                                  std::span<const int> selected_layers,
                                  double threshold = kDefaultRatioThreshold);

/// The `k` layers with the smallest intruder ratio, ascending by ratio.
std::vector<int> most_ignoring_layers(std::span<const double> ratios, int k);

}  // namespace rscope
