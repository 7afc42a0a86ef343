// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-layer linear probes: ridge regression from the last-token post-layer
// state to the list length n, scored by leave-one-out cross-validation.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rscope/trace.hpp"

namespace rscope {

enum class ProbeCondition { repeated, unique };

std::string_view to_string(ProbeCondition c) noexcept;

inline constexpr double kDefaultRidgeLambda = 1.0;

/// Dense row-major sample-by-feature matrix.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const {
    return std::span<const double>(data).subspan(static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols));
  }
};

struct ProbeDataset {
  ProbeCondition condition = ProbeCondition::repeated;
  std::vector<std::string> labels;
  std::vector<double> targets;
  /// `layers[0]` holds embedding outputs, `layers[i]` post-layer states of layer i.
  std::vector<FeatureMatrix> layers;

  int n_samples() const noexcept { return static_cast<int>(targets.size()); }
  int n_layers() const noexcept { return static_cast<int>(layers.size()) - 1; }

  /// Gathers every post-layer state (plus the embedding) from the traces.
  /// `targets[i]` is the true count for `traces[i]`.
  static ProbeDataset from_traces(std::span<const ActivationTrace> traces, std::span<const int> targets,
                                  ProbeCondition condition);
  static ProbeDataset from_features(std::vector<FeatureMatrix> layers, std::vector<double> targets,
                                    ProbeCondition condition);

  /// Throws ValidationError for < 3 samples or ragged dimensions and
  /// DegenerateError when every label is identical.
  void validate() const;
};

struct ProbeLayerResult {
  int layer_index = 0;
  double mae = 0.0;
  double r2 = 0.0;
  int n_samples = 0;
  double lambda = kDefaultRidgeLambda;
};

/// Leave-one-out ridge predictions. Each fold centers features and targets on
/// its training rows (no penalized bias) and refits; the solve uses the dual
/// (Gram) form when features outnumber training rows.
std::vector<double> ridge_loo_predict(const FeatureMatrix& x, std::span<const double> y, double lambda);

/// MAE and R^2 (against the mean of all labels) of LOO predictions.
ProbeLayerResult probe_layer(const ProbeDataset& dataset, int layer_index, double lambda = kDefaultRidgeLambda);

struct ProbeTable {
  double lambda = kDefaultRidgeLambda;
  std::vector<ProbeLayerResult> repeated;
  std::vector<ProbeLayerResult> unique;
  /// Layers where the repeated condition has strictly lower MAE.
  std::vector<int> dissociation_layers;

  const ProbeLayerResult* find(ProbeCondition c, int layer) const;
};

ProbeTable probe_all_layers(const ProbeDataset& repeated, const ProbeDataset& unique,
                            double lambda = kDefaultRidgeLambda);

/// Single-condition table (unique left empty).
ProbeTable probe_condition(const ProbeDataset& dataset, double lambda = kDefaultRidgeLambda);

}  // namespace rscope
