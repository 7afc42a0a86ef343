// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Logit lens restricted to digit tokens.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rscope/trace.hpp"

namespace rscope {

enum class StateTag { before, post_attn, post_layer };

std::string_view to_string(StateTag tag) noexcept;

struct DigitScore {
  int digit = 0;
  double score = 0.0;

  bool operator==(const DigitScore&) const = default;
};

struct DigitProjection {
  /// Best digit under the digit-restricted ranking (ties go to the lower value).
  std::optional<int> top_digit;
  /// Up to five digits, score descending.
  std::vector<DigitScore> top5;
  int layer_index = 0;
  StateTag state_tag = StateTag::post_layer;
  /// Full-vocabulary argmax token and whether it is a digit token.
  std::int64_t top1_token = -1;
  bool is_numeric_top1 = false;
};

struct LensInputs {
  const UnembedBlock& unembed;
  const DigitVocab& digits;
  NormKind norm_kind;
  double norm_eps;
  int d_model;
  int vocab_size;

  static LensInputs of(const ActivationTrace& trace) {
    return {trace.unembed, trace.digits, trace.meta.norm_kind, trace.meta.norm_eps, trace.meta.d_model,
            trace.meta.vocab_size};
  }
};

/// Applies the final norm to `state` and scores it against the unembedding.
/// rms: x / sqrt(mean(x^2) + eps) * w;  standard: (x - mean) / sqrt(var + eps) * w + b.
/// Throws ConfigError on an empty digit vocabulary.
DigitProjection project(std::span<const float> state, const LensInputs& lens, int layer_index = 0,
                        StateTag tag = StateTag::post_layer);

/// Normalized depth in percent for a 1-based layer.
inline double depth_pct(int layer, int n_layers) { return 100.0 * layer / n_layers; }

enum class LockinTarget { behavioral, inferred, unavailable };

std::string_view to_string(LockinTarget t) noexcept;

struct LensTrajectory {
  int n_layers = 0;
  /// Projections of post-layer states for layers 1..n_layers.
  std::vector<DigitProjection> layers;
  std::optional<int> numeric_from_layer;
  std::optional<int> lockin_layer;
  std::optional<double> lockin_depth_pct;
  std::optional<int> final_answer_digit;
  LockinTarget target_source = LockinTarget::unavailable;
  /// Behavioral answer outside the digit vocabulary.
  bool answer_unrepresentable = false;

  std::optional<double> numeric_from_depth_pct() const {
    if (!numeric_from_layer) return std::nullopt;
    return depth_pct(*numeric_from_layer, n_layers);
  }
};

/// Per-layer logit-lens trajectory with numeric-from and lock-in detection.
///
/// numeric_from is the smallest L such that every layer >= L has a digit as
/// its full-vocabulary top token. The lock-in target is the behavioral answer
/// when present, else the last layer's top digit ("inferred", only when that
/// layer is numeric). lock-in is the smallest L >= numeric_from such that every
/// layer >= L has the target as its top digit.
LensTrajectory trajectory(const ActivationTrace& trace);

struct TopFiveCheck {
  bool representable = true;
  /// Correct answer present in the top five but not the top digit.
  std::vector<bool> outranked;
};

TopFiveCheck correct_in_top5(const LensTrajectory& trajectory, int correct_answer, const DigitVocab& digits);

}  // namespace rscope
