// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic trace generator with a planted linear count code and an optional
// planted MLP writer.
//
// The residual stream is simulated sublayer by sublayer. Every state is a sum
// of orthogonal components: a fixed background vector, a text-token bias, the
// count code n * v_count, per-digit lens biases, and isotropic noise with the
// digit and text directions projected out. Digit and text unembedding rows are
// orthonormal, so lens scores of the planted components are exact.
//
//   embedding   background + text_scale * u_text + noise_0
//   MLP 1       + n * count_scale * v_count + count_bias * u_n
//               (+ input_bias * u_input when the writer reads a fixed digit)
//   MLP F       - text_scale * u_text          (F = numeric_from_layer)
//   MLP W       + margin * u_wrong             (W = writer layer)
//   attn W+1    - input_bias * u_input
//   MLP S       + margin * u_secondary, only when the top digit entering the
//               MLP is not the primary wrong digit
//   every MLP   swaps the carried noise for a fresh draw
//
// Ablation zeroes one sublayer's delta; later sublayers are recomputed from
// the ablated stream.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rscope/decomp.hpp"
#include "rscope/probes.hpp"
#include "rscope/trace.hpp"

namespace rscope {

struct FixtureWriter {
  int layer = 0;
  int wrong_digit = 0;
  double margin = 2.0;
  /// Digit the writer's input carries for every n; absent means the input
  /// tops the true count (a count-dependent writer).
  std::optional<int> input_digit;
  double input_bias = 1.0;

  bool operator==(const FixtureWriter&) const = default;
};

struct FixtureSecondary {
  int layer = 0;
  int digit = 0;
  double margin = 2.0;

  bool operator==(const FixtureSecondary&) const = default;
};

enum class AttentionProfile { uniform, one_hot, mixture, custom };

std::string_view to_string(AttentionProfile p) noexcept;
AttentionProfile attention_profile_from_string(std::string_view s);

struct FixtureAttention {
  AttentionProfile profile = AttentionProfile::uniform;
  /// List position for one_hot and for the odd heads of mixture.
  int position = 0;
  double bos_mass = 0.0;
  /// Mass spread evenly over non-list, non-BOS positions.
  double prompt_mass = 0.0;
  /// custom: per-head span weights, normalized to the span share.
  std::vector<std::vector<double>> weights;

  bool operator==(const FixtureAttention&) const = default;
};

struct FixtureConfig {
  std::string model_id = "fixture";
  int n_layers = 28;
  int d_model = 64;
  int n_heads = 4;
  int vocab_size = 64;
  int prefix_len = 4;
  int suffix_len = 3;
  bool bos = true;
  std::vector<int> digit_values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  int digit_token_base = 40;
  std::uint64_t count_direction_seed = 1;
  std::uint64_t digit_embedding_seed = 2;
  double count_noise_sigma = 0.01;
  double count_scale = 1.0;
  double count_bias = 0.5;
  double text_scale = 3.0;
  int numeric_from_layer = 1;
  std::optional<FixtureWriter> writer;
  std::optional<FixtureSecondary> secondary;
  FixtureAttention attention;
  /// Noise sigma per condition ("repeated", "unique"), overriding count_noise_sigma.
  std::map<std::string, double> condition_noise;
  /// List-relative positions holding the intruder token.
  std::vector<int> intruder_positions;

  bool operator==(const FixtureConfig&) const = default;
};

/// Throws ConfigError on any inconsistency.
void validate(const FixtureConfig& config);

FixtureConfig fixture_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FixtureConfig& config);
FixtureConfig load_fixture_config(const std::filesystem::path& path);

/// Token id of a digit value in fixture vocabularies.
inline std::int64_t fixture_digit_token(const FixtureConfig& config, int value) {
  return config.digit_token_base + value;
}

ActivationTrace generate(const FixtureConfig& config, int n, ProbeCondition condition = ProbeCondition::repeated);

ActivationTrace apply_ablation(const FixtureConfig& config, const AblationSpec& spec, int n,
                               ProbeCondition condition = ProbeCondition::repeated);

struct BundleOptions {
  int n_min = 3;
  int n_max = 15;
  int focus_n = 10;
  bool unique = true;
};

/// Writes probe/repeated, probe/unique, lens/focus.rscope and a report
/// config (bundle.json) under `dir`. Returns the config path.
std::filesystem::path write_bundle(const FixtureConfig& config, const std::filesystem::path& dir,
                                   const BundleOptions& options = {});

}  // namespace rscope
