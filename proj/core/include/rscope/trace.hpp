// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Activation-trace data model. A trace holds the last-token residual states
// of one prompt at every layer, the last-token attention rows, the final norm
// and unembedding needed for logit-lens projection, the digit-token map, and
// the greedy behavioral output.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rscope {

enum class NormKind { rms, standard };

std::string_view to_string(NormKind kind) noexcept;
NormKind norm_kind_from_string(std::string_view text);

struct ModelMeta {
  std::string model_id;
  int n_layers = 0;
  int d_model = 0;
  int n_heads = 0;
  int vocab_size = 0;
  NormKind norm_kind = NormKind::rms;
  double norm_eps = 1e-5;

  bool operator==(const ModelMeta&) const = default;
};

/// Half-open range [start, end) of token positions.
struct SpanRange {
  int start = 0;
  int end = 0;

  int size() const noexcept { return end - start; }
  bool contains(int pos) const noexcept { return pos >= start && pos < end; }
  bool operator==(const SpanRange&) const = default;
};

struct TokenRecord {
  std::vector<std::int64_t> token_ids;
  std::vector<std::string> token_texts;
  std::optional<int> bos_index;
  SpanRange list_span;
  /// List-relative indices of intruder tokens.
  std::vector<int> intruder_positions;

  int seq_len() const noexcept { return static_cast<int>(token_ids.size()); }
  bool operator==(const TokenRecord&) const = default;
};

struct DigitEntry {
  /// Every single-token spelling of the value (e.g. with and without a
  /// leading space). The lens scores a value by its best-scoring id.
  std::vector<std::int64_t> token_ids;
  bool single_token_only = true;

  bool operator==(const DigitEntry&) const = default;
};

/// Integer values 1..19 that exist as single tokens. Values a tokenizer
/// cannot represent are absent, never zero-filled.
struct DigitVocab {
  std::map<int, DigitEntry> entries;

  static constexpr int kMinValue = 1;
  static constexpr int kMaxValue = 19;

  bool contains(int value) const { return entries.count(value) != 0; }
  bool empty() const noexcept { return entries.empty(); }
  /// Digit value owning `token_id`, if any.
  std::optional<int> value_of(std::int64_t token_id) const;
  bool operator==(const DigitVocab&) const = default;
};

struct LayerState {
  std::vector<float> before;
  std::vector<float> post_attn;
  std::vector<float> post_layer;

  bool operator==(const LayerState&) const = default;
};

/// Residual states; `layers[i]` is decoder layer i+1.
struct LayerStates {
  std::vector<float> embedding_out;
  std::vector<LayerState> layers;

  /// Post-layer state with layer 0 meaning the embedding output.
  std::span<const float> post_layer(int layer_index) const;
  const LayerState& layer(int layer_index) const;
  bool operator==(const LayerStates&) const = default;
};

/// Last-token attention for one layer, row-major [n_heads x seq_len].
struct AttentionLayer {
  int n_heads = 0;
  int seq_len = 0;
  std::vector<float> weights;

  std::span<const float> head(int h) const {
    return std::span<const float>(weights).subspan(static_cast<std::size_t>(h) * seq_len,
                                                   static_cast<std::size_t>(seq_len));
  }
  bool operator==(const AttentionLayer&) const = default;
};

struct AttentionRows {
  /// `layers[i]` is decoder layer i+1.
  std::vector<AttentionLayer> layers;

  const AttentionLayer& layer(int layer_index) const;
  bool operator==(const AttentionRows&) const = default;
};

struct UnembedBlock {
  /// Row-major [vocab_size x d_model].
  std::vector<float> unembed;
  std::vector<float> final_norm_weight;
  std::optional<std::vector<float>> final_norm_bias;

  std::span<const float> row(std::int64_t token_id, int d_model) const {
    return std::span<const float>(unembed).subspan(static_cast<std::size_t>(token_id) * d_model,
                                                   static_cast<std::size_t>(d_model));
  }
  bool operator==(const UnembedBlock&) const = default;
};

struct BehavioralRecord {
  std::string final_output_text;
  std::optional<int> parsed_integer;
  std::string decoding = "greedy";

  /// Builds a record from generated text, parsing the first integer literal.
  static BehavioralRecord from_text(std::string text);
  bool operator==(const BehavioralRecord&) const = default;
};

inline constexpr double kDefaultContinuityTolerance = 1e-4;

struct ActivationTrace {
  ModelMeta meta;
  TokenRecord tokens;
  LayerStates states;
  AttentionRows attn;
  UnembedBlock unembed;
  DigitVocab digits;
  std::optional<BehavioralRecord> behavior;
  std::string prompt_label;
  /// Relative L2 tolerance for residual continuity; captured traces may relax
  /// it per model.
  double continuity_tolerance = kDefaultContinuityTolerance;

  bool operator==(const ActivationTrace&) const = default;
};

/// First integer literal in `text` (optionally preceded by '-'), or nullopt.
std::optional<int> parse_first_integer(std::string_view text);

/// Checks every structural invariant; throws ValidationError naming the field
/// or DataError for non-finite values.
void validate(const ActivationTrace& trace);

/// Largest relative L2 distance between post_layer(i-1) and before(i).
double max_continuity_gap(const LayerStates& states);

struct TokenizationCheck {
  int span_length = 0;
  int expected_word_count = 0;
  int delta = 0;
  bool pass = false;
};

/// Count the trace's list encodes: span length minus intruder positions.
int list_count(const ActivationTrace& trace);

/// Compares the list-span token count against the payload word count.
TokenizationCheck verify_tokenization(const ActivationTrace& trace, int expected_word_count);

}  // namespace rscope
