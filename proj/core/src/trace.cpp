// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "rscope/errors.hpp"

namespace rscope {

std::string_view to_string(NormKind kind) noexcept {
  return kind == NormKind::rms ? "rms" : "standard";
}

NormKind norm_kind_from_string(std::string_view text) {
  if (text == "rms") return NormKind::rms;
  if (text == "standard") return NormKind::standard;
  throw ValidationError("meta.norm_kind", "unknown norm kind '" + std::string(text) + "'");
}

std::optional<int> DigitVocab::value_of(std::int64_t token_id) const {
  for (const auto& [value, entry] : entries) {
    if (std::find(entry.token_ids.begin(), entry.token_ids.end(), token_id) != entry.token_ids.end()) {
      return value;
    }
  }
  return std::nullopt;
}

std::span<const float> LayerStates::post_layer(int layer_index) const {
  if (layer_index == 0) return embedding_out;
  return layer(layer_index).post_layer;
}

const LayerState& LayerStates::layer(int layer_index) const {
  if (layer_index < 1 || layer_index > static_cast<int>(layers.size())) {
    throw UsageError("layer index " + std::to_string(layer_index) + " outside [1, " +
                     std::to_string(layers.size()) + "]");
  }
  return layers[static_cast<std::size_t>(layer_index - 1)];
}

const AttentionLayer& AttentionRows::layer(int layer_index) const {
  if (layer_index < 1 || layer_index > static_cast<int>(layers.size())) {
    throw UsageError("attention layer index " + std::to_string(layer_index) + " outside [1, " +
                     std::to_string(layers.size()) + "]");
  }
  return layers[static_cast<std::size_t>(layer_index - 1)];
}

std::optional<int> parse_first_integer(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') continue;
    std::size_t begin = i;
    if (i > 0 && text[i - 1] == '-') begin = i - 1;
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data() + begin, text.data() + text.size(), value);
    if (ec != std::errc()) return std::nullopt;
    (void)ptr;
    return value;
  }
  return std::nullopt;
}

BehavioralRecord BehavioralRecord::from_text(std::string text) {
  BehavioralRecord record;
  record.parsed_integer = parse_first_integer(text);
  record.final_output_text = std::move(text);
  return record;
}

namespace {

double l2(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

double relative_gap(std::span<const float> reference, std::span<const float> other) {
  double diff = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference[i]) - other[i];
    diff += d * d;
  }
  diff = std::sqrt(diff);
  const double scale = l2(reference);
  return scale > 0.0 ? diff / scale : diff;
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ValidationError(field, what);
}

void require_vector(std::span<const float> v, std::size_t expected, const std::string& field) {
  require(v.size() == expected, field,
          "expected length " + std::to_string(expected) + ", got " + std::to_string(v.size()));
  for (float x : v) {
    if (!std::isfinite(x)) throw DataError(field + ": non-finite value");
  }
}

void validate_meta(const ModelMeta& m) {
  require(m.n_layers >= 1, "meta.n_layers", "must be >= 1");
  require(m.d_model >= 1, "meta.d_model", "must be >= 1");
  require(m.n_heads >= 1, "meta.n_heads", "must be >= 1");
  require(m.vocab_size >= 1, "meta.vocab_size", "must be >= 1");
  require(std::isfinite(m.norm_eps) && m.norm_eps > 0.0, "meta.norm_eps", "must be positive");
}

void validate_tokens(const TokenRecord& t, const ModelMeta& m) {
  require(t.token_texts.size() == t.token_ids.size(), "tokens.token_texts",
          "length differs from token_ids");
  const int seq_len = t.seq_len();
  require(seq_len >= 1, "tokens.token_ids", "empty sequence");
  for (auto id : t.token_ids) {
    require(id >= 0 && id < m.vocab_size, "tokens.token_ids",
            "token id " + std::to_string(id) + " outside vocabulary");
  }
  const auto& s = t.list_span;
  require(s.start >= 0 && s.start < s.end && s.end <= seq_len, "tokens.list_span",
          "require 0 <= start < end <= seq_len");
  if (t.bos_index) {
    require(*t.bos_index >= 0 && *t.bos_index < seq_len, "tokens.bos_index", "outside sequence");
    require(!s.contains(*t.bos_index), "tokens.bos_index", "lies inside list_span");
  }
  for (int p : t.intruder_positions) {
    require(p >= 0 && p < s.size(), "tokens.intruder_positions",
            "position " + std::to_string(p) + " outside list");
  }
}

void validate_digits(const DigitVocab& d, const ModelMeta& m) {
  for (const auto& [value, entry] : d.entries) {
    require(value >= DigitVocab::kMinValue && value <= DigitVocab::kMaxValue, "digits",
            "value " + std::to_string(value) + " outside 1..19");
    require(!entry.token_ids.empty(), "digits", "value " + std::to_string(value) + " has no token id");
    for (auto id : entry.token_ids) {
      require(id >= 0 && id < m.vocab_size, "digits",
              "token id " + std::to_string(id) + " for value " + std::to_string(value) +
                  " outside vocabulary");
    }
  }
}

void validate_states(const LayerStates& s, const ModelMeta& m, double tolerance) {
  const auto d = static_cast<std::size_t>(m.d_model);
  require_vector(s.embedding_out, d, "states.embedding_out");
  require(static_cast<int>(s.layers.size()) == m.n_layers, "states.layers",
          "expected " + std::to_string(m.n_layers) + " layers, got " + std::to_string(s.layers.size()));
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const std::string prefix = "states.layer" + std::to_string(i + 1);
    require_vector(s.layers[i].before, d, prefix + ".h_before");
    require_vector(s.layers[i].post_attn, d, prefix + ".h_post_attn");
    require_vector(s.layers[i].post_layer, d, prefix + ".h_post_layer");
  }
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto& prev = i == 0 ? s.embedding_out : s.layers[i - 1].post_layer;
    const double gap = relative_gap(prev, s.layers[i].before);
    require(gap <= tolerance, "states.continuity",
            "layer " + std::to_string(i + 1) + " h_before differs from previous post-layer state " +
                "(relative gap " + std::to_string(gap) + ")");
  }
}

void validate_attention(const AttentionRows& a, const ModelMeta& m, int seq_len) {
  require(static_cast<int>(a.layers.size()) == m.n_layers, "attn.layers",
          "expected " + std::to_string(m.n_layers) + " layers, got " + std::to_string(a.layers.size()));
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& layer = a.layers[i];
    const std::string field = "attn.layer" + std::to_string(i + 1);
    require(layer.n_heads == m.n_heads, field, "head count mismatch");
    require(layer.seq_len == seq_len, field, "row length differs from seq_len");
    require_vector(layer.weights, static_cast<std::size_t>(m.n_heads) * seq_len, field);
    for (int h = 0; h < layer.n_heads; ++h) {
      double sum = 0.0;
      for (float w : layer.head(h)) {
        require(w >= 0.0f, field, "negative attention weight in head " + std::to_string(h));
        sum += w;
      }
      require(std::abs(sum - 1.0) <= 1e-4, field,
              "head " + std::to_string(h) + " row sums to " + std::to_string(sum));
    }
  }
}

void validate_unembed(const UnembedBlock& u, const ModelMeta& m) {
  const auto d = static_cast<std::size_t>(m.d_model);
  require_vector(u.unembed, static_cast<std::size_t>(m.vocab_size) * d, "unembed.unembed");
  require_vector(u.final_norm_weight, d, "unembed.final_norm_weight");
  if (u.final_norm_bias) require_vector(*u.final_norm_bias, d, "unembed.final_norm_bias");
}

void validate_behavior(const BehavioralRecord& b) {
  require(b.decoding == "greedy", "behavior.decoding", "only greedy decoding is supported");
  require(b.parsed_integer == parse_first_integer(b.final_output_text), "behavior.parsed_integer",
          "does not match the leading integer of final_output_text");
}

}  // namespace

double max_continuity_gap(const LayerStates& states) {
  double worst = 0.0;
  for (std::size_t i = 0; i < states.layers.size(); ++i) {
    const auto& prev = i == 0 ? states.embedding_out : states.layers[i - 1].post_layer;
    worst = std::max(worst, relative_gap(prev, states.layers[i].before));
  }
  return worst;
}

void validate(const ActivationTrace& trace) {
  validate_meta(trace.meta);
  require(std::isfinite(trace.continuity_tolerance) && trace.continuity_tolerance > 0.0,
          "continuity_tolerance", "must be positive");
  validate_tokens(trace.tokens, trace.meta);
  validate_digits(trace.digits, trace.meta);
  validate_states(trace.states, trace.meta, trace.continuity_tolerance);
  validate_attention(trace.attn, trace.meta, trace.tokens.seq_len());
  validate_unembed(trace.unembed, trace.meta);
  if (trace.behavior) validate_behavior(*trace.behavior);
}

TokenizationCheck verify_tokenization(const ActivationTrace& trace, int expected_word_count) {
  TokenizationCheck check;
  check.span_length = trace.tokens.list_span.size();
  check.expected_word_count = expected_word_count;
  check.delta = check.span_length - expected_word_count;
  check.pass = check.delta == 0;
  return check;
}

int list_count(const ActivationTrace& trace) {
  return trace.tokens.list_span.size() - static_cast<int>(trace.tokens.intruder_positions.size());
}

}  // namespace rscope
