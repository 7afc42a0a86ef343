// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sublayer attribution of the attractor digit: which of attention or MLP
// writes (or erases) it, whether the writer's input depends on n, and how
// zero-ablation outcomes compare with the intact model.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rscope/trace.hpp"

namespace rscope {

enum class WriterLabel { mlp_writes, attn_writes, erased_by_mlp, erased_by_attn, stable };

/// "MLP_WRITES", "ATTN_WRITES", ...
std::string_view to_string(WriterLabel label) noexcept;
WriterLabel writer_label_from_string(std::string_view s);

/// Short column label used in the published decomposition tables: both
/// erasure kinds collapse to "MLP E".
std::string_view table_label(WriterLabel label) noexcept;

/// Digit-restricted top-1 of h_before, h_post_attn and h_post_layer.
struct DigitTriple {
  std::optional<int> before;
  std::optional<int> post_attn;
  std::optional<int> post_layer;

  bool operator==(const DigitTriple&) const = default;
};

/// Rules, first match wins, with P(x) := (x == attractor):
///   !P(before) &&  P(post_attn)                  -> ATTN_WRITES
///   !P(before) && !P(post_attn) && P(post_layer) -> MLP_WRITES
///    P(before) && !P(post_attn)                  -> ERASED_BY_ATTN
///    P(before) &&  P(post_attn) && !P(post_layer) -> ERASED_BY_MLP
///   otherwise                                    -> STABLE
/// An absent digit never equals the attractor.
WriterLabel classify(const DigitTriple& digits, int attractor) noexcept;

struct DecompRecord {
  int layer_index = 0;
  DigitTriple digits;
  WriterLabel label = WriterLabel::stable;
};

DigitTriple project_layer(const ActivationTrace& trace, int layer);

/// One record per layer in [first, last]; an empty range (first > last)
/// yields no records.
std::vector<DecompRecord> decompose_range(const ActivationTrace& trace, int first, int last, int attractor);

enum class Sublayer { mlp, attn };

std::string_view to_string(Sublayer s) noexcept;

struct AblationSpec {
  int layer_index = 0;
  Sublayer sublayer = Sublayer::mlp;
  std::string mode = "zero";

  bool operator==(const AblationSpec&) const = default;
};

/// Parses "LAYER:mlp:zero" / "LAYER:attn:zero".
AblationSpec parse_ablation(std::string_view text);
std::string format_ablation(const AblationSpec& spec);
void validate_ablation(const AblationSpec& spec, int n_layers);

/// The MLP writer to ablate: the MLP_WRITES record at `lockin_layer` when
/// there is one, else the latest MLP_WRITES at or before it, else the first.
std::optional<int> primary_writer(std::span<const DecompRecord> records, std::optional<int> lockin_layer);

/// Zero-ablation specs for every MLP writer, primary first.
std::vector<AblationSpec> plan_ablations(std::span<const DecompRecord> records, std::optional<int> lockin_layer);

enum class InvarianceVerdict { count_invariant, count_dependent, insufficient_data };

std::string_view to_string(InvarianceVerdict v) noexcept;

struct PerNRow {
  int n = 0;
  DigitTriple digits;
  bool writer_fired = false;
};

struct PerNTable {
  int writer_layer = 0;
  int attractor = 0;
  std::vector<PerNRow> rows;
  InvarianceVerdict verdict = InvarianceVerdict::insufficient_data;
};

/// The writer fires at n when the triple classifies as MLP_WRITES. The input
/// is count-invariant when h_before's digit is identical across every firing
/// n; fewer than two firing n values is insufficient data.
PerNTable per_n_invariance(std::vector<std::pair<int, DigitTriple>> rows, int writer_layer, int attractor);
PerNTable per_n_invariance(std::span<const ActivationTrace> traces, std::span<const int> ns, int writer_layer,
                           int attractor);

struct AblationRow {
  int n = 0;
  std::optional<int> normal_output;
  std::optional<int> ablated_output;
  int correct = 0;
  bool fixed = false;
  bool shifted = false;
};

using OutputsByN = std::map<int, std::optional<int>>;

/// fixed: ablated == correct; shifted: ablated != normal. The n sets of all
/// three maps must agree.
std::vector<AblationRow> compare_ablation(const OutputsByN& normal, const OutputsByN& ablated,
                                          const std::map<int, int>& correct);

struct ParaphraseInput {
  std::string paraphrase;
  DigitTriple early;
  DigitTriple late;
  std::optional<int> output;
  int expected = 0;
};

struct ParaphraseRow {
  std::string paraphrase;
  DigitTriple early;
  DigitTriple late;
  std::optional<int> output;
  bool correct = false;
  bool early_writer_fired = false;
  /// The late diagnostic layer wrote the attractor.
  bool writer_fired = false;
};

struct ParaphraseTable {
  int early_layer = 0;
  int late_layer = 0;
  int attractor = 0;
  std::vector<ParaphraseRow> rows;
};

ParaphraseTable paraphrase_table(std::span<const ParaphraseInput> inputs, int early_layer, int late_layer,
                                 int attractor);

}  // namespace rscope
