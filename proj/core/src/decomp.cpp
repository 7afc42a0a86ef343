// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/decomp.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "rscope/errors.hpp"
#include "rscope/lens.hpp"

namespace rscope {

std::string_view to_string(WriterLabel label) noexcept {
  switch (label) {
    case WriterLabel::mlp_writes: return "MLP_WRITES";
    case WriterLabel::attn_writes: return "ATTN_WRITES";
    case WriterLabel::erased_by_mlp: return "ERASED_BY_MLP";
    case WriterLabel::erased_by_attn: return "ERASED_BY_ATTN";
    case WriterLabel::stable: return "STABLE";
  }
  return "?";
}

WriterLabel writer_label_from_string(std::string_view s) {
  for (auto l : {WriterLabel::mlp_writes, WriterLabel::attn_writes, WriterLabel::erased_by_mlp,
                 WriterLabel::erased_by_attn, WriterLabel::stable}) {
    if (to_string(l) == s) return l;
  }
  throw UsageError("unknown writer label '" + std::string(s) + "'");
}

std::string_view table_label(WriterLabel label) noexcept {
  switch (label) {
    case WriterLabel::mlp_writes: return "MLP";
    case WriterLabel::attn_writes: return "ATT";
    case WriterLabel::erased_by_mlp:
    case WriterLabel::erased_by_attn: return "MLP E";
    case WriterLabel::stable: return "---";
  }
  return "?";
}

WriterLabel classify(const DigitTriple& d, int attractor) noexcept {
  const bool before = d.before == attractor;
  const bool attn = d.post_attn == attractor;
  const bool layer = d.post_layer == attractor;
  if (!before && attn) return WriterLabel::attn_writes;
  if (!before && !attn && layer) return WriterLabel::mlp_writes;
  if (before && !attn) return WriterLabel::erased_by_attn;
  if (before && attn && !layer) return WriterLabel::erased_by_mlp;
  return WriterLabel::stable;
}

DigitTriple project_layer(const ActivationTrace& trace, int layer) {
  const auto lens = LensInputs::of(trace);
  const auto& s = trace.states.layer(layer);
  return DigitTriple{project(s.before, lens, layer, StateTag::before).top_digit,
                     project(s.post_attn, lens, layer, StateTag::post_attn).top_digit,
                     project(s.post_layer, lens, layer, StateTag::post_layer).top_digit};
}

std::vector<DecompRecord> decompose_range(const ActivationTrace& trace, int first, int last, int attractor) {
  std::vector<DecompRecord> out;
  if (first > last) return out;
  if (first < 1 || last > trace.meta.n_layers) {
    throw UsageError("decomposition range [" + std::to_string(first) + ", " + std::to_string(last) +
                     "] outside model depth " + std::to_string(trace.meta.n_layers));
  }
  for (int layer = first; layer <= last; ++layer) {
    DecompRecord r;
    r.layer_index = layer;
    r.digits = project_layer(trace, layer);
    r.label = classify(r.digits, attractor);
    out.push_back(r);
  }
  return out;
}

std::string_view to_string(Sublayer s) noexcept { return s == Sublayer::mlp ? "mlp" : "attn"; }

AblationSpec parse_ablation(std::string_view text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos) throw UsageError("ablation must look like LAYER:mlp:zero");
  AblationSpec spec;
  const auto layer = text.substr(0, c1);
  auto [ptr, ec] = std::from_chars(layer.data(), layer.data() + layer.size(), spec.layer_index);
  if (ec != std::errc() || ptr != layer.data() + layer.size()) throw UsageError("ablation layer is not an integer");
  const auto sub = text.substr(c1 + 1, c2 - c1 - 1);
  if (sub == "mlp") {
    spec.sublayer = Sublayer::mlp;
  } else if (sub == "attn") {
    spec.sublayer = Sublayer::attn;
  } else {
    throw UsageError("ablation sublayer must be mlp or attn");
  }
  if (text.substr(c2 + 1) != "zero") throw UsageError("only zero ablation is supported");
  return spec;
}

std::string format_ablation(const AblationSpec& spec) {
  return std::to_string(spec.layer_index) + ":" + std::string(to_string(spec.sublayer)) + ":" + spec.mode;
}

void validate_ablation(const AblationSpec& spec, int n_layers) {
  if (spec.layer_index < 1 || spec.layer_index > n_layers) {
    throw ValidationError("ablation.layer_index", "layer " + std::to_string(spec.layer_index) + " outside [1, " +
                                                      std::to_string(n_layers) + "]");
  }
  if (spec.mode != "zero") throw ValidationError("ablation.mode", "only zero ablation is supported");
}

std::optional<int> primary_writer(std::span<const DecompRecord> records, std::optional<int> lockin_layer) {
  std::optional<int> first, latest_before;
  for (const auto& r : records) {
    if (r.label != WriterLabel::mlp_writes) continue;
    if (!first) first = r.layer_index;
    if (lockin_layer && r.layer_index == *lockin_layer) return r.layer_index;
    if (lockin_layer && r.layer_index <= *lockin_layer) latest_before = r.layer_index;
  }
  return latest_before ? latest_before : first;
}

std::vector<AblationSpec> plan_ablations(std::span<const DecompRecord> records, std::optional<int> lockin_layer) {
  std::vector<AblationSpec> out;
  const auto primary = primary_writer(records, lockin_layer);
  if (!primary) return out;
  out.push_back({*primary, Sublayer::mlp, "zero"});
  for (const auto& r : records) {
    if (r.label == WriterLabel::mlp_writes && r.layer_index != *primary) {
      out.push_back({r.layer_index, Sublayer::mlp, "zero"});
    }
  }
  return out;
}

std::string_view to_string(InvarianceVerdict v) noexcept {
  switch (v) {
    case InvarianceVerdict::count_invariant: return "count-invariant input";
    case InvarianceVerdict::count_dependent: return "count-dependent input";
    case InvarianceVerdict::insufficient_data: return "insufficient data";
  }
  return "?";
}

PerNTable per_n_invariance(std::vector<std::pair<int, DigitTriple>> rows, int writer_layer, int attractor) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].first == rows[i - 1].first) throw UsageError("per-n invariance: duplicate n " + std::to_string(rows[i].first));
  }
  PerNTable table;
  table.writer_layer = writer_layer;
  table.attractor = attractor;
  std::set<std::optional<int>> inputs;
  int fired = 0;
  for (const auto& [n, digits] : rows) {
    PerNRow row{n, digits, classify(digits, attractor) == WriterLabel::mlp_writes};
    if (row.writer_fired) {
      ++fired;
      inputs.insert(digits.before);
    }
    table.rows.push_back(row);
  }
  if (fired < 2) {
    table.verdict = InvarianceVerdict::insufficient_data;
  } else {
    table.verdict = inputs.size() == 1 ? InvarianceVerdict::count_invariant : InvarianceVerdict::count_dependent;
  }
  return table;
}

PerNTable per_n_invariance(std::span<const ActivationTrace> traces, std::span<const int> ns, int writer_layer,
                           int attractor) {
  if (traces.size() != ns.size()) throw UsageError("per-n invariance: one n per trace required");
  std::vector<std::pair<int, DigitTriple>> rows;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!(traces[i].meta == traces.front().meta)) {
      throw ValidationError("per_n.traces", "traces do not share model metadata");
    }
    rows.emplace_back(ns[i], project_layer(traces[i], writer_layer));
  }
  return per_n_invariance(std::move(rows), writer_layer, attractor);
}

std::vector<AblationRow> compare_ablation(const OutputsByN& normal, const OutputsByN& ablated,
                                          const std::map<int, int>& correct) {
  auto keys = [](const auto& m) {
    std::vector<int> k;
    for (const auto& kv : m) k.push_back(kv.first);
    return k;
  };
  if (keys(normal) != keys(ablated) || keys(normal) != keys(correct)) {
    throw ValidationError("ablation.n", "normal, ablated and correct outputs cover different n sets");
  }
  std::vector<AblationRow> rows;
  for (const auto& [n, out] : normal) {
    AblationRow r;
    r.n = n;
    r.normal_output = out;
    r.ablated_output = ablated.at(n);
    r.correct = correct.at(n);
    r.fixed = r.ablated_output == r.correct;
    r.shifted = r.ablated_output != r.normal_output;
    rows.push_back(r);
  }
  return rows;
}

ParaphraseTable paraphrase_table(std::span<const ParaphraseInput> inputs, int early_layer, int late_layer,
                                 int attractor) {
  std::set<std::string> seen;
  ParaphraseTable table;
  table.early_layer = early_layer;
  table.late_layer = late_layer;
  table.attractor = attractor;
  for (const auto& in : inputs) {
    if (!seen.insert(in.paraphrase).second) throw UsageError("duplicate paraphrase label '" + in.paraphrase + "'");
    ParaphraseRow row;
    row.paraphrase = in.paraphrase;
    row.early = in.early;
    row.late = in.late;
    row.output = in.output;
    row.correct = in.output == in.expected;
    row.early_writer_fired = classify(in.early, attractor) == WriterLabel::mlp_writes;
    row.writer_fired = classify(in.late, attractor) == WriterLabel::mlp_writes;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace rscope
