// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rscope/container.hpp"
#include "rscope/errors.hpp"

namespace rscope {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::representation_failure: return "representation_failure";
    case Verdict::routing_failure: return "routing_failure";
    case Verdict::solved: return "solved";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

json number(double x) {
  if (std::isnan(x)) return nullptr;
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  const double r = std::round(x * 1e6) / 1e6;
  return r == 0.0 ? 0.0 : r;
}

namespace {

json opt(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

std::string text(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  return v.dump();
}

std::string join(const json& arr, std::string_view sep = ", ") {
  std::string out;
  for (const auto& v : arr) {
    if (!out.empty()) out += sep;
    out += text(v);
  }
  return out.empty() ? "none" : out;
}

bool ok(const json& section) { return section.value("status", "") == "ok"; }

std::string status_line(const json& section) {
  if (section.value("status", "") == "skipped") return "_skipped: " + section.value("reason", "") + "_\n";
  return "_error: " + section.value("error", "") + "_\n";
}

}  // namespace

VerdictResult verdict(const ProbeTable* probe, const LensTrajectory* trajectory,
                      std::span<const DecompRecord> decomp, std::optional<bool> behavior_correct,
                      double r2_threshold) {
  VerdictResult out;
  if (behavior_correct == true) {
    out.verdict = Verdict::solved;
    out.evidence.push_back({"behavioral output equals the true count", "behavior"});
    return out;
  }

  if (probe && trajectory && trajectory->lockin_layer && trajectory->numeric_from_layer) {
    const int lockin = *trajectory->lockin_layer;
    const auto* at_lockin = probe->find(ProbeCondition::repeated, lockin);
    std::optional<int> writer;
    for (const auto& r : decomp) {
      if (r.label == WriterLabel::mlp_writes && r.layer_index >= *trajectory->numeric_from_layer) {
        writer = primary_writer(decomp, lockin);
        break;
      }
    }
    if (at_lockin && at_lockin->r2 >= r2_threshold && writer) {
      out.verdict = Verdict::routing_failure;
      out.evidence.push_back({"probe R2 " + number(at_lockin->r2).dump() + " at lock-in layer " +
                                  std::to_string(lockin) + " (threshold " + number(r2_threshold).dump() + ")",
                              "probe"});
      out.evidence.push_back({"lock-in at layer " + std::to_string(lockin) + ", depth " +
                                  number(*trajectory->lockin_depth_pct).dump() + "%",
                              "lens"});
      out.evidence.push_back({"MLP writer at layer " + std::to_string(*writer) + ", depth " +
                                  number(depth_pct(*writer, trajectory->n_layers)).dump() + "%",
                              "decomp"});
      return out;
    }
  }

  if (probe && behavior_correct == false && !probe->repeated.empty()) {
    const int n_layers = probe->repeated.back().layer_index;
    bool any_late = false;
    bool all_low = true;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : probe->repeated) {
      if (r.layer_index <= n_layers / 2) continue;
      any_late = true;
      best = std::max(best, r.r2);
      all_low = all_low && r.r2 < r2_threshold;
    }
    if (any_late && all_low) {
      out.verdict = Verdict::representation_failure;
      out.evidence.push_back({"best late-layer probe R2 " + number(best).dump() + " below threshold " +
                                  number(r2_threshold).dump(),
                              "probe"});
      out.evidence.push_back({"behavioral output is wrong", "behavior"});
      return out;
    }
  }

  out.verdict = Verdict::inconclusive;
  if (!probe) out.evidence.push_back({"probe results unavailable", "probe"});
  if (!trajectory) out.evidence.push_back({"lens trajectory unavailable", "lens"});
  if (trajectory && !trajectory->lockin_layer) out.evidence.push_back({"no lock-in layer", "lens"});
  if (!behavior_correct) out.evidence.push_back({"behavioral output unavailable", "behavior"});
  return out;
}

json skipped_section(const std::string& reason) { return json{{"status", "skipped"}, {"reason", reason}}; }

json probe_section(const ProbeTable& table, double r2_threshold) {
  auto rows = [](const std::vector<ProbeLayerResult>& results) {
    json arr = json::array();
    for (const auto& r : results) {
      arr.push_back({{"layer", r.layer_index}, {"mae", number(r.mae)}, {"r2", number(r.r2)}, {"n_samples", r.n_samples}});
    }
    return arr;
  };
  json above = json::array();
  for (const auto& r : table.repeated) {
    if (r.r2 >= r2_threshold) above.push_back(r.layer_index);
  }
  return json{{"status", "ok"},
              {"lambda", number(table.lambda)},
              {"r2_threshold", number(r2_threshold)},
              {"repeated", rows(table.repeated)},
              {"unique", rows(table.unique)},
              {"dissociation_layers", table.dissociation_layers},
              {"layers_above_threshold", above}};
}

json lens_section(const ActivationTrace& trace, const LensTrajectory& traj) {
  const int correct = list_count(trace);
  const auto top5 = correct_in_top5(traj, correct, trace.digits);
  json layers = json::array();
  json outranked = json::array();
  for (std::size_t i = 0; i < traj.layers.size(); ++i) {
    const auto& p = traj.layers[i];
    json t5 = json::array();
    for (const auto& s : p.top5) t5.push_back({{"digit", s.digit}, {"score", number(s.score)}});
    layers.push_back({{"layer", p.layer_index},
                      {"depth_pct", number(depth_pct(p.layer_index, traj.n_layers))},
                      {"top_digit", opt(p.top_digit)},
                      {"top1_token", p.top1_token},
                      {"is_numeric_top1", p.is_numeric_top1},
                      {"top5", t5}});
    if (top5.outranked[i]) outranked.push_back(p.layer_index);
  }
  return json{{"status", "ok"},
              {"trace", trace.prompt_label},
              {"n_layers", traj.n_layers},
              {"correct_answer", correct},
              {"correct_representable", top5.representable},
              {"correct_outranked_layers", outranked},
              {"numeric_from_layer", opt(traj.numeric_from_layer)},
              {"numeric_from_depth_pct", opt(traj.numeric_from_depth_pct())},
              {"lockin_layer", opt(traj.lockin_layer)},
              {"lockin_depth_pct", opt(traj.lockin_depth_pct)},
              {"final_answer_digit", opt(traj.final_answer_digit)},
              {"target_source", to_string(traj.target_source)},
              {"answer_unrepresentable", traj.answer_unrepresentable},
              {"layers", layers}};
}

json decomp_section(const ActivationTrace& trace, std::span<const DecompRecord> records, int attractor,
                    std::optional<int> lockin_layer) {
  json rows = json::array();
  json writers = json::array();
  for (const auto& r : records) {
    rows.push_back({{"layer", r.layer_index},
                    {"before", opt(r.digits.before)},
                    {"post_attn", opt(r.digits.post_attn)},
                    {"post_layer", opt(r.digits.post_layer)},
                    {"label", to_string(r.label)},
                    {"table_label", table_label(r.label)}});
    if (r.label == WriterLabel::mlp_writes) writers.push_back(r.layer_index);
  }
  const auto primary = primary_writer(records, lockin_layer);
  json plan = json::array();
  for (const auto& spec : plan_ablations(records, lockin_layer)) plan.push_back(format_ablation(spec));
  return json{{"status", "ok"},
              {"trace", trace.prompt_label},
              {"attractor", attractor},
              {"first", records.empty() ? json(nullptr) : json(records.front().layer_index)},
              {"last", records.empty() ? json(nullptr) : json(records.back().layer_index)},
              {"records", rows},
              {"writer_layers", writers},
              {"primary_writer", opt(primary)},
              {"primary_writer_depth_pct",
               primary ? number(depth_pct(*primary, trace.meta.n_layers)) : json(nullptr)},
              {"planned_ablations", plan}};
}

json attention_section(const ActivationTrace& trace, const AttnSummary& summary, const AnomalyAttnSummary* anomaly,
                       const std::string& anomaly_label) {
  json layers = json::array();
  for (const auto& l : summary.layers) {
    layers.push_back({{"layer", l.layer_index},
                      {"entropy", number(l.entropy)},
                      {"uniformity", number(l.uniformity)},
                      {"argmax_list_pos", l.argmax_list_pos},
                      {"span_mass", number(l.span_mass)},
                      {"bos_dominant", l.bos_dominant}});
  }
  json out{{"status", "ok"},
           {"trace", trace.prompt_label},
           {"span_length", trace.tokens.list_span.size()},
           {"max_entropy", number(std::log(static_cast<double>(trace.tokens.list_span.size())))},
           {"mean_entropy", number(summary.mean_entropy)},
           {"mean_uniformity", number(summary.mean_uniformity)},
           {"bos_dominant_layers", summary.bos_dominant_layers},
           {"layers", layers}};
  if (anomaly) {
    json ratios = json::array();
    for (double r : anomaly->ratios) ratios.push_back(number(r));
    json deltas = json::array();
    for (double d : anomaly->entropy_delta) deltas.push_back(number(d));
    json heads = json::array();
    for (const auto& lr : anomaly->per_head) {
      json hs = json::array();
      for (const auto& h : lr.heads) hs.push_back({{"head", h.head}, {"ratio", h.ratio ? number(*h.ratio) : json(nullptr)}});
      heads.push_back({{"layer", lr.layer_index}, {"heads", hs}});
    }
    out["anomaly"] = {{"trace", anomaly_label},
                      {"intruder_pos", anomaly->intruder_pos},
                      {"threshold", number(anomaly->threshold)},
                      {"ratios", ratios},
                      {"over_attended_layers", anomaly->over_attended_layers},
                      {"over_attended_count", anomaly->over_attended_layers.size()},
                      {"most_ignoring_layers", most_ignoring_layers(anomaly->ratios, 3)},
                      {"entropy_delta", deltas},
                      {"per_head", heads}};
  }
  return out;
}

BehaviorInput behavior_input_from_json(const json& j) {
  BehaviorInput in;
  auto output = [](const json& row) -> std::optional<int> {
    const auto& o = row.at("output");
    if (o.is_null()) return std::nullopt;
    if (o.is_string()) return parse_first_integer(o.get<std::string>());
    return o.get<int>();
  };
  try {
    if (auto it = j.find("records"); it != j.end()) {
      for (const auto& r : *it) {
        in.records.push_back({condition_from_string(r.at("condition").get<std::string>()),
                              delimiter_from_string(r.at("delimiter").get<std::string>()), output(r),
                              r.at("expected").get<int>()});
      }
    }
    if (auto it = j.find("sweep"); it != j.end()) {
      std::vector<std::pair<int, std::optional<int>>> pts;
      for (const auto& r : *it) pts.emplace_back(r.at("n").get<int>(), output(r));
      in.sweep = make_sweep(pts);
    }
    if (auto it = j.find("positions"); it != j.end()) {
      for (const auto& r : *it) in.positions.emplace_back(r.at("position").get<int>(), output(r));
    }
    if (auto it = j.find("counts"); it != j.end()) {
      for (const auto& r : *it) in.counts.emplace_back(r.at("k").get<int>(), output(r));
    }
    in.expected_base = j.value("expected_base", 10);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("behavior input: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("behavior input: ") + e.what());
  }
  return in;
}

json behavior_section(const BehaviorInput& in) {
  json out{{"status", "ok"}};
  if (!in.records.empty()) {
    const auto table = accuracy_table(in.records);
    json cells = json::array();
    for (const auto& c : table.cells) {
      cells.push_back({{"condition", to_string(c.condition)},
                       {"delimiter", to_string(c.delimiter)},
                       {"runs", c.runs},
                       {"accuracy_pct", number(c.accuracy_pct)},
                       {"attractor", opt(c.attractor)},
                       {"integrity_warning", c.integrity_warning},
                       {"unparseable", c.unparseable}});
    }
    out["accuracy"] = {{"type", to_string(table.type)}, {"cells", cells}, {"warnings", table.warnings}};
  }
  if (!in.sweep.empty()) {
    const auto seg = segment_attractors(in.sweep);
    json s = to_json(seg);
    json attractors = json::array();
    for (const auto& a : seg.attractors()) attractors.push_back(opt(a.value));
    s["attractor_values"] = attractors;
    out["sweep"] = s;
  }
  if (!in.positions.empty() || !in.counts.empty()) {
    const auto a = anomaly_summary(in.positions, in.counts, in.expected_base);
    out["anomaly"] = {{"expected_base", in.expected_base},
                      {"detected_positions", a.detected_positions},
                      {"min_bananas", opt(a.min_bananas)},
                      {"recency", a.recency}};
  }
  return out;
}

json verdict_json(const VerdictResult& v, double r2_threshold) {
  json ev = json::array();
  for (const auto& e : v.evidence) ev.push_back({{"claim", e.claim}, {"section", e.section}});
  return json{{"verdict", to_string(v.verdict)}, {"r2_threshold", number(r2_threshold)}, {"evidence", ev}};
}

std::string probe_markdown(const json& s) {
  std::ostringstream md;
  md << "## Linear probes\n\n";
  if (!ok(s)) return md.str() + status_line(s) + "\n";
  md << "Ridge lambda " << text(s["lambda"]) << ", R2 threshold " << text(s["r2_threshold"]) << ".\n\n";
  const bool has_unique = !s["unique"].empty();
  md << "| Layer | MAE (repeated) | R2 (repeated) |" << (has_unique ? " MAE (unique) | R2 (unique) |" : "") << "\n";
  md << "|---|---|---|" << (has_unique ? "---|---|" : "") << "\n";
  for (std::size_t i = 0; i < s["repeated"].size(); ++i) {
    const auto& r = s["repeated"][i];
    md << "| " << text(r["layer"]) << " | " << text(r["mae"]) << " | " << text(r["r2"]) << " |";
    if (has_unique && i < s["unique"].size()) {
      md << " " << text(s["unique"][i]["mae"]) << " | " << text(s["unique"][i]["r2"]) << " |";
    }
    md << "\n";
  }
  md << "\nLayers at or above threshold: " << join(s["layers_above_threshold"]) << ".\n";
  if (has_unique) md << "Dissociation layers (repeated MAE below unique): " << join(s["dissociation_layers"]) << ".\n";
  return md.str() + "\n";
}

std::string lens_markdown(const json& s) {
  std::ostringstream md;
  md << "## Logit lens\n\n";
  if (!ok(s)) return md.str() + status_line(s) + "\n";
  md << "Trace `" << text(s["trace"]) << "`, correct answer " << text(s["correct_answer"]) << ".\n\n";
  md << "- Numeric from: layer " << text(s["numeric_from_layer"]) << " (" << text(s["numeric_from_depth_pct"])
     << "%)\n";
  md << "- Lock-in: layer " << text(s["lockin_layer"]) << " (" << text(s["lockin_depth_pct"]) << "%), target "
     << text(s["final_answer_digit"]) << " (" << text(s["target_source"]) << ")\n";
  md << "- Correct answer outranked in top five at layers: " << join(s["correct_outranked_layers"]) << "\n\n";
  md << "| Layer | Depth % | Top digit | Numeric top-1 | Top 5 |\n|---|---|---|---|---|\n";
  for (const auto& l : s["layers"]) {
    std::string t5;
    for (const auto& d : l["top5"]) t5 += (t5.empty() ? "" : " ") + text(d["digit"]);
    md << "| " << text(l["layer"]) << " | " << text(l["depth_pct"]) << " | " << text(l["top_digit"]) << " | "
       << text(l["is_numeric_top1"]) << " | " << t5 << " |\n";
  }
  return md.str() + "\n";
}

std::string decomp_markdown(const json& s) {
  std::ostringstream md;
  md << "## Sublayer decomposition\n\n";
  if (!ok(s)) return md.str() + status_line(s) + "\n";
  md << "Trace `" << text(s["trace"]) << "`, attractor " << text(s["attractor"]) << ".\n\n";
  md << "| Layer | h_before | h_post_attn | h_post_layer | Writer |\n|---|---|---|---|---|\n";
  for (const auto& r : s["records"]) {
    md << "| " << text(r["layer"]) << " | " << text(r["before"]) << " | " << text(r["post_attn"]) << " | "
       << text(r["post_layer"]) << " | " << text(r["table_label"]) << " |\n";
  }
  md << "\nPrimary writer: layer " << text(s["primary_writer"]) << " (" << text(s["primary_writer_depth_pct"])
     << "%). Planned ablations: " << join(s["planned_ablations"]) << ".\n";
  return md.str() + "\n";
}

std::string attention_markdown(const json& s) {
  std::ostringstream md;
  md << "## Attention\n\n";
  if (!ok(s)) return md.str() + status_line(s) + "\n";
  md << "Trace `" << text(s["trace"]) << "`, span length " << text(s["span_length"]) << " (maximum entropy "
     << text(s["max_entropy"]) << ").\n\n";
  md << "- Mean entropy: " << text(s["mean_entropy"]) << "\n- Mean uniformity: " << text(s["mean_uniformity"])
     << "\n- BOS-dominant layers: " << text(s["bos_dominant_layers"]) << "\n\n";
  md << "| Layer | Entropy | Uniformity | Argmax | Span mass |\n|---|---|---|---|---|\n";
  for (const auto& l : s["layers"]) {
    md << "| " << text(l["layer"]) << " | " << text(l["entropy"]) << " | " << text(l["uniformity"]) << " | "
       << text(l["argmax_list_pos"]) << " | " << text(l["span_mass"]) << " |\n";
  }
  if (s.contains("anomaly")) {
    const auto& a = s["anomaly"];
    md << "\n### Intruder attention\n\nTrace `" << text(a["trace"]) << "`, intruder at list position "
       << text(a["intruder_pos"]) << ", threshold " << text(a["threshold"]) << ".\n\n";
    md << "- Over-attended layers (" << text(a["over_attended_count"]) << "): " << join(a["over_attended_layers"])
       << "\n- Most ignoring layers: " << join(a["most_ignoring_layers"]) << "\n\n";
    md << "| Layer | Ratio |\n|---|---|\n";
    for (std::size_t i = 0; i < a["ratios"].size(); ++i) {
      md << "| " << (i + 1) << " | " << text(a["ratios"][i]) << " |\n";
    }
  }
  return md.str() + "\n";
}

std::string behavior_markdown(const json& s) {
  std::ostringstream md;
  md << "## Behavior\n\n";
  if (!ok(s)) return md.str() + status_line(s) + "\n";
  if (s.contains("accuracy")) {
    const auto& a = s["accuracy"];
    md << "Model type " << text(a["type"]) << ".\n\n| Condition | Delimiter | Runs | Accuracy % | Attractor |\n"
       << "|---|---|---|---|---|\n";
    for (const auto& c : a["cells"]) {
      md << "| " << text(c["condition"]) << " | " << text(c["delimiter"]) << " | " << text(c["runs"]) << " | "
         << text(c["accuracy_pct"]) << " | " << text(c["attractor"]) << " |\n";
    }
    for (const auto& w : a["warnings"]) md << "\nWarning: " << text(w) << "\n";
    md << "\n";
  }
  if (s.contains("sweep")) {
    const auto& sw = s["sweep"];
    md << "First failing n: " << text(sw["first_failing_n"]) << ".\n\n| Output | n from | n to | Points | All wrong |\n"
       << "|---|---|---|---|---|\n";
    for (const auto& seg : sw["segments"]) {
      md << "| " << text(seg["value"]) << " | " << text(seg["n_first"]) << " | " << text(seg["n_last"]) << " | "
         << text(seg["points"]) << " | " << text(seg["all_wrong"]) << " |\n";
    }
    md << "\n";
  }
  if (s.contains("anomaly")) {
    const auto& a = s["anomaly"];
    md << "Intruder detected at positions: " << join(a["detected_positions"]) << "; minimum intruder count "
       << text(a["min_bananas"]) << "; recency " << text(a["recency"]) << ".\n\n";
  }
  return md.str();
}

std::string report_markdown(const json& r) {
  std::ostringstream md;
  md << "# Diagnosis report: " << text(r["model_id"]) << "\n\n";
  md << "Verdict: **" << text(r["verdict"]["verdict"]) << "**\n\n";
  for (const auto& e : r["verdict"]["evidence"]) md << "- " << text(e["claim"]) << " (" << text(e["section"]) << ")\n";
  md << "\n";
  const auto& s = r["sections"];
  md << probe_markdown(s["probe"]) << lens_markdown(s["lens"]) << decomp_markdown(s["decomp"])
     << attention_markdown(s["attention"]) << behavior_markdown(s["behavior"]);
  return md.str();
}

std::string probe_csv(const json& s) {
  std::ostringstream csv;
  csv << "condition,layer,mae,r2,n_samples\n";
  for (const char* cond : {"repeated", "unique"}) {
    for (const auto& r : s.value(cond, json::array())) {
      csv << cond << ',' << text(r["layer"]) << ',' << text(r["mae"]) << ',' << text(r["r2"]) << ','
          << text(r["n_samples"]) << '\n';
    }
  }
  return csv.str();
}

std::string lens_csv(const json& s) {
  std::ostringstream csv;
  csv << "layer,depth_pct,top_digit,top1_token,is_numeric_top1,top5\n";
  for (const auto& l : s.value("layers", json::array())) {
    std::string t5;
    for (const auto& d : l["top5"]) t5 += (t5.empty() ? "" : " ") + text(d["digit"]);
    csv << text(l["layer"]) << ',' << text(l["depth_pct"]) << ',' << text(l["top_digit"]) << ','
        << text(l["top1_token"]) << ',' << (l["is_numeric_top1"].get<bool>() ? 1 : 0) << ',' << t5 << '\n';
  }
  return csv.str();
}

std::string decomp_csv(const json& s) {
  std::ostringstream csv;
  csv << "layer,before,post_attn,post_layer,label\n";
  for (const auto& r : s.value("records", json::array())) {
    csv << text(r["layer"]) << ',' << text(r["before"]) << ',' << text(r["post_attn"]) << ','
        << text(r["post_layer"]) << ',' << text(r["label"]) << '\n';
  }
  return csv.str();
}

std::string attention_csv(const json& s) {
  std::ostringstream csv;
  const bool has_anomaly = s.contains("anomaly");
  csv << "layer,entropy,uniformity,argmax_list_pos,span_mass,bos_dominant" << (has_anomaly ? ",intruder_ratio" : "")
      << '\n';
  const auto layers = s.value("layers", json::array());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    csv << text(l["layer"]) << ',' << text(l["entropy"]) << ',' << text(l["uniformity"]) << ','
        << text(l["argmax_list_pos"]) << ',' << text(l["span_mass"]) << ',' << (l["bos_dominant"].get<bool>() ? 1 : 0);
    if (has_anomaly) {
      const auto& ratios = s["anomaly"]["ratios"];
      csv << ',' << (i < ratios.size() ? text(ratios[i]) : "");
    }
    csv << '\n';
  }
  return csv.str();
}

ReportConfig report_config_from_json(const json& j, const fs::path& base_dir) {
  ReportConfig c;
  c.base_dir = base_dir;
  auto path = [&](const json& v) { return base_dir / v.get<std::string>(); };
  auto opt_path = [&](const json& obj, const char* key) -> std::optional<fs::path> {
    if (auto it = obj.find(key); it != obj.end() && !it->is_null()) return path(*it);
    return std::nullopt;
  };
  auto opt_int = [](const json& obj, const char* key) -> std::optional<int> {
    if (auto it = obj.find(key); it != obj.end() && !it->is_null()) return it->get<int>();
    return std::nullopt;
  };
  try {
    if (!j.is_object()) throw ConfigError("report config must be a JSON object");
    c.model_id = j.value("model_id", "");
    c.lambda = j.value("lambda", kDefaultRidgeLambda);
    c.r2_threshold = j.value("r2_threshold", kDefaultR2Threshold);
    c.ratio_threshold = j.value("ratio_threshold", kDefaultRatioThreshold);
    if (auto it = j.find("probe"); it != j.end()) c.probe = ProbeSource{opt_path(*it, "repeated"), opt_path(*it, "unique")};
    if (auto it = j.find("lens"); it != j.end()) c.lens = path(it->at("trace"));
    if (auto it = j.find("decomp"); it != j.end()) {
      c.decomp = DecompSource{path(it->at("trace")), opt_int(*it, "first"), opt_int(*it, "last"),
                              opt_int(*it, "attractor")};
    }
    if (auto it = j.find("attention"); it != j.end()) {
      AttentionSource a{opt_path(*it, "trace"), opt_path(*it, "p2"), opt_path(*it, "p1"),
                        opt_int(*it, "intruder_pos"), it->value("head_layers", std::vector<int>{})};
      if (a.p2 && !a.intruder_pos) throw ConfigError("attention.p2 requires intruder_pos");
      c.attention = a;
    }
    if (auto it = j.find("behavior"); it != j.end()) c.behavior = path(it->at("file"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report config: ") + e.what());
  }
  if (!(c.lambda > 0.0)) throw ConfigError("report config: lambda must be positive");
  return c;
}

ReportConfig load_report_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open report config");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return report_config_from_json(j, path.parent_path());
}

std::vector<ActivationTrace> load_trace_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "not a directory");
  std::vector<ActivationTrace> traces;
  for (const auto& p : list_trace_files(dir)) {
    traces.push_back(read_trace(p));
    validate(traces.back());
  }
  return traces;
}

ProbeDataset probe_dataset_from_dir(const fs::path& dir, ProbeCondition condition) {
  const auto traces = load_trace_dir(dir);
  std::vector<int> targets;
  for (const auto& t : traces) targets.push_back(list_count(t));
  return ProbeDataset::from_traces(traces, targets, condition);
}

namespace {

ActivationTrace load_checked(const fs::path& p) {
  auto t = read_trace(p);
  validate(t);
  return t;
}

std::optional<std::string> missing(const fs::path& p) {
  if (fs::exists(p)) return std::nullopt;
  return "missing input " + p.generic_string();
}

}  // namespace

ReportResult build_report(const ReportConfig& c) {
  ReportResult result;
  json sections = json::object();
  json errors = json::array();

  auto run = [&](const char* name, auto&& fn) {
    try {
      sections[name] = fn();
    } catch (const Error& e) {
      const bool config = dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e);
      if (result.exit_code == kExitOk) result.exit_code = config ? kExitConfig : kExitValidation;
      sections[name] = json{{"status", "error"}, {"error", e.what()}};
      errors.push_back({{"section", name}, {"error", e.what()}});
    }
  };

  std::optional<ProbeTable> probe;
  run("probe", [&]() -> json {
    if (!c.probe || !c.probe->repeated) return skipped_section("no probe traces configured");
    if (auto m = missing(*c.probe->repeated)) return skipped_section(*m);
    const auto rep = probe_dataset_from_dir(*c.probe->repeated, ProbeCondition::repeated);
    if (c.probe->unique && fs::exists(*c.probe->unique)) {
      probe = probe_all_layers(rep, probe_dataset_from_dir(*c.probe->unique, ProbeCondition::unique), c.lambda);
    } else {
      probe = probe_condition(rep, c.lambda);
    }
    return probe_section(*probe, c.r2_threshold);
  });

  std::optional<LensTrajectory> traj;
  std::optional<bool> behavior_correct;
  std::string model_id = c.model_id;
  run("lens", [&]() -> json {
    if (!c.lens) return skipped_section("no lens trace configured");
    if (auto m = missing(*c.lens)) return skipped_section(*m);
    const auto t = load_checked(*c.lens);
    if (model_id.empty()) model_id = t.meta.model_id;
    traj = trajectory(t);
    if (t.behavior && t.behavior->parsed_integer) behavior_correct = *t.behavior->parsed_integer == list_count(t);
    return lens_section(t, *traj);
  });

  std::vector<DecompRecord> records;
  run("decomp", [&]() -> json {
    if (!c.decomp) return skipped_section("no decomposition trace configured");
    if (auto m = missing(c.decomp->trace)) return skipped_section(*m);
    const auto t = load_checked(c.decomp->trace);
    const auto own = trajectory(t);
    std::optional<int> attractor = c.decomp->attractor;
    if (!attractor && t.behavior) attractor = t.behavior->parsed_integer;
    if (!attractor) attractor = own.final_answer_digit;
    if (!attractor) return skipped_section("no attractor: trace has no behavioral output or numeric final layer");
    records = decompose_range(t, c.decomp->first.value_or(1), c.decomp->last.value_or(t.meta.n_layers), *attractor);
    if (!behavior_correct && t.behavior && t.behavior->parsed_integer) {
      behavior_correct = *t.behavior->parsed_integer == list_count(t);
    }
    return decomp_section(t, records, *attractor, own.lockin_layer);
  });

  run("attention", [&]() -> json {
    if (!c.attention) return skipped_section("no attention traces configured");
    const auto& a = *c.attention;
    const auto main_path = a.trace ? a.trace : a.p2;
    if (!main_path) return skipped_section("no attention trace configured");
    if (auto m = missing(*main_path)) return skipped_section(*m);
    const auto t = load_checked(*main_path);
    const auto summary = layer_summaries(t);
    if (!a.p2) return attention_section(t, summary, nullptr, "");
    if (auto m = missing(*a.p2)) return skipped_section(*m);
    const auto p2 = load_checked(*a.p2);
    std::optional<ActivationTrace> p1;
    if (a.p1 && fs::exists(*a.p1)) p1 = load_checked(*a.p1);
    const auto anomaly =
        anomaly_ratios(p2, p1 ? &*p1 : nullptr, *a.intruder_pos, a.head_layers, c.ratio_threshold);
    return attention_section(t, summary, &anomaly, p2.prompt_label);
  });

  run("behavior", [&]() -> json {
    if (!c.behavior) return skipped_section("no behavioral data configured");
    if (auto m = missing(*c.behavior)) return skipped_section(*m);
    std::ifstream in(*c.behavior);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(c.behavior->string() + ": " + e.what());
    }
    return behavior_section(behavior_input_from_json(j));
  });

  const auto v = verdict(probe ? &*probe : nullptr, traj ? &*traj : nullptr, records, behavior_correct, c.r2_threshold);
  result.report = json{{"report_version", kReportVersion},
                       {"model_id", model_id},
                       {"sections", sections},
                       {"verdict", verdict_json(v, c.r2_threshold)},
                       {"errors", errors}};
  result.markdown = report_markdown(result.report);
  return result;
}

void write_report(const ReportResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto write = [&](const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError(p.string(), "cannot write");
    out << body;
  };
  write(out_dir / "report.json", result.report.dump(2) + "\n");
  write(out_dir / "report.md", result.markdown);
}

}  // namespace rscope
