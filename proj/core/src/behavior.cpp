// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/behavior.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "rscope/errors.hpp"

namespace rscope {

using nlohmann::json;

std::string_view to_string(ModelType t) noexcept {
  switch (t) {
    case ModelType::C: return "C";
    case ModelType::A: return "A";
    case ModelType::solved: return "solved";
    case ModelType::other: return "other";
  }
  return "?";
}

const AccuracyCell* AccuracyTable::find(Condition c, Delimiter d) const {
  for (const auto& cell : cells) {
    if (cell.condition == c && cell.delimiter == d) return &cell;
  }
  return nullptr;
}

AccuracyTable accuracy_table(std::span<const BehaviorRecord> records) {
  std::map<std::pair<Condition, Delimiter>, std::vector<const BehaviorRecord*>> groups;
  for (const auto& r : records) groups[{r.condition, r.delimiter}].push_back(&r);

  AccuracyTable table;
  for (const auto& [key, runs] : groups) {
    AccuracyCell cell;
    cell.condition = key.first;
    cell.delimiter = key.second;
    cell.runs = static_cast<int>(runs.size());
    int correct = 0;
    std::set<std::optional<int>> outputs;
    for (const auto* r : runs) {
      outputs.insert(r->output);
      if (r->output == r->expected) ++correct;
      if (!r->output) cell.unparseable = true;
    }
    cell.accuracy_pct = 100.0 * correct / cell.runs;
    cell.integrity_warning = outputs.size() > 1;
    if (cell.integrity_warning) {
      table.warnings.push_back(std::string(to_string(cell.condition)) + " " + std::string(to_string(cell.delimiter)) +
                               ": runs disagree under greedy decoding");
    }
    if (correct == 0 && outputs.size() == 1) cell.attractor = *outputs.begin();
    table.cells.push_back(cell);
  }

  auto fails = [&](Condition c) {
    return std::any_of(table.cells.begin(), table.cells.end(),
                       [&](const AccuracyCell& cell) { return cell.condition == c && cell.accuracy_pct < 100.0; });
  };
  if (fails(Condition::P1)) {
    table.type = ModelType::C;
  } else if (fails(Condition::P2)) {
    table.type = ModelType::A;
  } else if (fails(Condition::P3)) {
    table.type = ModelType::other;
  } else {
    table.type = ModelType::solved;
  }
  return table;
}

std::vector<SweepPoint> make_sweep(std::span<const std::pair<int, std::optional<int>>> outputs) {
  std::vector<SweepPoint> out;
  out.reserve(outputs.size());
  for (const auto& [n, output] : outputs) out.push_back({n, output, output == n});
  return out;
}

std::vector<AttractorSegment> Segmentation::attractors() const {
  std::vector<AttractorSegment> out;
  std::copy_if(segments.begin(), segments.end(), std::back_inserter(out),
               [](const AttractorSegment& s) { return s.all_wrong; });
  return out;
}

Segmentation segment_attractors(std::span<const SweepPoint> sweep) {
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    if (sweep[i].n <= sweep[i - 1].n) throw UsageError("sweep n values must be strictly increasing");
  }
  Segmentation out;
  for (const auto& p : sweep) {
    if (!p.correct && !out.first_failing_n) out.first_failing_n = p.n;
    if (!out.segments.empty() && out.segments.back().value == p.output) {
      auto& seg = out.segments.back();
      seg.n_last = p.n;
      ++seg.points;
      seg.all_wrong = seg.all_wrong && !p.correct;
    } else {
      out.segments.push_back({p.output, p.n, p.n, 1, !p.correct});
    }
  }
  return out;
}

json to_json(const Segmentation& s) {
  json segs = json::array();
  for (const auto& seg : s.segments) {
    segs.push_back(json{{"value", seg.value ? json(*seg.value) : json(nullptr)},
                        {"n_first", seg.n_first},
                        {"n_last", seg.n_last},
                        {"points", seg.points},
                        {"all_wrong", seg.all_wrong}});
  }
  return json{{"segments", segs},
              {"first_failing_n", s.first_failing_n ? json(*s.first_failing_n) : json(nullptr)}};
}

Segmentation segmentation_from_json(const json& j) {
  try {
    Segmentation s;
    for (const auto& seg : j.at("segments")) {
      AttractorSegment a;
      if (!seg.at("value").is_null()) a.value = seg.at("value").get<int>();
      a.n_first = seg.at("n_first").get<int>();
      a.n_last = seg.at("n_last").get<int>();
      a.points = seg.at("points").get<int>();
      a.all_wrong = seg.at("all_wrong").get<bool>();
      s.segments.push_back(a);
    }
    if (!j.at("first_failing_n").is_null()) s.first_failing_n = j.at("first_failing_n").get<int>();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("segmentation: ") + e.what());
  }
}

AnomalySummary anomaly_summary(std::span<const std::pair<int, std::optional<int>>> position_sweep,
                               std::span<const std::pair<int, std::optional<int>>> count_sweep, int expected_base) {
  AnomalySummary s;
  for (const auto& [pos, output] : position_sweep) {
    if (pos < 0 || pos > 9) throw UsageError("banana position must lie in 0..9");
    if (output != expected_base) s.detected_positions.push_back(pos);
  }
  std::sort(s.detected_positions.begin(), s.detected_positions.end());
  for (const auto& [k, output] : count_sweep) {
    if (k < 1 || k > 5) throw UsageError("banana count must lie in 1..5");
    if (output != expected_base && (!s.min_bananas || k < *s.min_bananas)) s.min_bananas = k;
  }
  s.recency = !s.detected_positions.empty() &&
              std::all_of(s.detected_positions.begin(), s.detected_positions.end(), [](int p) { return p >= 5; });
  return s;
}

}  // namespace rscope
