// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Report assembly. Every analysis renders to a JSON section first; Markdown
// and CSV are projections of those sections, so each printed number also
// appears in report.json. Numbers are rounded to six decimals.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rscope/attn.hpp"
#include "rscope/behavior.hpp"
#include "rscope/decomp.hpp"
#include "rscope/lens.hpp"
#include "rscope/probes.hpp"

namespace rscope {

inline constexpr int kReportVersion = 1;
inline constexpr double kDefaultR2Threshold = 0.95;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitConfig = 3;

enum class Verdict { representation_failure, routing_failure, solved, inconclusive };

std::string_view to_string(Verdict v) noexcept;

struct Evidence {
  std::string claim;
  std::string section;
};

struct VerdictResult {
  Verdict verdict = Verdict::inconclusive;
  std::vector<Evidence> evidence;
};

/// routing_failure needs a lock-in layer, probe R^2 >= threshold at that
/// layer, and an MLP_WRITES record at or after numeric-from.
/// representation_failure needs R^2 < threshold at every late layer
/// (index > n_layers / 2) and a wrong output. A correct output is solved.
VerdictResult verdict(const ProbeTable* probe, const LensTrajectory* trajectory,
                      std::span<const DecompRecord> decomp, std::optional<bool> behavior_correct,
                      double r2_threshold = kDefaultR2Threshold);

/// Rounds to six decimals; infinities become "inf"/"-inf" and NaN null.
nlohmann::json number(double x);

nlohmann::json skipped_section(const std::string& reason);

nlohmann::json probe_section(const ProbeTable& table, double r2_threshold);
nlohmann::json lens_section(const ActivationTrace& trace, const LensTrajectory& trajectory);
nlohmann::json decomp_section(const ActivationTrace& trace, std::span<const DecompRecord> records, int attractor,
                              std::optional<int> lockin_layer);
nlohmann::json attention_section(const ActivationTrace& trace, const AttnSummary& summary,
                                 const AnomalyAttnSummary* anomaly, const std::string& anomaly_label);

struct BehaviorInput {
  std::vector<BehaviorRecord> records;
  std::vector<SweepPoint> sweep;
  std::vector<std::pair<int, std::optional<int>>> positions;
  std::vector<std::pair<int, std::optional<int>>> counts;
  int expected_base = 10;
};

/// {"records": [{condition, delimiter, output, expected}], "sweep": [{n, output}],
///  "positions": [{position, output}], "counts": [{k, output}], "expected_base"}
BehaviorInput behavior_input_from_json(const nlohmann::json& j);
nlohmann::json behavior_section(const BehaviorInput& input);

nlohmann::json verdict_json(const VerdictResult& v, double r2_threshold);

std::string probe_markdown(const nlohmann::json& section);
std::string lens_markdown(const nlohmann::json& section);
std::string decomp_markdown(const nlohmann::json& section);
std::string attention_markdown(const nlohmann::json& section);
std::string behavior_markdown(const nlohmann::json& section);
std::string report_markdown(const nlohmann::json& report);

std::string probe_csv(const nlohmann::json& section);
std::string lens_csv(const nlohmann::json& section);
std::string decomp_csv(const nlohmann::json& section);
std::string attention_csv(const nlohmann::json& section);

struct ProbeSource {
  std::optional<std::filesystem::path> repeated;
  std::optional<std::filesystem::path> unique;
};

struct DecompSource {
  std::filesystem::path trace;
  std::optional<int> first;
  std::optional<int> last;
  std::optional<int> attractor;
};

struct AttentionSource {
  std::optional<std::filesystem::path> trace;
  std::optional<std::filesystem::path> p2;
  std::optional<std::filesystem::path> p1;
  std::optional<int> intruder_pos;
  std::vector<int> head_layers;
};

/// Paths are resolved against the config file's directory.
struct ReportConfig {
  std::filesystem::path base_dir;
  std::string model_id;
  double lambda = kDefaultRidgeLambda;
  double r2_threshold = kDefaultR2Threshold;
  double ratio_threshold = kDefaultRatioThreshold;
  std::optional<ProbeSource> probe;
  std::optional<std::filesystem::path> lens;
  std::optional<DecompSource> decomp;
  std::optional<AttentionSource> attention;
  std::optional<std::filesystem::path> behavior;
};

ReportConfig report_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
/// Throws ConfigError for unreadable or malformed configs.
ReportConfig load_report_config(const std::filesystem::path& path);

struct ReportResult {
  nlohmann::json report;
  std::string markdown;
  int exit_code = kExitOk;
};

/// Runs every configured analysis. Missing inputs mark a section skipped;
/// invalid inputs mark it as an error and set a nonzero exit code.
ReportResult build_report(const ReportConfig& config);

/// Writes report.json and report.md into `out_dir`.
void write_report(const ReportResult& result, const std::filesystem::path& out_dir);

/// Loads every trace in `dir` (sorted by file name).
std::vector<ActivationTrace> load_trace_dir(const std::filesystem::path& dir);

/// Probe dataset from a trace directory; targets are each trace's list count.
ProbeDataset probe_dataset_from_dir(const std::filesystem::path& dir, ProbeCondition condition);

}  // namespace rscope
