// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/report.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "rscope/container.hpp"
#include "rscope/errors.hpp"
#include "rscope/fixture.hpp"
#include "test_util.hpp"

namespace rscope {
namespace {

using nlohmann::json;

ProbeTable probe_table(std::vector<double> r2_by_layer) {
  ProbeTable t;
  for (std::size_t i = 0; i < r2_by_layer.size(); ++i) {
    t.repeated.push_back({static_cast<int>(i), 0.1, r2_by_layer[i], 13, 1.0});
  }
  return t;
}

LensTrajectory locked(int n_layers, int lockin, int numeric_from = 1) {
  LensTrajectory traj;
  traj.n_layers = n_layers;
  traj.lockin_layer = lockin;
  traj.lockin_depth_pct = depth_pct(lockin, n_layers);
  traj.numeric_from_layer = numeric_from;
  return traj;
}

TEST(Verdict, CorrectOutputIsSolved) {
  EXPECT_EQ(verdict(nullptr, nullptr, {}, true).verdict, Verdict::solved);
}

TEST(Verdict, RoutingFailure) {
  const auto probe = probe_table({0.1, 0.99, 0.99, 0.99, 0.99, 0.99, 0.99, 0.99, 0.99});
  const auto traj = locked(8, 5);
  const std::vector<DecompRecord> records = {{4, {}, WriterLabel::stable}, {5, {}, WriterLabel::mlp_writes}};
  const auto v = verdict(&probe, &traj, records, false);
  EXPECT_EQ(v.verdict, Verdict::routing_failure);
  ASSERT_EQ(v.evidence.size(), 3u);
  EXPECT_EQ(v.evidence[0].claim, "probe R2 0.99 at lock-in layer 5 (threshold 0.95)");
  EXPECT_EQ(v.evidence[1].claim, "lock-in at layer 5, depth 62.5%");
  EXPECT_EQ(v.evidence[2].claim, "MLP writer at layer 5, depth 62.5%");
}

TEST(Verdict, RoutingNeedsDecodableCount) {
  const auto probe = probe_table({0.1, 0.99, 0.99, 0.99, 0.5, 0.99, 0.99, 0.99, 0.99});
  const auto traj = locked(8, 4);
  const std::vector<DecompRecord> records = {{4, {}, WriterLabel::mlp_writes}};
  EXPECT_EQ(verdict(&probe, &traj, records, false).verdict, Verdict::inconclusive);
  EXPECT_EQ(verdict(&probe, &traj, records, false, 0.4).verdict, Verdict::routing_failure);
}

TEST(Verdict, RoutingNeedsWriterAfterNumericFrom) {
  const auto probe = probe_table(std::vector<double>(9, 0.99));
  const auto traj = locked(8, 5, 6);
  const std::vector<DecompRecord> records = {{5, {}, WriterLabel::mlp_writes}};
  EXPECT_NE(verdict(&probe, &traj, records, false).verdict, Verdict::routing_failure);
}

TEST(Verdict, RepresentationFailure) {
  const auto probe = probe_table({0.1, 0.99, 0.99, 0.99, 0.99, 0.5, 0.6, 0.7, 0.8});
  const auto v = verdict(&probe, nullptr, {}, false);
  EXPECT_EQ(v.verdict, Verdict::representation_failure);
  EXPECT_EQ(v.evidence[0].claim, "best late-layer probe R2 0.8 below threshold 0.95");
  EXPECT_EQ(verdict(&probe, nullptr, {}, std::nullopt).verdict, Verdict::inconclusive);
}

TEST(Verdict, Strings) {
  EXPECT_EQ(to_string(Verdict::representation_failure), "representation_failure");
  EXPECT_EQ(to_string(Verdict::routing_failure), "routing_failure");
  EXPECT_EQ(to_string(Verdict::solved), "solved");
  EXPECT_EQ(to_string(Verdict::inconclusive), "inconclusive");
}

TEST(Number, RoundsToSixDecimals) {
  EXPECT_EQ(number(78.57142857142857).dump(), "78.571429");
  EXPECT_EQ(number(87.5).dump(), "87.5");
  EXPECT_EQ(number(2.0).dump(), "2.0");
  EXPECT_EQ(number(INFINITY), "inf");
  EXPECT_EQ(number(-INFINITY), "-inf");
  EXPECT_TRUE(number(NAN).is_null());
}

// Numbers that stand alone in text: a digit run not glued to a preceding
// letter, underscore or hyphenated word.
std::vector<double> numbers_in(const std::string& s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    bool glued = false;
    if (start > 0) {
      const char p = s[start - 1];
      if (std::isalnum(static_cast<unsigned char>(p)) || p == '_' || p == '.') glued = true;
      if (p == '-') {
        if (start > 1 && (std::isalnum(static_cast<unsigned char>(s[start - 2])) || s[start - 2] == '_')) {
          glued = true;
        } else {
          start -= 1;
        }
      }
    }
    std::size_t end = i;
    while (end < s.size() && (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.' || s[end] == 'e' ||
                              (s[end] == '-' && end > 0 && s[end - 1] == 'e'))) {
      ++end;
    }
    while (end > i && (s[end - 1] == '.' || s[end - 1] == 'e')) --end;
    if (!glued) out.push_back(std::stod(s.substr(start, end - start)));
    i = end;
  }
  return out;
}

void collect_json_numbers(const json& j, std::set<double>& into) {
  if (j.is_number()) {
    into.insert(j.get<double>());
  } else if (j.is_string()) {
    for (double v : numbers_in(j.get<std::string>())) into.insert(v);
  } else if (j.is_structured()) {
    for (const auto& v : j) collect_json_numbers(v, into);
  }
}

class BundleReport : public ::testing::Test {
 protected:
  static ReportResult build(const FixtureConfig& cfg, const std::filesystem::path& dir) {
    BundleOptions opts;
    opts.n_min = 3;
    opts.n_max = 15;
    opts.focus_n = 10;
    return build_report(load_report_config(write_bundle(cfg, dir, opts)));
  }
};

TEST_F(BundleReport, PlantedWriterIsRoutingFailure) {
  testutil::TempDir dir("report");
  const auto result = build(testutil::writer_config(16, 14), dir.path());
  const auto& r = result.report;
  EXPECT_EQ(result.exit_code, kExitOk);
  EXPECT_EQ(r["verdict"]["verdict"], "routing_failure");
  EXPECT_EQ(r["sections"]["lens"]["lockin_layer"], 14);
  EXPECT_EQ(r["sections"]["lens"]["lockin_depth_pct"].get<double>(), 87.5);
  EXPECT_EQ(r["sections"]["decomp"]["writer_layers"], json::array({14}));
  EXPECT_EQ(r["sections"]["decomp"]["planned_ablations"], json::array({"14:mlp:zero"}));
  EXPECT_EQ(r["sections"]["attention"]["status"], "ok");
  EXPECT_EQ(r["sections"]["behavior"]["status"], "skipped");
  EXPECT_EQ(r["model_id"], "fixture");
  EXPECT_TRUE(r["errors"].empty());
  EXPECT_NE(result.markdown.find("routing_failure"), std::string::npos);
}

TEST_F(BundleReport, NoWriterIsSolved) {
  testutil::TempDir dir("solved");
  const auto result = build(testutil::small_config(), dir.path());
  EXPECT_EQ(result.report["verdict"]["verdict"], "solved");
  EXPECT_EQ(result.exit_code, kExitOk);
}

TEST_F(BundleReport, MarkdownNumbersAppearInJson) {
  testutil::TempDir dir("mdjson");
  const auto result = build(testutil::writer_config(16, 14), dir.path());
  std::set<double> in_json;
  collect_json_numbers(result.report, in_json);
  const auto md_numbers = numbers_in(result.markdown);
  EXPECT_GT(md_numbers.size(), 50u);
  for (double v : md_numbers) EXPECT_TRUE(in_json.count(v)) << v;
}

TEST_F(BundleReport, DeterministicAcrossRuns) {
  testutil::TempDir a("det-a");
  testutil::TempDir b("det-b");
  const auto cfg = testutil::writer_config(16, 14);
  const auto ra = build(cfg, a.path());
  const auto rb = build(cfg, b.path());
  EXPECT_EQ(ra.report.dump(), rb.report.dump());
  EXPECT_EQ(ra.markdown, rb.markdown);
  write_report(ra, a / "out");
  std::ifstream in(a / "out" / "report.json");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(json::parse(ss.str()), ra.report);
  EXPECT_TRUE(std::filesystem::exists(a / "out" / "report.md"));
}

TEST(Report, ProbeOnlySkipsTheRest) {
  testutil::TempDir dir("probe-only");
  write_bundle(testutil::small_config(), dir.path());
  const auto cfg = report_config_from_json(json{{"probe", {{"repeated", "probe/repeated"}}}}, dir.path());
  const auto result = build_report(cfg);
  EXPECT_EQ(result.exit_code, kExitOk);
  for (const char* s : {"lens", "decomp", "attention", "behavior"}) {
    EXPECT_EQ(result.report["sections"][s]["status"], "skipped") << s;
  }
  EXPECT_EQ(result.report["sections"]["probe"]["status"], "ok");
  EXPECT_EQ(result.report["verdict"]["verdict"], "inconclusive");
}

TEST(Report, MissingInputIsSkipped) {
  testutil::TempDir dir("missing");
  const auto cfg = report_config_from_json(json{{"lens", {{"trace", "nope.rscope"}}}}, dir.path());
  const auto result = build_report(cfg);
  EXPECT_EQ(result.exit_code, kExitOk);
  EXPECT_EQ(result.report["sections"]["lens"]["status"], "skipped");
}

TEST(Report, CorruptTraceIsAnError) {
  testutil::TempDir dir("corrupt");
  std::ofstream(dir / "bad.rscope", std::ios::binary) << "RSCOPE01garbage";
  const auto cfg = report_config_from_json(json{{"lens", {{"trace", "bad.rscope"}}}}, dir.path());
  const auto result = build_report(cfg);
  EXPECT_EQ(result.exit_code, kExitValidation);
  EXPECT_EQ(result.report["sections"]["lens"]["status"], "error");
  EXPECT_EQ(result.report["errors"].size(), 1u);
}

TEST(Report, BehaviorSection) {
  testutil::TempDir dir("behave");
  json input{{"records", {{{"condition", "P1"}, {"delimiter", "space"}, {"output", "8"}, {"expected", 10}}}},
             {"sweep", {{{"n", 5}, {"output", 5}}, {{"n", 6}, {"output", 8}}, {{"n", 7}, {"output", 8}}}},
             {"positions", {{{"position", 7}, {"output", 9}}}},
             {"counts", {{{"k", 2}, {"output", 8}}}}};
  std::ofstream(dir / "behavior.json") << input.dump();
  const auto cfg = report_config_from_json(json{{"behavior", {{"file", "behavior.json"}}}}, dir.path());
  const auto result = build_report(cfg);
  const auto& s = result.report["sections"]["behavior"];
  EXPECT_EQ(s["accuracy"]["type"], "C");
  EXPECT_EQ(s["accuracy"]["cells"][0]["attractor"], 8);
  EXPECT_EQ(s["sweep"]["attractor_values"], json::array({8}));
  EXPECT_EQ(s["anomaly"]["detected_positions"], json::array({7}));
  EXPECT_EQ(s["anomaly"]["min_bananas"], 2);
}

TEST(Report, ConfigErrors) {
  EXPECT_THROW(report_config_from_json(json::array(), "."), ConfigError);
  EXPECT_THROW(report_config_from_json(json{{"lambda", -1.0}}, "."), ConfigError);
  EXPECT_THROW(report_config_from_json(json{{"attention", {{"p2", "x.rscope"}}}}, "."), ConfigError);
  EXPECT_THROW(report_config_from_json(json{{"lens", {{"file", "x"}}}}, "."), ConfigError);
  EXPECT_THROW(load_report_config("/nonexistent/config.json"), ConfigError);
}

TEST(Report, CsvAndMarkdownRenderers) {
  const auto t = generate(testutil::writer_config(16, 14), 10);
  const auto traj = trajectory(t);
  const auto lens = lens_section(t, traj);
  const auto csv = lens_csv(lens);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
  EXPECT_NE(lens_markdown(lens).find("87.5"), std::string::npos);
  const auto records = decompose_range(t, 12, 16, 8);
  const auto decomp = decomp_section(t, records, 8, traj.lockin_layer);
  EXPECT_NE(decomp_csv(decomp).find("MLP_WRITES"), std::string::npos);
  EXPECT_NE(decomp_markdown(decomp).find("| 14 |"), std::string::npos);
}

}  // namespace
}  // namespace rscope
