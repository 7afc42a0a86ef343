// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rscope/attn.hpp"
#include "rscope/behavior.hpp"
#include "rscope/container.hpp"
#include "rscope/decomp.hpp"
#include "rscope/errors.hpp"
#include "rscope/fixture.hpp"
#include "rscope/lens.hpp"
#include "rscope/probes.hpp"
#include "rscope/prompts.hpp"
#include "rscope/report.hpp"

namespace rscope::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string traces;
  std::string out;
  double lambda = kDefaultRidgeLambda;
  double r2_threshold = kDefaultR2Threshold;
  double ratio_threshold = kDefaultRatioThreshold;
  std::string format = "json";
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError(p.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_file(const fs::path& p, const std::string& body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError(p.string(), "cannot write");
  out << body;
}

class Emitter {
 public:
  Emitter(const Globals& g, std::ostream& out) : g_(g), out_(out) {}

  /// Writes `name.<ext>` under --out, or prints to stdout.
  void emit(const std::string& name, const json& section, std::string (*md)(const json&),
            std::string (*csv)(const json&)) {
    std::string body;
    std::string ext = g_.format;
    if (g_.format == "md" && md) {
      body = md(section);
    } else if (g_.format == "csv" && csv) {
      body = csv(section);
    } else {
      body = section.dump(2) + "\n";
      ext = "json";
    }
    if (g_.out.empty()) {
      out_ << body;
    } else {
      const fs::path p = fs::path(g_.out) / (name + "." + ext);
      write_file(p, body);
      out_ << p.generic_string() << "\n";
    }
  }

 private:
  const Globals& g_;
  std::ostream& out_;
};

ActivationTrace load(const fs::path& p) {
  if (!fs::exists(p)) throw IoError(p.string(), "no such trace");
  auto t = read_trace(p);
  validate(t);
  return t;
}

std::vector<fs::path> trace_paths(const std::string& single, const std::string& dir) {
  if (!single.empty()) return {single};
  if (dir.empty()) throw UsageError("give --trace FILE or --traces DIR");
  if (!fs::is_directory(dir)) throw IoError(dir, "not a directory");
  return list_trace_files(dir);
}

std::string concat_md(const json& sections, std::string (*md)(const json&)) {
  std::string out;
  for (const auto& s : sections) out += md(s);
  return out;
}

std::optional<ProbeCondition> parse_condition(const std::string& s) {
  if (s == "repeated") return ProbeCondition::repeated;
  if (s == "unique") return ProbeCondition::unique;
  return std::nullopt;
}

std::string per_n_markdown(const json& s) {
  std::ostringstream md;
  md << "## Per-n writer input\n\nWriter layer " << s["writer_layer"].dump() << ", attractor " << s["attractor"].dump()
     << ".\n\n| n | h_before | h_post_attn | h_post_layer | Writer fired |\n|---|---|---|---|---|\n";
  for (const auto& r : s["rows"]) {
    auto cell = [](const json& v) { return v.is_null() ? std::string("-") : v.dump(); };
    md << "| " << r["n"].dump() << " | " << cell(r["before"]) << " | " << cell(r["post_attn"]) << " | "
       << cell(r["post_layer"]) << " | " << (r["writer_fired"].get<bool>() ? "yes" : "no") << " |\n";
  }
  md << "\nVerdict: " << s["verdict"].get<std::string>() << "\n";
  return md.str();
}

std::string ablation_markdown(const json& s) {
  std::ostringstream md;
  md << "## Ablation comparison\n\n| n | Normal | Ablated | Correct | Fixed | Shifted |\n|---|---|---|---|---|---|\n";
  for (const auto& r : s["rows"]) {
    auto cell = [](const json& v) { return v.is_null() ? std::string("-") : v.dump(); };
    md << "| " << r["n"].dump() << " | " << cell(r["normal"]) << " | " << cell(r["ablated"]) << " | "
       << r["correct"].dump() << " | " << (r["fixed"].get<bool>() ? "yes" : "no") << " | "
       << (r["shifted"].get<bool>() ? "yes" : "no") << " |\n";
  }
  return md.str();
}

json opt_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Residual-stream diagnostics for counting failures", "rscope"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--traces", g.traces, "Trace directory");
  app.add_option("--out", g.out, "Output directory");
  auto* lambda_opt = app.add_option("--lambda", g.lambda, "Ridge penalty")->check(CLI::PositiveNumber);
  auto* r2_opt = app.add_option("--r2-threshold", g.r2_threshold, "Probe R2 threshold");
  auto* ratio_opt = app.add_option("--ratio-threshold", g.ratio_threshold, "Intruder attention ratio threshold");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "md", "csv"}));

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check trace containers against every invariant");
  std::vector<std::string> validate_paths;
  validate_cmd->add_option("paths", validate_paths, "Trace files");

  // gen-fixture
  auto* fixture_cmd = app.add_subcommand("gen-fixture", "Generate synthetic traces");
  std::string fixture_config;
  std::vector<int> fixture_ns;
  std::string fixture_condition = "repeated";
  std::string fixture_ablate;
  bool fixture_bundle = false;
  bool fixture_dump = false;
  bool fixture_shared = false;
  BundleOptions bundle;
  fixture_cmd->add_option("--config", fixture_config, "Fixture config JSON");
  fixture_cmd->add_option("--n", fixture_ns, "List lengths to generate");
  fixture_cmd->add_option("--n-min", bundle.n_min, "Smallest n");
  fixture_cmd->add_option("--n-max", bundle.n_max, "Largest n");
  fixture_cmd->add_option("--focus-n", bundle.focus_n, "Bundle lens trace n");
  fixture_cmd->add_option("--condition", fixture_condition, "repeated or unique")
      ->check(CLI::IsMember({"repeated", "unique"}));
  fixture_cmd->add_option("--ablate", fixture_ablate, "LAYER:mlp|attn:zero");
  fixture_cmd->add_flag("--bundle", fixture_bundle, "Write a full report bundle");
  fixture_cmd->add_flag("--shared-weights", fixture_shared, "Store the unembedding once in weights.rscope");
  fixture_cmd->add_flag("--dump-config", fixture_dump, "Print the effective config and exit");

  // prompts
  auto* prompts_cmd = app.add_subcommand("prompts", "Emit prompt specs as JSON lines");
  std::string prompts_suite = "all";
  std::string prompts_templates;
  prompts_cmd->add_option("--suite", prompts_suite, "probe, sweeps or all")
      ->check(CLI::IsMember({"probe", "sweeps", "all"}));
  prompts_cmd->add_option("--templates", prompts_templates, "Template overrides JSON");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Leave-one-out ridge probes per layer");
  std::string probe_unique;
  probe_cmd->add_option("--unique", probe_unique, "Unique-word trace directory");

  // lens
  auto* lens_cmd = app.add_subcommand("lens", "Logit-lens trajectory");
  std::string lens_trace;
  lens_cmd->add_option("--trace", lens_trace, "Trace file");

  // decomp
  auto* decomp_cmd = app.add_subcommand("decomp", "Sublayer writer decomposition");
  std::string decomp_trace, decomp_normal, decomp_ablated;
  std::optional<int> decomp_first, decomp_last, decomp_attractor, decomp_writer, decomp_correct;
  bool decomp_per_n = false;
  decomp_cmd->add_option("--trace", decomp_trace, "Trace file");
  decomp_cmd->add_option("--first", decomp_first, "First layer");
  decomp_cmd->add_option("--last", decomp_last, "Last layer");
  decomp_cmd->add_option("--attractor", decomp_attractor, "Attractor digit");
  decomp_cmd->add_flag("--per-n", decomp_per_n, "Per-n writer input table over --traces");
  decomp_cmd->add_option("--writer-layer", decomp_writer, "Writer layer for --per-n");
  decomp_cmd->add_option("--normal", decomp_normal, "Unablated trace directory");
  decomp_cmd->add_option("--ablated", decomp_ablated, "Ablated trace directory");
  decomp_cmd->add_option("--correct", decomp_correct, "Correct answer for every n");

  // attn
  auto* attn_cmd = app.add_subcommand("attn", "Attention entropy, uniformity and intruder ratios");
  std::string attn_trace, attn_p1, attn_p2;
  std::optional<int> attn_intruder;
  std::vector<int> attn_head_layers;
  std::string attn_aggregation = "mean_distribution";
  attn_cmd->add_option("--trace", attn_trace, "Trace file");
  attn_cmd->add_option("--p2", attn_p2, "Intruder trace");
  attn_cmd->add_option("--p1", attn_p1, "Matching repeated trace");
  attn_cmd->add_option("--intruder-pos", attn_intruder, "Intruder list position");
  attn_cmd->add_option("--head-layers", attn_head_layers, "Layers for the per-head table");
  attn_cmd->add_option("--aggregation", attn_aggregation, "mean_distribution or mean_metrics")
      ->check(CLI::IsMember({"mean_distribution", "mean_metrics"}));

  // behave
  auto* behave_cmd = app.add_subcommand("behave", "Accuracy cells, attractor runs and intruder sweeps");
  std::string behave_input;
  behave_cmd->add_option("--input", behave_input, "Behavioral data JSON")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Assemble report.json and report.md");
  std::string report_config;
  report_cmd->add_option("--config", report_config, "Report config JSON")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "rscope: " << e.what() << "\n";
    return kExitConfig;
  }

  Emitter emitter(g, out);
  try {
    if (*validate_cmd) {
      std::vector<fs::path> paths(validate_paths.begin(), validate_paths.end());
      if (!g.traces.empty()) {
        if (!fs::is_directory(g.traces)) throw IoError(g.traces, "not a directory");
        for (auto& p : list_trace_files(g.traces)) paths.push_back(p);
      }
      if (paths.empty()) throw UsageError("nothing to validate");
      int failures = 0;
      for (const auto& p : paths) {
        try {
          const auto t = read_trace(p);
          validate(t);
          out << "OK   " << p.generic_string() << " (" << t.prompt_label << ")\n";
        } catch (const Error& e) {
          ++failures;
          out << "FAIL " << p.generic_string() << ": " << e.what() << "\n";
        }
      }
      return failures ? kExitValidation : kExitOk;
    }

    if (*fixture_cmd) {
      FixtureConfig config;
      if (!fixture_config.empty()) config = fixture_config_from_json(read_json_file(fixture_config));
      if (fixture_dump) {
        out << to_json(config).dump(2) << "\n";
        return kExitOk;
      }
      if (g.out.empty()) throw UsageError("gen-fixture needs --out DIR");
      if (fixture_bundle) {
        out << write_bundle(config, g.out, bundle).generic_string() << "\n";
        return kExitOk;
      }
      const auto condition = *parse_condition(fixture_condition);
      if (fixture_ns.empty()) {
        for (int n = bundle.n_min; n <= bundle.n_max; ++n) fixture_ns.push_back(n);
      }
      std::optional<AblationSpec> spec;
      if (!fixture_ablate.empty()) spec = parse_ablation(fixture_ablate);
      fs::create_directories(g.out);
      WriteOptions options;
      if (fixture_shared) {
        const auto weights = fs::path(g.out) / "weights.rscope";
        const auto t = generate(config, fixture_ns.front(), condition);
        write_shared_weights(t.unembed, config.vocab_size, config.d_model, weights);
        options.shared_weights = weights;
      }
      for (int n : fixture_ns) {
        const auto t = spec ? apply_ablation(config, *spec, n, condition) : generate(config, n, condition);
        const auto p = fs::path(g.out) / (t.prompt_label + ".rscope");
        write_trace(t, p, options);
        out << p.generic_string() << "\n";
      }
      return kExitOk;
    }

    if (*prompts_cmd) {
      auto templates = prompts_templates.empty() ? PromptTemplates::defaults()
                                                 : PromptTemplates::from_json(read_json_file(prompts_templates));
      std::vector<PromptSpec> specs;
      if (prompts_suite != "sweeps") specs = gen_probe_suite(templates);
      if (prompts_suite != "probe") {
        auto sweeps = gen_sweeps(templates);
        specs.insert(specs.end(), sweeps.begin(), sweeps.end());
      }
      const auto body = to_jsonl(specs);
      if (g.out.empty()) {
        out << body;
      } else {
        const auto p = fs::path(g.out) / "prompts.jsonl";
        write_file(p, body);
        out << p.generic_string() << "\n";
      }
      return kExitOk;
    }

    if (*probe_cmd) {
      if (g.traces.empty()) throw UsageError("probe needs --traces DIR");
      const auto rep = probe_dataset_from_dir(g.traces, ProbeCondition::repeated);
      const auto table = probe_unique.empty()
                             ? probe_condition(rep, g.lambda)
                             : probe_all_layers(rep, probe_dataset_from_dir(probe_unique, ProbeCondition::unique),
                                                g.lambda);
      emitter.emit("probe", probe_section(table, g.r2_threshold), probe_markdown, probe_csv);
      return kExitOk;
    }

    if (*lens_cmd) {
      const auto paths = trace_paths(lens_trace, g.traces);
      if (paths.size() == 1) {
        const auto t = load(paths.front());
        emitter.emit("lens", lens_section(t, trajectory(t)), lens_markdown, lens_csv);
      } else {
        json all = json::array();
        for (const auto& p : paths) {
          const auto t = load(p);
          all.push_back(lens_section(t, trajectory(t)));
        }
        if (g.format == "md") {
          Emitter(Globals{g.traces, g.out, g.lambda, g.r2_threshold, g.ratio_threshold, "md"}, out)
              .emit("lens", json{{"sections", all}},
                    [](const json& s) { return concat_md(s["sections"], lens_markdown); }, nullptr);
        } else {
          emitter.emit("lens", all, nullptr, nullptr);
        }
      }
      return kExitOk;
    }

    if (*decomp_cmd) {
      if (!decomp_normal.empty() || !decomp_ablated.empty()) {
        if (decomp_normal.empty() || decomp_ablated.empty()) throw UsageError("--normal and --ablated go together");
        OutputsByN normal, ablated;
        std::map<int, int> correct;
        auto collect = [&](const std::string& dir, OutputsByN& into) {
          for (const auto& t : load_trace_dir(dir)) {
            const int n = list_count(t);
            into[n] = t.behavior ? t.behavior->parsed_integer : std::nullopt;
            correct[n] = decomp_correct.value_or(n);
          }
        };
        collect(decomp_normal, normal);
        collect(decomp_ablated, ablated);
        json rows = json::array();
        for (const auto& r : compare_ablation(normal, ablated, correct)) {
          rows.push_back({{"n", r.n},
                          {"normal", opt_json(r.normal_output)},
                          {"ablated", opt_json(r.ablated_output)},
                          {"correct", r.correct},
                          {"fixed", r.fixed},
                          {"shifted", r.shifted}});
        }
        emitter.emit("ablation", json{{"status", "ok"}, {"rows", rows}}, ablation_markdown, nullptr);
        return kExitOk;
      }
      if (decomp_per_n) {
        if (!decomp_writer || !decomp_attractor) throw UsageError("--per-n needs --writer-layer and --attractor");
        if (g.traces.empty()) throw UsageError("--per-n needs --traces DIR");
        const auto traces = load_trace_dir(g.traces);
        std::vector<int> ns;
        for (const auto& t : traces) ns.push_back(list_count(t));
        const auto table = per_n_invariance(traces, ns, *decomp_writer, *decomp_attractor);
        json rows = json::array();
        for (const auto& r : table.rows) {
          rows.push_back({{"n", r.n},
                          {"before", opt_json(r.digits.before)},
                          {"post_attn", opt_json(r.digits.post_attn)},
                          {"post_layer", opt_json(r.digits.post_layer)},
                          {"writer_fired", r.writer_fired}});
        }
        emitter.emit("per_n",
                     json{{"status", "ok"},
                          {"writer_layer", table.writer_layer},
                          {"attractor", table.attractor},
                          {"rows", rows},
                          {"verdict", to_string(table.verdict)}},
                     per_n_markdown, nullptr);
        return kExitOk;
      }
      const auto paths = trace_paths(decomp_trace, g.traces);
      if (paths.size() != 1) throw UsageError("decomp needs exactly one trace");
      const auto t = load(paths.front());
      const auto traj = trajectory(t);
      std::optional<int> attractor = decomp_attractor;
      if (!attractor && t.behavior) attractor = t.behavior->parsed_integer;
      if (!attractor) attractor = traj.final_answer_digit;
      if (!attractor) throw UsageError("no attractor: pass --attractor");
      const auto records =
          decompose_range(t, decomp_first.value_or(1), decomp_last.value_or(t.meta.n_layers), *attractor);
      emitter.emit("decomp", decomp_section(t, records, *attractor, traj.lockin_layer), decomp_markdown, decomp_csv);
      return kExitOk;
    }

    if (*attn_cmd) {
      const auto agg = attn_aggregation == "mean_metrics" ? HeadAggregation::mean_metrics
                                                          : HeadAggregation::mean_distribution;
      const std::string main = !attn_trace.empty() ? attn_trace : attn_p2;
      const auto t = load(trace_paths(main, g.traces).front());
      const auto summary = layer_summaries(t, agg);
      if (attn_p2.empty()) {
        emitter.emit("attn", attention_section(t, summary, nullptr, ""), attention_markdown, attention_csv);
        return kExitOk;
      }
      if (!attn_intruder) throw UsageError("--p2 needs --intruder-pos");
      const auto p2 = load(attn_p2);
      std::optional<ActivationTrace> p1;
      if (!attn_p1.empty()) p1 = load(attn_p1);
      const auto anomaly = anomaly_ratios(p2, p1 ? &*p1 : nullptr, *attn_intruder, attn_head_layers, g.ratio_threshold);
      emitter.emit("attn", attention_section(t, summary, &anomaly, p2.prompt_label), attention_markdown,
                   attention_csv);
      return kExitOk;
    }

    if (*behave_cmd) {
      emitter.emit("behavior", behavior_section(behavior_input_from_json(read_json_file(behave_input))),
                   behavior_markdown, nullptr);
      return kExitOk;
    }

    if (*report_cmd) {
      auto config = load_report_config(report_config);
      if (lambda_opt->count()) config.lambda = g.lambda;
      if (r2_opt->count()) config.r2_threshold = g.r2_threshold;
      if (ratio_opt->count()) config.ratio_threshold = g.ratio_threshold;
      const auto result = build_report(config);
      const fs::path out_dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
      write_report(result, out_dir);
      out << "verdict: " << result.report["verdict"]["verdict"].get<std::string>() << "\n";
      for (const auto& e : result.report["errors"]) {
        err << "rscope: " << e["section"].get<std::string>() << ": " << e["error"].get<std::string>() << "\n";
      }
      out << (out_dir / "report.json").generic_string() << "\n" << (out_dir / "report.md").generic_string() << "\n";
      return result.exit_code;
    }
  } catch (const ConfigError& e) {
    err << "rscope: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "rscope: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "rscope: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "rscope: validation failed: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "rscope: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace rscope::cli
