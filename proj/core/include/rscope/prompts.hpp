// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Prompt suite generation. Specs are plain data handed to the capture shim
// as JSON lines and joined back to traces by label.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rscope {

enum class Condition { P1, P2, P3 };
enum class Delimiter { space, comma };
enum class Paraphrase { original, how_many, list_first, tally, simple };

std::string_view to_string(Condition c) noexcept;
std::string_view to_string(Delimiter d) noexcept;
std::string_view to_string(Paraphrase p) noexcept;
Condition condition_from_string(std::string_view s);
Delimiter delimiter_from_string(std::string_view s);
Paraphrase paraphrase_from_string(std::string_view s);

inline constexpr Paraphrase kAllParaphrases[] = {Paraphrase::original, Paraphrase::how_many,
                                                Paraphrase::list_first, Paraphrase::tally,
                                                Paraphrase::simple};

/// `count` intruders occupy list positions [position, position + count).
struct Intruder {
  int position = 0;
  std::string token = "banana";
  int count = 1;

  bool operator==(const Intruder&) const = default;
};

struct PromptSpec {
  std::string label;
  Condition condition = Condition::P1;
  int n = 0;
  Delimiter delimiter = Delimiter::space;
  Paraphrase paraphrase = Paraphrase::original;
  std::string symbol;
  std::optional<Intruder> intruder;
  int expected_answer = 0;
  std::string text;

  bool operator==(const PromptSpec&) const = default;
};

/// Instruction templates keyed by paraphrase. `{list}` is replaced by the
/// delimited payload and `{symbol}` by the counted token. P3 prompts use the
/// `unique` template instead.
struct PromptTemplates {
  std::map<Paraphrase, std::string> repeated;
  std::string unique;

  static PromptTemplates defaults();
  /// Overrides defaults from a JSON object {"original": "...", ..., "unique": "..."}.
  static PromptTemplates from_json(const nlohmann::json& j);
};

/// Fifteen common single-token nouns used for unique-word lists.
const std::vector<std::string>& unique_word_vocabulary();

inline constexpr int kDefaultIntruderPosition = 5;

/// Builds one prompt. P2 places a single "banana" at list position 5 (or the
/// last position when n <= 5). The label is "<cond>.<delim>.nNN".
PromptSpec gen_condition(Condition condition, int n, Delimiter delimiter, std::string_view symbol,
                         const PromptTemplates& templates = PromptTemplates::defaults());

/// P2 variant with an explicit intruder block.
PromptSpec gen_intruder(int n, Delimiter delimiter, std::string_view symbol, Intruder intruder,
                        const PromptTemplates& templates = PromptTemplates::defaults());

/// P1 under a paraphrased instruction.
PromptSpec gen_paraphrase(Paraphrase paraphrase, int n, std::string_view symbol,
                          const PromptTemplates& templates = PromptTemplates::defaults());

/// The list tokens of a spec in order.
std::vector<std::string> payload_tokens(const PromptSpec& spec);
/// The payload joined by the spec's delimiter, exactly as it appears in text.
std::string render_list(const std::vector<std::string>& tokens, Delimiter delimiter);

/// 13 repeated-token prompts (n = 3..15) then 11 unique-word prompts
/// (n = 3..13). Labels are prefixed "probe.".
std::vector<PromptSpec> gen_probe_suite(const PromptTemplates& templates = PromptTemplates::defaults());

/// Behavioral and mechanistic sweeps. Label prefixes name the group:
/// nsweep, writer, bpos, bcount, symbol, para, grid, edge.
std::vector<PromptSpec> gen_sweeps(const PromptTemplates& templates = PromptTemplates::defaults());

inline constexpr int kNSweep[] = {5, 6, 7, 8, 9, 10, 11, 12, 15, 20};
inline constexpr int kWriterSweep[] = {7, 8, 9, 10, 11, 12, 15};
inline constexpr const char* kSymbolSweep[] = {"apple", "cat", "the", "a", "X", "1", "0", "7"};

nlohmann::json to_json(const PromptSpec& spec);
PromptSpec prompt_spec_from_json(const nlohmann::json& j);

/// One compact JSON object per line.
std::string to_jsonl(const std::vector<PromptSpec>& specs);
std::vector<PromptSpec> from_jsonl(std::string_view text);

}  // namespace rscope
