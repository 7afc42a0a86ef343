// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/prompts.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "rscope/errors.hpp"

namespace rscope {

using nlohmann::json;

std::string_view to_string(Condition c) noexcept {
  switch (c) {
    case Condition::P1: return "P1";
    case Condition::P2: return "P2";
    case Condition::P3: return "P3";
  }
  return "?";
}

std::string_view to_string(Delimiter d) noexcept { return d == Delimiter::space ? "space" : "comma"; }

std::string_view to_string(Paraphrase p) noexcept {
  switch (p) {
    case Paraphrase::original: return "original";
    case Paraphrase::how_many: return "how_many";
    case Paraphrase::list_first: return "list_first";
    case Paraphrase::tally: return "tally";
    case Paraphrase::simple: return "simple";
  }
  return "?";
}

Condition condition_from_string(std::string_view s) {
  if (s == "P1") return Condition::P1;
  if (s == "P2") return Condition::P2;
  if (s == "P3") return Condition::P3;
  throw UsageError("unknown condition '" + std::string(s) + "'");
}

Delimiter delimiter_from_string(std::string_view s) {
  if (s == "space") return Delimiter::space;
  if (s == "comma") return Delimiter::comma;
  throw UsageError("unknown delimiter '" + std::string(s) + "'");
}

Paraphrase paraphrase_from_string(std::string_view s) {
  for (Paraphrase p : kAllParaphrases) {
    if (to_string(p) == s) return p;
  }
  throw UsageError("unknown paraphrase '" + std::string(s) + "'");
}

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.repeated[Paraphrase::original] =
      "Count the number of times \"{symbol}\" appears in this list: {list}. "
      "Respond only with the integer, nothing else.";
  t.repeated[Paraphrase::how_many] =
      "How many times does \"{symbol}\" appear in this list: {list}? "
      "Respond only with the integer, nothing else.";
  t.repeated[Paraphrase::list_first] =
      "{list}. Count the number of times \"{symbol}\" appears in the list above. "
      "Respond only with the integer, nothing else.";
  t.repeated[Paraphrase::tally] =
      "Tally the occurrences of \"{symbol}\" in this list: {list}. "
      "Respond only with the integer, nothing else.";
  t.repeated[Paraphrase::simple] = "Count \"{symbol}\": {list}. Answer with the integer only.";
  t.unique =
      "Count the number of words in this list: {list}. "
      "Respond only with the integer, nothing else.";
  return t;
}

PromptTemplates PromptTemplates::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("prompt templates must be a JSON object");
  PromptTemplates t = defaults();
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ConfigError("template '" + key + "' is not a string");
    const auto text = value.get<std::string>();
    if (text.find("{list}") == std::string::npos) throw ConfigError("template '" + key + "' lacks {list}");
    if (key == "unique") {
      t.unique = text;
    } else {
      try {
        t.repeated[paraphrase_from_string(key)] = text;
      } catch (const UsageError&) {
        throw ConfigError("unknown template key '" + key + "'");
      }
    }
  }
  return t;
}

const std::vector<std::string>& unique_word_vocabulary() {
  static const std::vector<std::string> words = {"cat",   "dog",  "house", "tree",  "car",
                                                 "book",  "chair", "river", "cloud", "stone",
                                                 "bird",  "table", "phone", "lamp",  "door"};
  return words;
}

namespace {

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string n_tag(int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "n%02d", n);
  return buf;
}

std::string base_label(Condition c, Delimiter d, int n) {
  return std::string(to_string(c)) + "." + std::string(to_string(d)) + "." + n_tag(n);
}

void render_text(PromptSpec& spec, const PromptTemplates& templates) {
  const std::string list = render_list(payload_tokens(spec), spec.delimiter);
  std::string tmpl;
  if (spec.condition == Condition::P3) {
    tmpl = templates.unique;
  } else {
    auto it = templates.repeated.find(spec.paraphrase);
    if (it == templates.repeated.end()) {
      throw ConfigError("no template for paraphrase " + std::string(to_string(spec.paraphrase)));
    }
    tmpl = it->second;
  }
  spec.text = replace_all(replace_all(std::move(tmpl), "{symbol}", spec.symbol), "{list}", list);
}

void check_common(int n, std::string_view symbol) {
  if (n < 1) throw UsageError("n must be >= 1");
  if (symbol.empty()) throw UsageError("symbol must be nonempty");
}

std::string with_prefix(std::string_view prefix, const std::string& label) {
  return std::string(prefix) + "." + label;
}

}  // namespace

std::vector<std::string> payload_tokens(const PromptSpec& spec) {
  if (spec.condition == Condition::P3) {
    const auto& words = unique_word_vocabulary();
    if (spec.n > static_cast<int>(words.size())) {
      throw UsageError("P3 supports at most " + std::to_string(words.size()) + " unique words");
    }
    return {words.begin(), words.begin() + spec.n};
  }
  std::vector<std::string> tokens(static_cast<std::size_t>(spec.n), spec.symbol);
  if (spec.intruder) {
    for (int i = 0; i < spec.intruder->count; ++i) {
      tokens[static_cast<std::size_t>(spec.intruder->position + i)] = spec.intruder->token;
    }
  }
  return tokens;
}

std::string render_list(const std::vector<std::string>& tokens, Delimiter delimiter) {
  const std::string_view sep = delimiter == Delimiter::space ? " " : ", ";
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

PromptSpec gen_condition(Condition condition, int n, Delimiter delimiter, std::string_view symbol,
                         const PromptTemplates& templates) {
  check_common(n, symbol);
  if (condition == Condition::P2) {
    return gen_intruder(n, delimiter, symbol, Intruder{std::min(kDefaultIntruderPosition, n - 1), "banana", 1},
                        templates);
  }
  PromptSpec spec;
  spec.condition = condition;
  spec.n = n;
  spec.delimiter = delimiter;
  spec.symbol = std::string(symbol);
  spec.expected_answer = n;
  spec.label = base_label(condition, delimiter, n);
  if (condition == Condition::P1 && symbol != "apple") spec.label += ".sym-" + spec.symbol;
  render_text(spec, templates);
  return spec;
}

PromptSpec gen_intruder(int n, Delimiter delimiter, std::string_view symbol, Intruder intruder,
                        const PromptTemplates& templates) {
  check_common(n, symbol);
  if (intruder.count < 1 || intruder.position < 0 || intruder.position + intruder.count > n) {
    throw UsageError("intruder block must lie inside the list");
  }
  PromptSpec spec;
  spec.condition = Condition::P2;
  spec.n = n;
  spec.delimiter = delimiter;
  spec.symbol = std::string(symbol);
  spec.expected_answer = n - intruder.count;
  spec.label = base_label(Condition::P2, delimiter, n);
  if (symbol != "apple") spec.label += ".sym-" + spec.symbol;
  const bool is_default = intruder.count == 1 && intruder.position == std::min(kDefaultIntruderPosition, n - 1);
  if (!is_default) {
    spec.label += intruder.count == 1 ? ".pos" + std::to_string(intruder.position)
                                      : ".k" + std::to_string(intruder.count) + "at" + std::to_string(intruder.position);
  }
  spec.intruder = std::move(intruder);
  render_text(spec, templates);
  return spec;
}

PromptSpec gen_paraphrase(Paraphrase paraphrase, int n, std::string_view symbol, const PromptTemplates& templates) {
  check_common(n, symbol);
  PromptSpec spec;
  spec.condition = Condition::P1;
  spec.n = n;
  spec.delimiter = Delimiter::space;
  spec.paraphrase = paraphrase;
  spec.symbol = std::string(symbol);
  spec.expected_answer = n;
  spec.label = base_label(Condition::P1, Delimiter::space, n);
  if (symbol != "apple") spec.label += ".sym-" + spec.symbol;
  spec.label += ".para-" + std::string(to_string(paraphrase));
  render_text(spec, templates);
  return spec;
}

std::vector<PromptSpec> gen_probe_suite(const PromptTemplates& templates) {
  std::vector<PromptSpec> out;
  for (int n = 3; n <= 15; ++n) {
    auto s = gen_condition(Condition::P1, n, Delimiter::space, "apple", templates);
    s.label = with_prefix("probe", s.label);
    out.push_back(std::move(s));
  }
  for (int n = 3; n <= 13; ++n) {
    auto s = gen_condition(Condition::P3, n, Delimiter::space, "apple", templates);
    s.label = with_prefix("probe", s.label);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PromptSpec> gen_sweeps(const PromptTemplates& templates) {
  std::vector<PromptSpec> out;
  auto push = [&out](std::string_view group, PromptSpec s) {
    s.label = with_prefix(group, s.label);
    out.push_back(std::move(s));
  };
  for (int n : kNSweep) push("nsweep", gen_condition(Condition::P1, n, Delimiter::space, "apple", templates));
  for (int n : kWriterSweep) push("writer", gen_condition(Condition::P1, n, Delimiter::space, "apple", templates));
  for (int pos = 0; pos <= 9; ++pos) {
    push("bpos", gen_intruder(10, Delimiter::space, "apple", Intruder{pos, "banana", 1}, templates));
  }
  for (int k = 1; k <= 5; ++k) {
    push("bcount", gen_intruder(10, Delimiter::space, "apple", Intruder{0, "banana", k}, templates));
  }
  for (const char* sym : kSymbolSweep) {
    push("symbol", gen_condition(Condition::P1, 10, Delimiter::space, sym, templates));
  }
  for (Paraphrase p : kAllParaphrases) push("para", gen_paraphrase(p, 10, "apple", templates));
  for (Condition c : {Condition::P1, Condition::P2, Condition::P3}) {
    for (Delimiter d : {Delimiter::space, Delimiter::comma}) {
      push("grid", gen_condition(c, 10, d, "apple", templates));
    }
  }
  auto all_bananas = gen_intruder(10, Delimiter::space, "apple", Intruder{0, "banana", 10}, templates);
  all_bananas.label = "allbanana";
  push("edge", std::move(all_bananas));
  auto all_apples = gen_condition(Condition::P1, 10, Delimiter::space, "apple", templates);
  all_apples.label = "allapple";
  push("edge", std::move(all_apples));
  auto single = gen_condition(Condition::P1, 1, Delimiter::space, "apple", templates);
  single.label = "singleapple";
  push("edge", std::move(single));
  return out;
}

json to_json(const PromptSpec& spec) {
  json j;
  j["label"] = spec.label;
  j["condition"] = std::string(to_string(spec.condition));
  j["n"] = spec.n;
  j["delimiter"] = std::string(to_string(spec.delimiter));
  j["paraphrase"] = std::string(to_string(spec.paraphrase));
  j["symbol"] = spec.symbol;
  if (spec.intruder) {
    j["intruder"] = json{{"position", spec.intruder->position}, {"token", spec.intruder->token},
                         {"count", spec.intruder->count}};
  } else {
    j["intruder"] = nullptr;
  }
  j["expected_answer"] = spec.expected_answer;
  j["text"] = spec.text;
  return j;
}

PromptSpec prompt_spec_from_json(const json& j) {
  try {
    PromptSpec s;
    s.label = j.at("label").get<std::string>();
    s.condition = condition_from_string(j.at("condition").get<std::string>());
    s.n = j.at("n").get<int>();
    s.delimiter = delimiter_from_string(j.at("delimiter").get<std::string>());
    s.paraphrase = paraphrase_from_string(j.at("paraphrase").get<std::string>());
    s.symbol = j.at("symbol").get<std::string>();
    if (const auto& in = j.at("intruder"); !in.is_null()) {
      s.intruder = Intruder{in.at("position").get<int>(), in.at("token").get<std::string>(), in.at("count").get<int>()};
    }
    s.expected_answer = j.at("expected_answer").get<int>();
    s.text = j.at("text").get<std::string>();
    if (s.condition == Condition::P2 && !s.intruder) throw ConfigError(s.label + ": P2 spec without intruder");
    const int expected = s.intruder ? s.n - s.intruder->count : s.n;
    if (s.expected_answer != expected) throw ConfigError(s.label + ": expected_answer inconsistent with n/intruder");
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("prompt spec: ") + e.what());
  }
}

std::string to_jsonl(const std::vector<PromptSpec>& specs) {
  std::string out;
  for (const auto& s : specs) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<PromptSpec> from_jsonl(std::string_view text) {
  std::vector<PromptSpec> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prompt_spec_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("prompt spec line: ") + e.what());
    }
  }
  return out;
}

}  // namespace rscope
