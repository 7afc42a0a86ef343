// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "rscope/container.hpp"
#include "rscope/errors.hpp"
#include "rscope/prompts.hpp"
#include "rscope/rng.hpp"

namespace rscope {

using nlohmann::json;

namespace {

constexpr std::int64_t kBosId = 0;
constexpr std::int64_t kTextId = 1;
constexpr std::int64_t kSymbolId = 2;
constexpr std::int64_t kIntruderId = 3;
constexpr std::int64_t kUniqueBase = 4;
constexpr double kOtherRowScale = 0.05;

// Stream tags for derive_seed.
constexpr std::uint64_t kTagBasis = 1;
constexpr std::uint64_t kTagRows = 2;
constexpr std::uint64_t kTagCount = 3;
constexpr std::uint64_t kTagNoise = 4;

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) { return std::inner_product(a.begin(), a.end(), b.begin(), 0.0); }

void axpy(double a, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

Vec gaussian(SplitMix64& rng, int d, double sigma) {
  Vec v(static_cast<std::size_t>(d));
  for (double& x : v) x = sigma * rng.normal();
  return v;
}

void project_out(Vec& v, const std::vector<Vec>& basis) {
  for (const auto& b : basis) axpy(-dot(v, b), b, v);
}

Vec orthonormal_draw(SplitMix64& rng, int d, const std::vector<Vec>& basis) {
  for (;;) {
    Vec v = gaussian(rng, d, 1.0);
    project_out(v, basis);
    project_out(v, basis);
    const double norm = std::sqrt(dot(v, v));
    if (norm > 1e-6) {
      for (double& x : v) x /= norm;
      return v;
    }
  }
}

std::uint64_t condition_tag(ProbeCondition c) { return c == ProbeCondition::repeated ? 1 : 2; }

/// Orthonormal directions shared by every trace of one config.
struct Geometry {
  std::map<int, Vec> digit;
  Vec text;
  Vec count;
  Vec background;
  /// Digit and text directions; noise is kept out of them.
  std::vector<Vec> lens_basis;
  UnembedBlock unembed;
};

Geometry build_geometry(const FixtureConfig& c) {
  Geometry g;
  const int d = c.d_model;
  SplitMix64 basis_rng(derive_seed(c.digit_embedding_seed, {kTagBasis}));
  std::vector<Vec> basis;
  for (int v : c.digit_values) {
    g.digit[v] = orthonormal_draw(basis_rng, d, basis);
    basis.push_back(g.digit[v]);
  }
  g.text = orthonormal_draw(basis_rng, d, basis);
  basis.push_back(g.text);
  g.lens_basis = basis;

  SplitMix64 count_rng(derive_seed(c.count_direction_seed, {kTagCount}));
  g.count = orthonormal_draw(count_rng, d, basis);
  basis.push_back(g.count);
  g.background = orthonormal_draw(count_rng, d, basis);

  g.unembed.unembed.assign(static_cast<std::size_t>(c.vocab_size) * d, 0.0f);
  g.unembed.final_norm_weight.assign(static_cast<std::size_t>(d), 1.0f);
  SplitMix64 row_rng(derive_seed(c.digit_embedding_seed, {kTagRows}));
  for (int id = 0; id < c.vocab_size; ++id) {
    Vec row;
    if (id == kTextId) {
      row = g.text;
    } else if (id >= c.digit_token_base && g.digit.count(id - c.digit_token_base)) {
      row = g.digit.at(id - c.digit_token_base);
    } else {
      row = orthonormal_draw(row_rng, d, basis);
      for (double& x : row) x *= kOtherRowScale;
    }
    for (int k = 0; k < d; ++k) {
      g.unembed.unembed[static_cast<std::size_t>(id) * d + k] = static_cast<float>(row[static_cast<std::size_t>(k)]);
    }
  }
  return g;
}

/// Component state of the simulated residual stream.
struct Stream {
  double text = 0.0;
  double count = 0.0;
  std::map<int, double> digits;
  Vec noise;

  std::optional<int> top_digit() const {
    std::optional<int> best;
    double best_score = 0.0;
    for (const auto& [v, s] : digits) {
      if (s > best_score) {
        best = v;
        best_score = s;
      }
    }
    return best;
  }
};

std::vector<float> compose(const Geometry& g, const Stream& s) {
  Vec x = g.background;
  axpy(s.text, g.text, x);
  axpy(s.count, g.count, x);
  for (const auto& [v, coef] : s.digits) axpy(coef, g.digit.at(v), x);
  axpy(1.0, s.noise, x);
  return {x.begin(), x.end()};
}

double sigma_for(const FixtureConfig& c, ProbeCondition condition) {
  auto it = c.condition_noise.find(std::string(to_string(condition)));
  return it != c.condition_noise.end() ? it->second : c.count_noise_sigma;
}

Vec draw_noise(const FixtureConfig& c, const Geometry& g, int n, ProbeCondition condition, int layer) {
  SplitMix64 rng(derive_seed(c.count_direction_seed,
                             {kTagNoise, condition_tag(condition), static_cast<std::uint64_t>(n),
                              static_cast<std::uint64_t>(layer)}));
  Vec v = gaussian(rng, c.d_model, sigma_for(c, condition));
  project_out(v, g.lens_basis);
  return v;
}

std::vector<float> span_weights(const FixtureAttention& a, int head, int span) {
  std::vector<double> w(static_cast<std::size_t>(span), 0.0);
  auto uniform = [&] { std::fill(w.begin(), w.end(), 1.0 / span); };
  auto one_hot = [&] { w[static_cast<std::size_t>(a.position)] = 1.0; };
  switch (a.profile) {
    case AttentionProfile::uniform: uniform(); break;
    case AttentionProfile::one_hot: one_hot(); break;
    case AttentionProfile::mixture: head % 2 == 0 ? uniform() : one_hot(); break;
    case AttentionProfile::custom: {
      const auto& src = a.weights.at(static_cast<std::size_t>(head) % a.weights.size());
      if (static_cast<int>(src.size()) != span) {
        throw ConfigError("attention.weights: head rows must have one weight per list position (" +
                          std::to_string(span) + ")");
      }
      const double total = std::accumulate(src.begin(), src.end(), 0.0);
      for (int i = 0; i < span; ++i) w[static_cast<std::size_t>(i)] = src[static_cast<std::size_t>(i)] / total;
      break;
    }
  }
  return {w.begin(), w.end()};
}

AttentionLayer build_attention(const FixtureConfig& c, const TokenRecord& tokens) {
  const int seq = tokens.seq_len();
  const int span = tokens.list_span.size();
  const auto& a = c.attention;
  std::vector<int> prompt_positions;
  for (int t = 0; t < seq; ++t) {
    if (!tokens.list_span.contains(t) && !(tokens.bos_index && *tokens.bos_index == t)) prompt_positions.push_back(t);
  }
  const double bos = tokens.bos_index ? a.bos_mass : 0.0;
  const double prompt = prompt_positions.empty() ? 0.0 : a.prompt_mass;
  const double span_share = 1.0 - bos - prompt;

  AttentionLayer layer;
  layer.n_heads = c.n_heads;
  layer.seq_len = seq;
  layer.weights.assign(static_cast<std::size_t>(c.n_heads) * seq, 0.0f);
  for (int h = 0; h < c.n_heads; ++h) {
    float* row = layer.weights.data() + static_cast<std::size_t>(h) * seq;
    const auto w = span_weights(a, h, span);
    for (int i = 0; i < span; ++i) {
      row[tokens.list_span.start + i] = static_cast<float>(span_share * w[static_cast<std::size_t>(i)]);
    }
    if (tokens.bos_index) row[*tokens.bos_index] += static_cast<float>(bos);
    for (int t : prompt_positions) row[t] += static_cast<float>(prompt / prompt_positions.size());
  }
  return layer;
}

TokenRecord build_tokens(const FixtureConfig& c, int n, ProbeCondition condition) {
  TokenRecord t;
  auto push = [&](std::int64_t id, std::string text) {
    t.token_ids.push_back(id);
    t.token_texts.push_back(std::move(text));
  };
  if (c.bos) {
    t.bos_index = 0;
    push(kBosId, "<bos>");
  }
  for (int i = 0; i < c.prefix_len; ++i) push(kTextId, "tok");
  t.list_span.start = t.seq_len();
  const auto& words = unique_word_vocabulary();
  for (int i = 0; i < n; ++i) {
    const bool intruder = std::count(c.intruder_positions.begin(), c.intruder_positions.end(), i) != 0;
    if (condition == ProbeCondition::unique) {
      const auto k = static_cast<std::size_t>(i) % words.size();
      push(kUniqueBase + static_cast<std::int64_t>(k), words[k]);
    } else if (intruder) {
      push(kIntruderId, "banana");
    } else {
      push(kSymbolId, "apple");
    }
  }
  t.list_span.end = t.seq_len();
  if (condition == ProbeCondition::repeated) {
    for (int p : c.intruder_positions) {
      if (p < n) t.intruder_positions.push_back(p);
    }
    std::sort(t.intruder_positions.begin(), t.intruder_positions.end());
  }
  for (int i = 0; i < c.suffix_len; ++i) push(kTextId, "tok");
  return t;
}

ActivationTrace simulate(const FixtureConfig& c, int n, ProbeCondition condition, const AblationSpec* ablation) {
  validate(c);
  if (n < 1) throw ConfigError("fixture: n must be positive");
  if (c.attention.profile == AttentionProfile::one_hot || c.attention.profile == AttentionProfile::mixture) {
    if (c.attention.position >= n) {
      throw ConfigError("attention.position " + std::to_string(c.attention.position) + " outside a list of " +
                        std::to_string(n));
    }
  }
  const Geometry g = build_geometry(c);

  ActivationTrace trace;
  trace.meta = ModelMeta{c.model_id, c.n_layers, c.d_model, c.n_heads, c.vocab_size, NormKind::rms, 1e-5};
  trace.tokens = build_tokens(c, n, condition);
  for (int v : c.digit_values) trace.digits.entries[v] = DigitEntry{{fixture_digit_token(c, v)}, true};
  trace.unembed = g.unembed;

  std::string label = "fixture." + std::string(to_string(condition)) + ".n";
  if (n < 10) label += '0';
  label += std::to_string(n);
  if (ablation) label += ".ablate-" + std::to_string(ablation->layer_index) + "-" + std::string(to_string(ablation->sublayer));
  trace.prompt_label = label;

  auto ablated = [&](int layer, Sublayer sub) {
    return ablation && ablation->layer_index == layer && ablation->sublayer == sub;
  };

  Stream s;
  s.text = c.text_scale;
  s.noise = draw_noise(c, g, n, condition, 0);
  trace.states.embedding_out = compose(g, s);

  const AttentionLayer attn = build_attention(c, trace.tokens);
  const int primary_wrong = c.writer ? c.writer->wrong_digit : 0;
  bool input_active = false;

  for (int layer = 1; layer <= c.n_layers; ++layer) {
    LayerState ls;
    ls.before = compose(g, s);

    if (!ablated(layer, Sublayer::attn)) {
      if (c.writer && c.writer->input_digit && input_active && layer == c.writer->layer + 1) {
        s.digits[*c.writer->input_digit] -= c.writer->input_bias;
        input_active = false;
      }
    }
    ls.post_attn = compose(g, s);

    if (!ablated(layer, Sublayer::mlp)) {
      if (layer == 1) {
        s.count += n * c.count_scale;
        if (trace.digits.contains(n)) s.digits[n] += c.count_bias;
        if (c.writer && c.writer->input_digit) {
          s.digits[*c.writer->input_digit] += c.writer->input_bias;
          input_active = true;
        }
      }
      if (layer == c.numeric_from_layer) s.text -= c.text_scale;
      if (c.writer && layer == c.writer->layer) s.digits[c.writer->wrong_digit] += c.writer->margin;
      if (c.secondary && layer == c.secondary->layer && s.top_digit() != primary_wrong) {
        s.digits[c.secondary->digit] += c.secondary->margin;
      }
      s.noise = draw_noise(c, g, n, condition, layer);
    }
    ls.post_layer = compose(g, s);
    trace.states.layers.push_back(std::move(ls));
    trace.attn.layers.push_back(attn);
  }

  const auto top = s.top_digit();
  trace.behavior = BehavioralRecord::from_text(std::to_string(top ? *top : n));
  return trace;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

std::string_view to_string(AttentionProfile p) noexcept {
  switch (p) {
    case AttentionProfile::uniform: return "uniform";
    case AttentionProfile::one_hot: return "one_hot";
    case AttentionProfile::mixture: return "mixture";
    case AttentionProfile::custom: return "custom";
  }
  return "?";
}

AttentionProfile attention_profile_from_string(std::string_view s) {
  for (auto p : {AttentionProfile::uniform, AttentionProfile::one_hot, AttentionProfile::mixture,
                 AttentionProfile::custom}) {
    if (to_string(p) == s) return p;
  }
  throw ConfigError("unknown attention profile '" + std::string(s) + "'");
}

void validate(const FixtureConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("fixture: " + what); };
  if (c.n_layers < 1) fail("n_layers must be positive");
  if (c.n_heads < 1) fail("n_heads must be positive");
  if (c.prefix_len < 0 || c.suffix_len < 0) fail("prefix_len and suffix_len must be nonnegative");
  if (c.digit_values.empty()) fail("digit_values is empty");
  std::set<int> digits(c.digit_values.begin(), c.digit_values.end());
  if (digits.size() != c.digit_values.size()) fail("digit_values has duplicates");
  if (*digits.begin() < DigitVocab::kMinValue || *digits.rbegin() > DigitVocab::kMaxValue) {
    fail("digit values must lie in 1..19");
  }
  if (c.d_model < static_cast<int>(digits.size()) + 3) {
    fail("d_model " + std::to_string(c.d_model) + " too small for " + std::to_string(digits.size()) + " digits");
  }
  if (c.digit_token_base < kUniqueBase + static_cast<int>(unique_word_vocabulary().size())) {
    fail("digit_token_base collides with word tokens");
  }
  if (c.digit_token_base + *digits.rbegin() >= c.vocab_size) fail("digit tokens exceed vocab_size");
  if (c.count_noise_sigma < 0.0) fail("count_noise_sigma must be nonnegative");
  for (const auto& [cond, sigma] : c.condition_noise) {
    if (cond != "repeated" && cond != "unique") fail("condition_noise key '" + cond + "'");
    if (sigma < 0.0) fail("condition_noise sigma must be nonnegative");
  }
  if (c.numeric_from_layer < 1 || c.numeric_from_layer > c.n_layers) fail("numeric_from_layer outside model depth");
  if (c.writer) {
    const auto& w = *c.writer;
    if (w.layer < 1 || w.layer > c.n_layers) fail("writer.layer outside [1, n_layers]");
    if (!(w.margin > 0.0)) fail("writer.margin must be positive");
    if (!digits.count(w.wrong_digit)) fail("writer.wrong_digit " + std::to_string(w.wrong_digit) + " not in digit vocab");
    if (w.input_digit && !digits.count(*w.input_digit)) fail("writer.input_digit not in digit vocab");
  }
  if (c.secondary) {
    if (!c.writer) fail("secondary writer requires a primary writer");
    if (c.secondary->layer <= c.writer->layer || c.secondary->layer > c.n_layers) {
      fail("secondary.layer must follow the primary writer");
    }
    if (!(c.secondary->margin > 0.0)) fail("secondary.margin must be positive");
    if (!digits.count(c.secondary->digit)) fail("secondary.digit not in digit vocab");
  }
  const auto& a = c.attention;
  if (a.bos_mass < 0.0 || a.prompt_mass < 0.0 || a.bos_mass + a.prompt_mass >= 1.0) {
    fail("attention bos_mass + prompt_mass must lie in [0, 1)");
  }
  if (a.position < 0) fail("attention.position must be nonnegative");
  if (a.profile == AttentionProfile::custom) {
    if (a.weights.empty()) fail("custom attention needs weights");
    for (const auto& row : a.weights) {
      if (std::any_of(row.begin(), row.end(), [](double w) { return !(w >= 0.0); })) fail("attention weights must be nonnegative");
      if (!(std::accumulate(row.begin(), row.end(), 0.0) > 0.0)) fail("attention weight rows need positive mass");
    }
  }
  for (int p : c.intruder_positions) {
    if (p < 0) fail("intruder positions must be nonnegative");
  }
}

FixtureConfig fixture_config_from_json(const json& j) {
  FixtureConfig c;
  try {
    read_opt(j, "model_id", c.model_id);
    read_opt(j, "n_layers", c.n_layers);
    read_opt(j, "d_model", c.d_model);
    read_opt(j, "n_heads", c.n_heads);
    read_opt(j, "vocab_size", c.vocab_size);
    read_opt(j, "prefix_len", c.prefix_len);
    read_opt(j, "suffix_len", c.suffix_len);
    read_opt(j, "bos", c.bos);
    read_opt(j, "digit_values", c.digit_values);
    read_opt(j, "digit_token_base", c.digit_token_base);
    read_opt(j, "count_direction_seed", c.count_direction_seed);
    read_opt(j, "digit_embedding_seed", c.digit_embedding_seed);
    read_opt(j, "count_noise_sigma", c.count_noise_sigma);
    read_opt(j, "count_scale", c.count_scale);
    read_opt(j, "count_bias", c.count_bias);
    read_opt(j, "text_scale", c.text_scale);
    read_opt(j, "numeric_from_layer", c.numeric_from_layer);
    read_opt(j, "condition_noise", c.condition_noise);
    read_opt(j, "intruder_positions", c.intruder_positions);
    if (auto it = j.find("writer"); it != j.end() && !it->is_null()) {
      FixtureWriter w;
      w.layer = it->at("layer").get<int>();
      w.wrong_digit = it->at("wrong_digit").get<int>();
      read_opt(*it, "margin", w.margin);
      if (auto in = it->find("input_digit"); in != it->end() && !in->is_null()) w.input_digit = in->get<int>();
      read_opt(*it, "input_bias", w.input_bias);
      c.writer = w;
    }
    if (auto it = j.find("secondary"); it != j.end() && !it->is_null()) {
      FixtureSecondary s;
      s.layer = it->at("layer").get<int>();
      s.digit = it->at("digit").get<int>();
      read_opt(*it, "margin", s.margin);
      c.secondary = s;
    }
    if (auto it = j.find("attention"); it != j.end()) {
      if (auto p = it->find("profile"); p != it->end()) c.attention.profile = attention_profile_from_string(p->get<std::string>());
      read_opt(*it, "position", c.attention.position);
      read_opt(*it, "bos_mass", c.attention.bos_mass);
      read_opt(*it, "prompt_mass", c.attention.prompt_mass);
      read_opt(*it, "weights", c.attention.weights);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fixture config: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const FixtureConfig& c) {
  json j{{"model_id", c.model_id},
         {"n_layers", c.n_layers},
         {"d_model", c.d_model},
         {"n_heads", c.n_heads},
         {"vocab_size", c.vocab_size},
         {"prefix_len", c.prefix_len},
         {"suffix_len", c.suffix_len},
         {"bos", c.bos},
         {"digit_values", c.digit_values},
         {"digit_token_base", c.digit_token_base},
         {"count_direction_seed", c.count_direction_seed},
         {"digit_embedding_seed", c.digit_embedding_seed},
         {"count_noise_sigma", c.count_noise_sigma},
         {"count_scale", c.count_scale},
         {"count_bias", c.count_bias},
         {"text_scale", c.text_scale},
         {"numeric_from_layer", c.numeric_from_layer},
         {"condition_noise", c.condition_noise},
         {"intruder_positions", c.intruder_positions},
         {"attention",
          {{"profile", to_string(c.attention.profile)},
           {"position", c.attention.position},
           {"bos_mass", c.attention.bos_mass},
           {"prompt_mass", c.attention.prompt_mass},
           {"weights", c.attention.weights}}}};
  if (c.writer) {
    j["writer"] = {{"layer", c.writer->layer},
                   {"wrong_digit", c.writer->wrong_digit},
                   {"margin", c.writer->margin},
                   {"input_digit", c.writer->input_digit ? json(*c.writer->input_digit) : json(nullptr)},
                   {"input_bias", c.writer->input_bias}};
  } else {
    j["writer"] = nullptr;
  }
  if (c.secondary) {
    j["secondary"] = {{"layer", c.secondary->layer}, {"digit", c.secondary->digit}, {"margin", c.secondary->margin}};
  } else {
    j["secondary"] = nullptr;
  }
  return j;
}

FixtureConfig load_fixture_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open fixture config");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return fixture_config_from_json(j);
}

ActivationTrace generate(const FixtureConfig& config, int n, ProbeCondition condition) {
  return simulate(config, n, condition, nullptr);
}

ActivationTrace apply_ablation(const FixtureConfig& config, const AblationSpec& spec, int n,
                               ProbeCondition condition) {
  validate_ablation(spec, config.n_layers);
  return simulate(config, n, condition, &spec);
}

std::filesystem::path write_bundle(const FixtureConfig& config, const std::filesystem::path& dir,
                                   const BundleOptions& options) {
  namespace fs = std::filesystem;
  if (options.n_min < 1 || options.n_max < options.n_min) throw ConfigError("bundle: invalid n range");
  fs::create_directories(dir);
  const fs::path weights = dir / "weights.rscope";
  const auto first = generate(config, options.focus_n);
  write_shared_weights(first.unembed, config.vocab_size, config.d_model, weights);

  auto write_set = [&](const fs::path& sub, ProbeCondition condition) {
    fs::create_directories(dir / sub);
    for (int n = options.n_min; n <= options.n_max; ++n) {
      const auto t = generate(config, n, condition);
      write_trace(t, dir / sub / (t.prompt_label + ".rscope"), WriteOptions{weights});
    }
  };
  write_set("probe/repeated", ProbeCondition::repeated);
  if (options.unique) write_set("probe/unique", ProbeCondition::unique);
  fs::create_directories(dir / "lens");
  write_trace(first, dir / "lens" / "focus.rscope", WriteOptions{weights});

  json report{{"model_id", config.model_id},
              {"probe", {{"repeated", "probe/repeated"}}},
              {"lens", {{"trace", "lens/focus.rscope"}}},
              {"decomp", {{"trace", "lens/focus.rscope"}}},
              {"attention", {{"trace", "lens/focus.rscope"}}}};
  if (options.unique) report["probe"]["unique"] = "probe/unique";
  const fs::path config_path = dir / "bundle.json";
  std::ofstream out(config_path);
  if (!out) throw IoError(config_path.string(), "cannot write report config");
  out << report.dump(2) << '\n';
  return config_path;
}

}  // namespace rscope
