// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/lens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rscope/errors.hpp"

namespace rscope {

std::string_view to_string(StateTag tag) noexcept {
  switch (tag) {
    case StateTag::before: return "before";
    case StateTag::post_attn: return "post_attn";
    case StateTag::post_layer: return "post_layer";
  }
  return "?";
}

std::string_view to_string(LockinTarget t) noexcept {
  switch (t) {
    case LockinTarget::behavioral: return "behavioral";
    case LockinTarget::inferred: return "inferred";
    case LockinTarget::unavailable: return "unavailable";
  }
  return "?";
}

namespace {

std::vector<double> normalize(std::span<const float> x, const LensInputs& lens) {
  const std::size_t d = x.size();
  std::vector<double> out(d);
  const auto& w = lens.unembed.final_norm_weight;
  if (lens.norm_kind == NormKind::rms) {
    double ss = 0.0;
    for (float v : x) ss += static_cast<double>(v) * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + lens.norm_eps);
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i] * inv * w[i];
  } else {
    double mean = 0.0;
    for (float v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + lens.norm_eps);
    const auto* b = lens.unembed.final_norm_bias ? &*lens.unembed.final_norm_bias : nullptr;
    for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * w[i] + (b ? (*b)[i] : 0.0);
  }
  return out;
}

double logit(const std::vector<double>& h, const LensInputs& lens, std::int64_t token) {
  const auto row = lens.unembed.row(token, lens.d_model);
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) s += row[i] * h[i];
  return s;
}

}  // namespace

DigitProjection project(std::span<const float> state, const LensInputs& lens, int layer_index, StateTag tag) {
  if (lens.digits.empty()) throw ConfigError("logit lens: empty digit vocabulary");
  if (static_cast<int>(state.size()) != lens.d_model) throw UsageError("logit lens: state length differs from d_model");
  for (float v : state) {
    if (!std::isfinite(v)) throw DataError("logit lens: non-finite state");
  }
  const auto h = normalize(state, lens);

  DigitProjection p;
  p.layer_index = layer_index;
  p.state_tag = tag;

  // Full-vocabulary argmax; lowest token id wins ties.
  double best = -std::numeric_limits<double>::infinity();
  for (std::int64_t t = 0; t < lens.vocab_size; ++t) {
    const double s = logit(h, lens, t);
    if (s > best) {
      best = s;
      p.top1_token = t;
    }
  }
  p.is_numeric_top1 = lens.digits.value_of(p.top1_token).has_value();

  std::vector<DigitScore> scores;
  scores.reserve(lens.digits.entries.size());
  for (const auto& [value, entry] : lens.digits.entries) {
    double s = -std::numeric_limits<double>::infinity();
    for (auto id : entry.token_ids) s = std::max(s, logit(h, lens, id));
    scores.push_back({value, s});
  }
  std::stable_sort(scores.begin(), scores.end(), [](const DigitScore& a, const DigitScore& b) {
    return a.score > b.score || (a.score == b.score && a.digit < b.digit);
  });
  p.top_digit = scores.front().digit;
  scores.resize(std::min<std::size_t>(5, scores.size()));
  p.top5 = std::move(scores);
  return p;
}

LensTrajectory trajectory(const ActivationTrace& trace) {
  const auto lens = LensInputs::of(trace);
  const int n_layers = trace.meta.n_layers;
  LensTrajectory traj;
  traj.n_layers = n_layers;
  for (int layer = 1; layer <= n_layers; ++layer) {
    traj.layers.push_back(project(trace.states.post_layer(layer), lens, layer, StateTag::post_layer));
  }

  for (int layer = n_layers; layer >= 1 && traj.layers[static_cast<std::size_t>(layer - 1)].is_numeric_top1; --layer) {
    traj.numeric_from_layer = layer;
  }

  const auto& last = traj.layers.back();
  if (trace.behavior && trace.behavior->parsed_integer) {
    const int answer = *trace.behavior->parsed_integer;
    if (trace.digits.contains(answer)) {
      traj.final_answer_digit = answer;
      traj.target_source = LockinTarget::behavioral;
    } else {
      traj.answer_unrepresentable = true;
    }
  } else if (last.is_numeric_top1) {
    traj.final_answer_digit = last.top_digit;
    traj.target_source = LockinTarget::inferred;
  }

  if (traj.final_answer_digit) {
    const int floor_layer = traj.numeric_from_layer.value_or(1);
    for (int layer = n_layers; layer >= floor_layer; --layer) {
      if (traj.layers[static_cast<std::size_t>(layer - 1)].top_digit != traj.final_answer_digit) break;
      traj.lockin_layer = layer;
    }
    if (traj.lockin_layer) traj.lockin_depth_pct = depth_pct(*traj.lockin_layer, n_layers);
  }
  return traj;
}

TopFiveCheck correct_in_top5(const LensTrajectory& trajectory, int correct_answer, const DigitVocab& digits) {
  TopFiveCheck check;
  check.representable = digits.contains(correct_answer);
  check.outranked.reserve(trajectory.layers.size());
  for (const auto& p : trajectory.layers) {
    const bool in_top5 = std::any_of(p.top5.begin(), p.top5.end(),
                                     [&](const DigitScore& s) { return s.digit == correct_answer; });
    check.outranked.push_back(check.representable && in_top5 && p.top_digit != correct_answer);
  }
  return check;
}

}  // namespace rscope
