// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/attn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rscope/errors.hpp"

namespace rscope {

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double uniformity(std::span<const double> p) {
  if (p.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  return *hi > 0.0 ? *lo / *hi : 0.0;
}

int argmax(std::span<const double> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

namespace {

void require_span(const ActivationTrace& trace) {
  if (trace.tokens.list_span.size() <= 0) throw UsageError("attention: empty list span");
}

}  // namespace

std::optional<std::vector<double>> head_span_distribution(const ActivationTrace& trace, int layer, int head) {
  require_span(trace);
  const auto row = trace.attn.layer(layer).head(head);
  const auto& span = trace.tokens.list_span;
  std::vector<double> p(row.begin() + span.start, row.begin() + span.end);
  const double mass = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(mass > 0.0)) return std::nullopt;
  for (double& v : p) v /= mass;
  return p;
}

std::vector<double> span_distribution(const ActivationTrace& trace, int layer) {
  require_span(trace);
  const auto& al = trace.attn.layer(layer);
  std::vector<double> mean(static_cast<std::size_t>(trace.tokens.list_span.size()), 0.0);
  int used = 0;
  for (int h = 0; h < al.n_heads; ++h) {
    auto p = head_span_distribution(trace, layer, h);
    if (!p) continue;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*p)[i];
    ++used;
  }
  if (used == 0) {
    throw DegenerateError("attention layer " + std::to_string(layer) + ": no head attends to the list span");
  }
  for (double& v : mean) v /= used;
  const double total = std::accumulate(mean.begin(), mean.end(), 0.0);
  for (double& v : mean) v /= total;
  return mean;
}

AttnLayerSummary layer_summary(const ActivationTrace& trace, int layer, HeadAggregation agg) {
  const auto p = span_distribution(trace, layer);
  const auto& al = trace.attn.layer(layer);
  const auto& span = trace.tokens.list_span;

  std::vector<double> global(static_cast<std::size_t>(al.seq_len), 0.0);
  double span_mass = 0.0;
  for (int h = 0; h < al.n_heads; ++h) {
    const auto row = al.head(h);
    for (int t = 0; t < al.seq_len; ++t) global[static_cast<std::size_t>(t)] += row[static_cast<std::size_t>(t)];
    for (int t = span.start; t < span.end; ++t) span_mass += row[static_cast<std::size_t>(t)];
  }

  AttnLayerSummary s;
  s.layer_index = layer;
  if (agg == HeadAggregation::mean_distribution) {
    s.entropy = entropy(p);
    s.uniformity = uniformity(p);
  } else {
    int used = 0;
    for (int h = 0; h < al.n_heads; ++h) {
      if (auto ph = head_span_distribution(trace, layer, h)) {
        s.entropy += entropy(*ph);
        s.uniformity += uniformity(*ph);
        ++used;
      }
    }
    s.entropy /= used;
    s.uniformity /= used;
  }
  s.argmax_list_pos = argmax(p);
  s.span_mass = span_mass / al.n_heads;
  s.bos_dominant = trace.tokens.bos_index && argmax(global) == *trace.tokens.bos_index;
  return s;
}

AttnSummary layer_summaries(const ActivationTrace& trace, HeadAggregation agg) {
  AttnSummary out;
  for (int layer = 1; layer <= trace.meta.n_layers; ++layer) {
    out.layers.push_back(layer_summary(trace, layer, agg));
    out.mean_entropy += out.layers.back().entropy;
    out.mean_uniformity += out.layers.back().uniformity;
    out.bos_dominant_layers += out.layers.back().bos_dominant ? 1 : 0;
  }
  out.mean_entropy /= trace.meta.n_layers;
  out.mean_uniformity /= trace.meta.n_layers;
  return out;
}

double intruder_ratio(std::span<const double> p, int intruder_pos) {
  if (intruder_pos < 0 || intruder_pos >= static_cast<int>(p.size()) || p.size() < 2) {
    throw UsageError("intruder position outside span");
  }
  double others = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (static_cast<int>(i) != intruder_pos) others += p[i];
  }
  others /= static_cast<double>(p.size() - 1);
  if (!(others > 0.0)) return std::numeric_limits<double>::infinity();
  return p[static_cast<std::size_t>(intruder_pos)] / others;
}

std::vector<int> over_attended(std::span<const double> ratios, double threshold) {
  std::vector<int> out;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (ratios[i] > threshold) out.push_back(static_cast<int>(i) + 1);
  }
  return out;
}

AnomalyAttnSummary anomaly_ratios(const ActivationTrace& p2, const ActivationTrace* p1, int intruder_pos,
                                  std::span<const int> selected_layers, double threshold) {
  const auto& intr = p2.tokens.intruder_positions;
  if (std::find(intr.begin(), intr.end(), intruder_pos) == intr.end()) {
    throw UsageError("anomaly ratios: position " + std::to_string(intruder_pos) + " is not an intruder in '" +
                     p2.prompt_label + "'");
  }
  if (p1 && p1->meta.n_layers != p2.meta.n_layers) {
    throw ValidationError("attention.p1", "P1 and P2 traces differ in depth");
  }
  AnomalyAttnSummary s;
  s.intruder_pos = intruder_pos;
  s.threshold = threshold;
  for (int layer = 1; layer <= p2.meta.n_layers; ++layer) {
    const auto p = span_distribution(p2, layer);
    s.ratios.push_back(intruder_ratio(p, intruder_pos));
    if (p1) s.entropy_delta.push_back(entropy(p) - entropy(span_distribution(*p1, layer)));
  }
  s.over_attended_layers = over_attended(s.ratios, threshold);
  for (int layer : selected_layers) {
    LayerHeadRatios lr;
    lr.layer_index = layer;
    for (int h = 0; h < p2.meta.n_heads; ++h) {
      auto p = head_span_distribution(p2, layer, h);
      lr.heads.push_back({h, p ? std::optional<double>(intruder_ratio(*p, intruder_pos)) : std::nullopt});
    }
    s.per_head.push_back(std::move(lr));
  }
  return s;
}

std::vector<int> most_ignoring_layers(std::span<const double> ratios, int k) {
  std::vector<int> layers(ratios.size());
  std::iota(layers.begin(), layers.end(), 1);
  std::stable_sort(layers.begin(), layers.end(), [&](int a, int b) {
    return ratios[static_cast<std::size_t>(a - 1)] < ratios[static_cast<std::size_t>(b - 1)];
  });
  layers.resize(std::min<std::size_t>(layers.size(), static_cast<std::size_t>(std::max(k, 0))));
  return layers;
}

}  // namespace rscope
