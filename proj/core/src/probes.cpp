// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/probes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "rscope/errors.hpp"

namespace rscope {

std::string_view to_string(ProbeCondition c) noexcept {
  return c == ProbeCondition::repeated ? "repeated" : "unique";
}

ProbeDataset ProbeDataset::from_traces(std::span<const ActivationTrace> traces, std::span<const int> targets,
                                       ProbeCondition condition) {
  if (traces.size() != targets.size()) throw UsageError("probe dataset: one target per trace required");
  if (traces.empty()) throw ValidationError("probe.samples", "empty dataset");
  const ModelMeta& meta = traces.front().meta;
  ProbeDataset ds;
  ds.condition = condition;
  ds.layers.resize(static_cast<std::size_t>(meta.n_layers) + 1);
  for (auto& m : ds.layers) {
    m.rows = static_cast<int>(traces.size());
    m.cols = meta.d_model;
    m.data.reserve(static_cast<std::size_t>(m.rows) * m.cols);
  }
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    if (t.meta.n_layers != meta.n_layers || t.meta.d_model != meta.d_model) {
      throw ValidationError("probe.samples", "trace '" + t.prompt_label + "' has different model dimensions");
    }
    ds.labels.push_back(t.prompt_label);
    ds.targets.push_back(targets[i]);
    for (int layer = 0; layer <= meta.n_layers; ++layer) {
      auto state = t.states.post_layer(layer);
      auto& m = ds.layers[static_cast<std::size_t>(layer)];
      m.data.insert(m.data.end(), state.begin(), state.end());
    }
  }
  ds.validate();
  return ds;
}

ProbeDataset ProbeDataset::from_features(std::vector<FeatureMatrix> layers, std::vector<double> targets,
                                         ProbeCondition condition) {
  ProbeDataset ds;
  ds.condition = condition;
  ds.layers = std::move(layers);
  ds.targets = std::move(targets);
  ds.labels.resize(ds.targets.size());
  ds.validate();
  return ds;
}

void ProbeDataset::validate() const {
  if (targets.size() < 3) throw ValidationError("probe.samples", "at least 3 samples required");
  if (labels.size() != targets.size()) throw ValidationError("probe.labels", "one label per sample required");
  if (layers.empty()) throw ValidationError("probe.layers", "no feature layers");
  const int cols = layers.front().cols;
  for (const auto& m : layers) {
    if (m.rows != n_samples() || m.cols != cols || m.cols < 1 ||
        m.data.size() != static_cast<std::size_t>(m.rows) * m.cols) {
      throw ValidationError("probe.layers", "feature matrix dimensions are inconsistent");
    }
  }
  if (std::all_of(targets.begin(), targets.end(), [&](double t) { return t == targets.front(); })) {
    throw DegenerateError("probe dataset: all labels identical, R^2 undefined");
  }
}

std::vector<double> ridge_loo_predict(const FeatureMatrix& x, std::span<const double> y, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw UsageError("ridge lambda must be positive");
  const int n = x.rows;
  const int d = x.cols;
  if (n < 2 || static_cast<int>(y.size()) != n) throw UsageError("ridge: need >= 2 samples and one target each");

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> features(x.data.data(), n, d);
  const Eigen::Map<const Eigen::VectorXd> targets(y.data(), n);

  std::vector<double> predictions(static_cast<std::size_t>(n));
  const int m = n - 1;
  Mat xc(m, d);
  Eigen::VectorXd yc(m);
  for (int held = 0; held < n; ++held) {
    for (int r = 0, k = 0; r < n; ++r) {
      if (r == held) continue;
      xc.row(k) = features.row(r);
      yc(k) = targets(r);
      ++k;
    }
    const Eigen::RowVectorXd mu = xc.colwise().mean();
    const double ybar = yc.mean();
    xc.rowwise() -= mu;
    yc.array() -= ybar;
    const Eigen::RowVectorXd query = features.row(held) - mu;

    double pred = ybar;
    if (d <= m) {
      Eigen::MatrixXd gram = xc.transpose() * xc;
      gram.diagonal().array() += lambda;
      const Eigen::VectorXd w = gram.llt().solve(xc.transpose() * yc);
      pred += query.dot(w);
    } else {
      Eigen::MatrixXd kernel = xc * xc.transpose();
      kernel.diagonal().array() += lambda;
      const Eigen::VectorXd alpha = kernel.llt().solve(yc);
      pred += (xc * query.transpose()).dot(alpha);
    }
    predictions[static_cast<std::size_t>(held)] = pred;
  }
  return predictions;
}

ProbeLayerResult probe_layer(const ProbeDataset& dataset, int layer_index, double lambda) {
  if (layer_index < 0 || layer_index > dataset.n_layers()) {
    throw ValidationError("probe.layer_index", "layer " + std::to_string(layer_index) + " outside [0, " +
                                                   std::to_string(dataset.n_layers()) + "]");
  }
  dataset.validate();
  const auto& x = dataset.layers[static_cast<std::size_t>(layer_index)];
  const auto pred = ridge_loo_predict(x, dataset.targets, lambda);

  const auto& y = dataset.targets;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double abs_err = 0.0, ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = pred[i] - y[i];
    abs_err += std::abs(e);
    ss_res += e * e;
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  ProbeLayerResult r;
  r.layer_index = layer_index;
  r.n_samples = dataset.n_samples();
  r.mae = abs_err / static_cast<double>(y.size());
  r.r2 = 1.0 - ss_res / ss_tot;
  r.lambda = lambda;
  return r;
}

const ProbeLayerResult* ProbeTable::find(ProbeCondition c, int layer) const {
  const auto& rows = c == ProbeCondition::repeated ? repeated : unique;
  for (const auto& r : rows) {
    if (r.layer_index == layer) return &r;
  }
  return nullptr;
}

ProbeTable probe_condition(const ProbeDataset& dataset, double lambda) {
  ProbeTable table;
  table.lambda = lambda;
  auto& rows = dataset.condition == ProbeCondition::repeated ? table.repeated : table.unique;
  for (int layer = 0; layer <= dataset.n_layers(); ++layer) rows.push_back(probe_layer(dataset, layer, lambda));
  return table;
}

ProbeTable probe_all_layers(const ProbeDataset& repeated, const ProbeDataset& unique, double lambda) {
  if (repeated.n_layers() != unique.n_layers()) {
    throw ValidationError("probe.layers", "conditions disagree on layer count");
  }
  ProbeTable table;
  table.lambda = lambda;
  for (int layer = 0; layer <= repeated.n_layers(); ++layer) {
    table.repeated.push_back(probe_layer(repeated, layer, lambda));
    table.unique.push_back(probe_layer(unique, layer, lambda));
    if (table.repeated.back().mae < table.unique.back().mae) table.dissociation_layers.push_back(layer);
  }
  return table;
}

}  // namespace rscope
