// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "rscope/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rscope/errors.hpp"
#include "rscope/fixture.hpp"
#include "test_util.hpp"

namespace rscope {
namespace {

struct Random {
  FeatureMatrix x;
  oracle::Matrix rows;
  std::vector<double> y;
};

Random random_data(std::mt19937_64& gen, int m, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Random r;
  r.x.rows = m;
  r.x.cols = d;
  r.rows.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(d)));
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) {
      const double v = normal(gen);
      r.x.data.push_back(v);
      r.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = v;
    }
    r.y.push_back(3.0 + static_cast<double>(i % 7) + 0.1 * normal(gen));
  }
  return r;
}

ProbeDataset dataset_of(const Random& r) {
  return ProbeDataset::from_features({r.x}, r.y, ProbeCondition::repeated);
}

TEST(Ridge, MatchesPrimalOracleBothRegimes) {
  std::mt19937_64 gen(17);
  for (auto [m, d] : {std::pair{12, 4}, std::pair{8, 40}, std::pair{20, 64}, std::pair{3, 2}}) {
    const auto r = random_data(gen, m, d);
    for (double lambda : {0.01, 1.0, 10.0}) {
      const auto got = ridge_loo_predict(r.x, r.y, lambda);
      const auto want = oracle::ridge_loo(r.rows, r.y, lambda);
      for (int i = 0; i < m; ++i) EXPECT_NEAR(got[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)], 1e-8);
    }
  }
}

TEST(Ridge, ScoresMatchOracle) {
  std::mt19937_64 gen(5);
  const auto r = random_data(gen, 15, 6);
  const auto res = probe_layer(dataset_of(r), 0, 0.5);
  const auto pred = oracle::ridge_loo(r.rows, r.y, 0.5);
  double mae = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) mae += std::abs(pred[i] - r.y[i]);
  mae /= static_cast<double>(pred.size());
  EXPECT_NEAR(res.mae, mae, 1e-10);
  EXPECT_NEAR(res.r2, oracle::r2(r.y, pred), 1e-10);
  EXPECT_EQ(res.n_samples, 15);
  EXPECT_EQ(res.lambda, 0.5);
}

TEST(Ridge, PermutationInvariant) {
  std::mt19937_64 gen(9);
  auto r = random_data(gen, 14, 10);
  const auto base = probe_layer(dataset_of(r), 0);
  std::vector<int> order(14);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  Random p;
  p.x.rows = r.x.rows;
  p.x.cols = r.x.cols;
  for (int i : order) {
    const auto row = r.x.row(i);
    p.x.data.insert(p.x.data.end(), row.begin(), row.end());
    p.y.push_back(r.y[static_cast<std::size_t>(i)]);
  }
  const auto perm = probe_layer(dataset_of(p), 0);
  EXPECT_NEAR(perm.mae, base.mae, 1e-10);
  EXPECT_NEAR(perm.r2, base.r2, 1e-10);
}

TEST(Ridge, ShiftInvariant) {
  std::mt19937_64 gen(21);
  auto r = random_data(gen, 10, 30);
  const auto base = ridge_loo_predict(r.x, r.y, 1.0);
  for (int i = 0; i < r.x.rows; ++i) {
    for (int k = 0; k < r.x.cols; ++k) r.x.data[static_cast<std::size_t>(i * r.x.cols + k)] += 5.0 + k;
  }
  const auto shifted = ridge_loo_predict(r.x, r.y, 1.0);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(shifted[i], base[i], 1e-8);
}

TEST(Ridge, RejectsBadLambda) {
  std::mt19937_64 gen(1);
  const auto r = random_data(gen, 5, 2);
  EXPECT_THROW(ridge_loo_predict(r.x, r.y, 0.0), UsageError);
  EXPECT_THROW(ridge_loo_predict(r.x, r.y, -1.0), UsageError);
}

TEST(ProbeDataset, DegenerateAndTooSmall) {
  std::mt19937_64 gen(2);
  auto r = random_data(gen, 5, 2);
  std::fill(r.y.begin(), r.y.end(), 4.0);
  EXPECT_THROW(dataset_of(r).validate(), DegenerateError);
  EXPECT_THROW(probe_layer(dataset_of(r), 0), DegenerateError);

  auto small = random_data(gen, 2, 2);
  try {
    dataset_of(small).validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "probe.samples");
  }
}

TEST(ProbeDataset, FromFixtureTraces) {
  const auto cfg = testutil::small_config();
  std::vector<ActivationTrace> traces;
  std::vector<int> targets;
  for (int n = 3; n <= 12; ++n) {
    traces.push_back(generate(cfg, n));
    targets.push_back(n);
  }
  const auto ds = ProbeDataset::from_traces(traces, targets, ProbeCondition::repeated);
  EXPECT_EQ(ds.n_layers(), cfg.n_layers);
  EXPECT_EQ(ds.n_samples(), 10);
  EXPECT_EQ(ds.layers[0].cols, cfg.d_model);
  const auto table = probe_condition(ds);
  ASSERT_EQ(table.repeated.size(), static_cast<std::size_t>(cfg.n_layers + 1));
  EXPECT_LT(table.repeated[0].r2, 0.2);
  for (int l = 1; l <= cfg.n_layers; ++l) EXPECT_GE(table.find(ProbeCondition::repeated, l)->r2, 0.999);
}

TEST(ProbeTable, DissociationLayers) {
  auto cfg = testutil::small_config();
  cfg.condition_noise["unique"] = 1.0;
  std::vector<ActivationTrace> rep;
  std::vector<ActivationTrace> uni;
  std::vector<int> targets;
  for (int n = 3; n <= 13; ++n) {
    rep.push_back(generate(cfg, n, ProbeCondition::repeated));
    uni.push_back(generate(cfg, n, ProbeCondition::unique));
    targets.push_back(n);
  }
  const auto table = probe_all_layers(ProbeDataset::from_traces(rep, targets, ProbeCondition::repeated),
                                      ProbeDataset::from_traces(uni, targets, ProbeCondition::unique));
  ASSERT_EQ(table.unique.size(), table.repeated.size());
  for (int l = 1; l <= cfg.n_layers; ++l) {
    EXPECT_NE(std::find(table.dissociation_layers.begin(), table.dissociation_layers.end(), l),
              table.dissociation_layers.end())
        << "layer " << l;
  }
}

}  // namespace
}  // namespace rscope
