// Copyright 2026 The svdrank Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "svdrank/metrics.hpp"

namespace svdrank {
namespace {

PrefPrediction pred(double si, double sj, CcrChoice c) { return {"i", "j", si, sj, c}; }

TEST(Ppref, SmallExamples) {
  const std::vector<PrefPrediction> p{pred(0, 1, CcrChoice::j_more), pred(0, 1, CcrChoice::i_more),
                                      pred(2, 1, CcrChoice::i_little_more)};
  EXPECT_EQ(ppref(p, PrefSubset::strong), 0.5);
  EXPECT_EQ(ppref(p, PrefSubset::weak), 1.0);
  const PprefResult r = ppref_detail(p, PrefSubset::strong);
  EXPECT_EQ(r.kept, 2u);
  EXPECT_EQ(r.correct, 1u);
}

TEST(Ppref, PerfectAndConstantScorers) {
  Rng rng(1);
  auto preds = oracle::random_predictions(rng, 200);
  for (auto& p : preds) {
    p.score_i = 0;
    p.score_j = favours_j(p.label) ? 1 : -1;
  }
  EXPECT_EQ(ppref(preds, PrefSubset::strong), 1.0);
  EXPECT_EQ(ppref(preds, PrefSubset::weak), 1.0);
  for (auto& p : preds) p.score_i = p.score_j = 0.25;
  EXPECT_EQ(ppref(preds, PrefSubset::strong), 0.0);
  EXPECT_EQ(ppref_detail(preds, PrefSubset::weak).ties, ppref_detail(preds, PrefSubset::weak).kept);
}

TEST(Ppref, EmptySubsetIsAnError) {
  const std::vector<PrefPrediction> strong_only{pred(0, 1, CcrChoice::j_more)};
  EXPECT_THROW(ppref(strong_only, PrefSubset::weak), ConfigError);
  EXPECT_THROW(ppref({}, PrefSubset::strong), ConfigError);
}

TEST(Ppref, MatchesRecount) {
  Rng rng(2);
  std::uniform_int_distribution<std::size_t> size(1, 60);
  for (int trial = 0; trial < 300; ++trial) {
    auto preds = oracle::random_predictions(rng, size(rng));
    for (bool strong : {true, false}) {
      const PrefSubset s = strong ? PrefSubset::strong : PrefSubset::weak;
      bool any = false;
      for (const auto& p : preds) any = any || in_subset(s, p.label);
      if (!any) continue;
      EXPECT_EQ(ppref(preds, s), oracle::ppref_recount(preds, strong));
    }
  }
}

TEST(Ppref, InvariantUnderMonotoneMapAndMirroring) {
  Rng rng(3);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 100; ++trial) {
    auto preds = oracle::random_predictions(rng, 80);
    for (auto& p : preds) {
      p.score_i = d(rng);
      p.score_j = d(rng);
    }
    auto mapped = preds, swapped = preds;
    for (auto& p : mapped) {
      p.score_i = std::exp(2 * p.score_i) + 3;
      p.score_j = std::exp(2 * p.score_j) + 3;
    }
    for (auto& p : swapped) {
      std::swap(p.score_i, p.score_j);
      std::swap(p.utt_i, p.utt_j);
      p.label = mirror(p.label);
    }
    for (PrefSubset s : {PrefSubset::strong, PrefSubset::weak}) {
      EXPECT_EQ(ppref(preds, s), ppref(mapped, s));
      EXPECT_EQ(ppref(preds, s), ppref(swapped, s));
    }
  }
}

TEST(UpperBound, WorkedTally) {
  const std::vector<ResponseTally> t{{40, 5, 3, 2}};
  const UpperBound ub = upper_bound_estimate(t);
  EXPECT_EQ(*ub.strong, 40.0 / 42.0);
  EXPECT_EQ(*ub.weak, 5.0 / 8.0);
}

TEST(UpperBound, UnanimousAndMissingSubsets) {
  const std::vector<ResponseTally> t{{0, 0, 0, 50}, {50, 0, 0, 0}};
  const UpperBound ub = upper_bound_estimate(t);
  EXPECT_EQ(*ub.strong, 1.0);
  EXPECT_FALSE(ub.weak.has_value());
  EXPECT_EQ(ub.weak_questions, 0u);
  const std::vector<ResponseTally> mixed{{10, 0, 0, 0}, {0, 3, 1, 0}};
  const UpperBound m = upper_bound_estimate(mixed);
  EXPECT_EQ(*m.strong, 1.0);
  EXPECT_EQ(*m.weak, 0.75);
  EXPECT_EQ(m.strong_questions, 1u);
  EXPECT_THROW(upper_bound_estimate({}), ConfigError);
  const std::vector<ResponseTally> empty{{0, 0, 0, 0}};
  EXPECT_THROW(upper_bound_estimate(empty), ValidationError);
}

TEST(UpperBound, AlwaysWithinHalfAndOne) {
  Rng rng(4);
  std::uniform_int_distribution<std::size_t> c(0, 20);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ResponseTally> t(5);
    for (auto& x : t) x = {c(rng), c(rng), c(rng), c(rng) + 1};
    const UpperBound ub = upper_bound_estimate(t);
    EXPECT_GE(*ub.strong, 0.5);
    EXPECT_LE(*ub.strong, 1.0);
    if (ub.weak) {
      EXPECT_GE(*ub.weak, 0.5);
      EXPECT_LE(*ub.weak, 1.0);
    }
  }
}

TEST(UpperBound, TallyGroupsByOrderedPair) {
  std::vector<CcrLabel> labels;
  for (int k = 0; k < 3; ++k) labels.push_back({"youthfulF", "a" + std::to_string(k), "x", "y", CcrChoice::i_more});
  labels.push_back({"youthfulF", "a9", "y", "x", CcrChoice::j_more});
  labels.push_back({"resonantM", "a9", "x", "y", CcrChoice::j_more});
  const auto all = tally_responses(labels, 1);
  ASSERT_EQ(all.size(), 2u);
  const auto common = tally_responses(labels, 2, "youthfulF");
  ASSERT_EQ(common.size(), 1u);
  EXPECT_EQ(common[0], (ResponseTally{3, 0, 0, 0}));
}

TEST(PseudoF, WorkedValues) {
  EXPECT_NEAR(pseudo_f({{1, 2}, {3, 4}}), 8.0, 1e-12);
  EXPECT_EQ(pseudo_f({{1, 3}, {2, 2}}), 0.0);
  EXPECT_TRUE(std::isinf(pseudo_f({{1, 1}, {2, 2}})));
  EXPECT_THROW(pseudo_f({{1, 1}, {1, 1}}), ConfigError);
  EXPECT_THROW(pseudo_f({{1, 2}}), ConfigError);
  EXPECT_THROW(pseudo_f({{1}, {2}}), ConfigError);
  EXPECT_THROW(pseudo_f({{1, 2}, {}}), ConfigError);
}

TEST(PseudoF, MatchesSumOfSquaresDecomposition) {
  Rng rng(5);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> g(4);
    std::vector<double> all;
    for (std::size_t k = 0; k < g.size(); ++k)
      for (int i = 0; i < 3 + trial % 4; ++i) {
        g[k].push_back(d(rng) + k);
        all.push_back(g[k].back());
      }
    // total SS = between + within; reconstruct between from total and within.
    double grand = 0, total = 0, within = 0;
    for (double x : all) grand += x;
    grand /= all.size();
    for (double x : all) total += (x - grand) * (x - grand);
    for (const auto& gr : g) {
      double m = 0;
      for (double x : gr) m += x;
      m /= gr.size();
      for (double x : gr) within += (x - m) * (x - m);
    }
    const double n = all.size(), k = g.size();
    EXPECT_NEAR(pseudo_f(g), ((total - within) / (k - 1)) / (within / (n - k)), 1e-9 * pseudo_f(g));
  }
}

TEST(AcrMse, ValuesAndErrors) {
  const std::vector<double> a{1, 2}, b{3, 2};
  EXPECT_EQ(acr_mse(a, b), 2.0);
  Rng rng(6);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> x(37), y(37);
  double ref = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = u(rng);
    ref += (x[i] - y[i]) * (x[i] - y[i]) / x.size();
  }
  EXPECT_NEAR(acr_mse(x, y), ref, 1e-12);
  const std::vector<double> shorter{1};
  EXPECT_THROW(acr_mse(a, shorter), ConfigError);
}

TEST(Report, KeysAndNulls) {
  const std::vector<PrefPrediction> p{pred(0, 1, CcrChoice::j_more), pred(1, 1, CcrChoice::i_more)};
  const auto j = metric_report("youthfulF", p);
  EXPECT_EQ(j["svd"], "youthfulF");
  EXPECT_EQ(j["n_pairs_strong"], 2);
  EXPECT_EQ(j["ppref_strong"], 0.5);
  EXPECT_EQ(j["ties_strong"], 1);
  EXPECT_TRUE(j["ppref_weak"].is_null());
  EXPECT_TRUE(j["ub_strong"].is_null());
  UpperBound ub;
  ub.strong = 0.9;
  const auto k = metric_report("youthfulF", p, ub);
  EXPECT_EQ(k["ub_strong"], 0.9);
  EXPECT_TRUE(k["ub_weak"].is_null());
}

}  // namespace
}  // namespace svdrank
