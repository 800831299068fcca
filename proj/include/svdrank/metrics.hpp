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

#pragma once

// Evaluation metrics over CCR comparisons: precision of preferences (ppref),
// agreement-based upper bounds, the pseudo-F screening statistic, and MSE.

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "svdrank/dataset.hpp"
#include "svdrank/error.hpp"

namespace svdrank {

struct PrefPrediction {
  std::string utt_i;
  std::string utt_j;
  double score_i = 0.0;
  double score_j = 0.0;
  CcrChoice label = CcrChoice::i_more;
};

enum class PrefSubset { strong, weak };

inline bool in_subset(PrefSubset s, CcrChoice c) {
  return (s == PrefSubset::strong) == is_strong(c);
}

struct PprefResult {
  double precision = 0.0;
  std::size_t kept = 0;
  std::size_t correct = 0;
  std::size_t ties = 0;
};

// A prediction is correct when the score ordering points the same way as the
// label. Exact ties are counted as incorrect.
inline PprefResult ppref_detail(std::span<const PrefPrediction> predictions,
                                PrefSubset subset) {
  PprefResult r;
  for (const PrefPrediction& p : predictions) {
    if (!in_subset(subset, p.label)) continue;
    ++r.kept;
    if (p.score_i == p.score_j) {
      ++r.ties;
      continue;
    }
    if ((p.score_j > p.score_i) == favours_j(p.label)) ++r.correct;
  }
  if (r.kept == 0)
    throw ConfigError(std::string("ppref-") +
                      (subset == PrefSubset::strong ? "strong" : "weak") +
                      " is undefined: no comparisons in the subset");
  r.precision = static_cast<double>(r.correct) / static_cast<double>(r.kept);
  return r;
}

inline double ppref(std::span<const PrefPrediction> predictions, PrefSubset subset) {
  return ppref_detail(predictions, subset).precision;
}

// ---------------------------------------------------------------------------
// Agreement upper bounds

// Response counts for one common question: a1 "i more", a2 "i a little more",
// a3 "j a little more", a4 "j more".
struct ResponseTally {
  std::size_t a1 = 0, a2 = 0, a3 = 0, a4 = 0;

  void add(CcrChoice c) {
    switch (c) {
      case CcrChoice::i_more: ++a1; break;
      case CcrChoice::i_little_more: ++a2; break;
      case CcrChoice::j_little_more: ++a3; break;
      case CcrChoice::j_more: ++a4; break;
    }
  }
  std::size_t total() const { return a1 + a2 + a3 + a4; }
  bool operator==(const ResponseTally&) const = default;
};

struct UpperBound {
  std::optional<double> strong;  // nullopt when no question had a strong response
  std::optional<double> weak;
  std::size_t strong_questions = 0;
  std::size_t weak_questions = 0;
};

// Mean per-question agreement, uniformly weighted. A question contributes to
// a bound only when its denominator is positive.
inline UpperBound upper_bound_estimate(std::span<const ResponseTally> tallies) {
  if (tallies.empty()) throw ConfigError("upper bound needs at least one question");
  UpperBound ub;
  double s = 0.0, w = 0.0;
  for (const ResponseTally& t : tallies) {
    if (t.total() == 0) throw ValidationError("response tally with no responses");
    if (const std::size_t d = t.a1 + t.a4; d > 0) {
      s += static_cast<double>(std::max(t.a1, t.a4)) / static_cast<double>(d);
      ++ub.strong_questions;
    }
    if (const std::size_t d = t.a2 + t.a3; d > 0) {
      w += static_cast<double>(std::max(t.a2, t.a3)) / static_cast<double>(d);
      ++ub.weak_questions;
    }
  }
  if (ub.strong_questions) ub.strong = s / static_cast<double>(ub.strong_questions);
  if (ub.weak_questions) ub.weak = w / static_cast<double>(ub.weak_questions);
  return ub;
}

// Groups CCR responses by ordered pair and keeps pairs answered at least
// `min_responses` times (the common questions of a panel).
inline std::vector<ResponseTally> tally_responses(std::span<const CcrLabel> labels,
                                                  std::size_t min_responses = 2,
                                                  const std::string& svd_id = {}) {
  std::map<std::pair<std::string, std::string>, ResponseTally> by_pair;
  for (const CcrLabel& l : labels) {
    if (!svd_id.empty() && l.svd_id != svd_id) continue;
    by_pair[{l.utt_i, l.utt_j}].add(l.choice);
  }
  std::vector<ResponseTally> out;
  for (const auto& [pair, t] : by_pair)
    if (t.total() >= min_responses) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-F

// Calinski-Harabasz ratio (between SS / (k-1)) / (within SS / (n-k)) over
// scores grouped by speaker. Returns +infinity when the within-group sum of
// squares is zero but the groups differ.
inline double pseudo_f(const std::vector<std::vector<double>>& groups) {
  const std::size_t k = groups.size();
  if (k < 2) throw ConfigError("pseudo-F needs at least two groups");
  std::size_t n = 0;
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("pseudo-F: empty group");
    n += g.size();
    for (double x : g) total += x;
  }
  if (n <= k) throw ConfigError("pseudo-F needs more observations than groups");
  const double grand = total / static_cast<double>(n);
  double between = 0.0, within = 0.0;
  for (const auto& g : groups) {
    double sum = 0.0;
    for (double x : g) sum += x;
    const double mean = sum / static_cast<double>(g.size());
    between += static_cast<double>(g.size()) * (mean - grand) * (mean - grand);
    for (double x : g) within += (x - mean) * (x - mean);
  }
  if (within == 0.0) {
    if (between == 0.0) throw ConfigError("pseudo-F undefined: all observations are equal");
    return std::numeric_limits<double>::infinity();
  }
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

// ---------------------------------------------------------------------------

inline double acr_mse(std::span<const double> predicted, std::span<const double> ratings) {
  if (predicted.size() != ratings.size())
    throw ConfigError("acr_mse: " + std::to_string(predicted.size()) + " predictions vs " +
                      std::to_string(ratings.size()) + " ratings");
  if (predicted.empty()) throw ConfigError("acr_mse of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - ratings[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

// Metric report JSON. Undefined values are written as null.
inline nlohmann::json metric_report(const std::string& svd,
                                    std::span<const PrefPrediction> predictions,
                                    const std::optional<UpperBound>& ub = std::nullopt) {
  nlohmann::json j;
  j["svd"] = svd;
  for (PrefSubset s : {PrefSubset::strong, PrefSubset::weak}) {
    const std::string tag = s == PrefSubset::strong ? "strong" : "weak";
    try {
      const PprefResult r = ppref_detail(predictions, s);
      j["n_pairs_" + tag] = r.kept;
      j["ppref_" + tag] = r.precision;
      j["ties_" + tag] = r.ties;
    } catch (const ConfigError&) {
      j["n_pairs_" + tag] = 0;
      j["ppref_" + tag] = nullptr;
      j["ties_" + tag] = 0;
    }
  }
  j["ub_strong"] = ub && ub->strong ? nlohmann::json(*ub->strong) : nlohmann::json(nullptr);
  j["ub_weak"] = ub && ub->weak ? nlohmann::json(*ub->weak) : nlohmann::json(nullptr);
  return j;
}

}  // namespace svdrank
