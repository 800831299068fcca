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

// Label-efficiency experiment: for each training-set size, training mode and
// seed, subsample the training labels, train from a seeded initialization,
// evaluate ppref on a fixed held-out comparison set after every epoch, and
// keep the best value over epochs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "svdrank/dataset.hpp"
#include "svdrank/metrics.hpp"
#include "svdrank/scorer.hpp"
#include "svdrank/training.hpp"

namespace svdrank {

enum class TrainMode { acr, ccr };

inline std::string_view mode_name(TrainMode m) { return m == TrainMode::acr ? "acr" : "ccr"; }

inline TrainMode parse_mode(std::string_view s) {
  if (s == "acr") return TrainMode::acr;
  if (s == "ccr") return TrainMode::ccr;
  throw ConfigError("unknown training mode \"" + std::string(s) + "\" (expected acr or ccr)");
}

inline constexpr std::size_t kDefaultTestSize = 1450;
inline const std::vector<std::size_t> kDefaultSizes = {125, 250, 500, 1000, 2000, 4000, 5000};

struct ExperimentConfig {
  Svd svd;
  std::vector<std::size_t> sizes = kDefaultSizes;
  std::vector<TrainMode> modes = {TrainMode::acr, TrainMode::ccr};
  Architecture arch = Architecture::pooled_fc;
  std::size_t hidden_dim = 256;  // pooled_fc only
  Hyperparams hp;
  std::size_t train_speakers = 0;  // 0: 60% of the eligible speakers
  std::uint64_t split_seed = 0;
  std::size_t test_size = kDefaultTestSize;  // per subset (strong, weak)
  std::optional<std::filesystem::path> checkpoint_dir;
};

struct RunResult {
  std::string svd;
  TrainMode mode = TrainMode::ccr;
  Architecture arch = Architecture::pooled_fc;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;  // epoch of the best ppref-strong
  double ppref_strong = 0.0;   // max over epochs
  double ppref_weak = 0.0;     // max over epochs, chosen independently
  std::vector<EpochReport> epochs;
};

struct CellSummary {
  TrainMode mode = TrainMode::ccr;
  std::size_t n_train = 0;
  std::size_t runs = 0;
  double strong_mean = 0.0, strong_std = 0.0;
  double weak_mean = 0.0, weak_std = 0.0;
};

struct ExperimentResult {
  std::string svd;
  Architecture arch = Architecture::pooled_fc;
  SplitPlan split;
  std::size_t test_strong = 0;
  std::size_t test_weak = 0;
  std::vector<RunResult> runs;
  std::vector<CellSummary> cells;

  const CellSummary& cell(TrainMode m, std::size_t n) const {
    for (const auto& c : cells)
      if (c.mode == m && c.n_train == n) return c;
    throw ConfigError("no experiment cell for the requested mode and size");
  }
};

inline std::size_t default_train_speakers(const Corpus& corpus, const Svd& svd) {
  return corpus.speakers(svd.gender_scope).size() * 3 / 5;
}

// Strong and weak test comparisons, each capped at `per_subset` by a seeded
// uniform draw. The same set is used for every size, mode and seed.
inline std::vector<CcrLabel> fixed_test_set(const SplitPlan& plan, const LabelSet& labels,
                                            std::size_t per_subset, std::uint64_t seed) {
  std::vector<std::size_t> strong, weak;
  for (std::size_t k : plan.test_ccr)
    (is_strong(labels.ccr[k].choice) ? strong : weak).push_back(k);
  Rng rng = make_rng(seed, 0x51);
  auto cap = [&](std::vector<std::size_t>& v) {
    if (v.size() <= per_subset) return;
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(per_subset);
    std::sort(v.begin(), v.end());
  };
  cap(strong);
  cap(weak);
  std::vector<std::size_t> idx = strong;
  idx.insert(idx.end(), weak.begin(), weak.end());
  std::sort(idx.begin(), idx.end());
  std::vector<CcrLabel> out;
  for (std::size_t k : idx) out.push_back(labels.ccr[k]);
  return out;
}

inline ScorerParameters init_model(Architecture arch, std::size_t input_dim,
                                   std::size_t hidden_dim, std::uint64_t seed) {
  return arch == Architecture::pooled_fc ? init_pooled_fc(input_dim, hidden_dim, seed)
                                         : init_conv_pool(seed);
}

namespace detail {
inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}
}  // namespace detail

inline ExperimentResult run_experiment(const Corpus& corpus, const LabelSet& labels,
                                       const FeatureStore& features,
                                       const ExperimentConfig& cfg) {
  cfg.hp.validate();
  if (cfg.hp.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  ExperimentResult res;
  res.svd = cfg.svd.id;
  res.arch = cfg.arch;
  const std::size_t n_spk =
      cfg.train_speakers ? cfg.train_speakers : default_train_speakers(corpus, cfg.svd);
  res.split = make_split(corpus, labels, cfg.svd, n_spk, cfg.split_seed);
  const std::vector<CcrLabel> test = fixed_test_set(res.split, labels, cfg.test_size,
                                                    cfg.split_seed);
  for (const auto& l : test) (is_strong(l.choice) ? res.test_strong : res.test_weak)++;
  if (test.empty()) throw ConfigError("split leaves no held-out comparisons");

  const std::size_t dim = input_dim(features);
  const EvalHook hook = [&](const ScorerParameters& m) {
    return evaluate_ppref(m, test, features);
  };

  for (std::size_t n : cfg.sizes) {
    for (TrainMode mode : cfg.modes) {
      std::vector<double> strong, weak;
      for (std::uint64_t seed : cfg.hp.seeds) {
        const Modalities used{mode == TrainMode::acr, mode == TrainMode::ccr};
        const SplitPlan sub = subsample_training(res.split, n, derive_seed(seed, n), used);
        ScorerParameters init = init_model(cfg.arch, dim, cfg.hidden_dim, seed);
        TrainResult tr;
        if (mode == TrainMode::acr) {
          std::vector<AcrLabel> train;
          for (std::size_t k : sub.train_acr) train.push_back(labels.acr[k]);
          tr = train_acr(std::move(init), train, features, cfg.hp, seed, hook);
        } else {
          std::vector<CcrLabel> train;
          for (std::size_t k : sub.train_ccr) train.push_back(labels.ccr[k]);
          tr = train_ccr(std::move(init), train, features, cfg.hp, seed, hook);
        }
        RunResult run;
        run.svd = cfg.svd.id;
        run.mode = mode;
        run.arch = cfg.arch;
        run.n_train = n;
        run.seed = seed;
        run.epochs = tr.reports;
        double best_s = -1.0, best_w = -1.0;
        for (const EpochReport& r : tr.reports) {
          const double s = r.ppref_strong.value_or(0.0);
          if (s > best_s) {
            best_s = s;
            run.best_epoch = r.epoch;
          }
          best_w = std::max(best_w, r.ppref_weak.value_or(0.0));
        }
        run.ppref_strong = best_s;
        run.ppref_weak = best_w;
        if (cfg.checkpoint_dir) {
          std::filesystem::create_directories(*cfg.checkpoint_dir);
          const std::string name = cfg.svd.id + "_" + std::string(mode_name(mode)) + "_" +
                                   std::string(arch_name(cfg.arch)) + "_n" +
                                   std::to_string(n) + "_seed" + std::to_string(seed) +
                                   ".svdm";
          save_checkpoint(tr.model, (*cfg.checkpoint_dir / name).string());
        }
        strong.push_back(run.ppref_strong);
        weak.push_back(run.ppref_weak);
        res.runs.push_back(std::move(run));
      }
      CellSummary cell;
      cell.mode = mode;
      cell.n_train = n;
      cell.runs = strong.size();
      detail::mean_std(strong, cell.strong_mean, cell.strong_std);
      detail::mean_std(weak, cell.weak_mean, cell.weak_std);
      res.cells.push_back(cell);
    }
  }
  return res;
}

// Per-run rows followed by one "mean" and one "std" row per (size, mode).
// Values are printed with fixed precision so identical runs give identical
// bytes.
inline void write_result_csv(const ExperimentResult& r, std::ostream& out,
                             const std::string& header_comment = {}) {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "svd,mode,arch,n_train,seed,best_epoch,ppref_strong,ppref_weak\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  const std::string arch(arch_name(r.arch));
  for (const RunResult& run : r.runs)
    out << run.svd << ',' << mode_name(run.mode) << ',' << arch << ',' << run.n_train << ','
        << run.seed << ',' << run.best_epoch << ',' << num(run.ppref_strong) << ','
        << num(run.ppref_weak) << '\n';
  for (const CellSummary& c : r.cells) {
    out << r.svd << ',' << mode_name(c.mode) << ',' << arch << ',' << c.n_train << ",mean,,"
        << num(c.strong_mean) << ',' << num(c.weak_mean) << '\n';
    out << r.svd << ',' << mode_name(c.mode) << ',' << arch << ',' << c.n_train << ",std,,"
        << num(c.strong_std) << ',' << num(c.weak_std) << '\n';
  }
}

}  // namespace svdrank
