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

// ACR (squared error) and CCR (RankNet cross-entropy) trainers built on Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "svdrank/dataset.hpp"
#include "svdrank/error.hpp"
#include "svdrank/features.hpp"
#include "svdrank/metrics.hpp"
#include "svdrank/rng.hpp"
#include "svdrank/scorer.hpp"

namespace svdrank {

struct Hyperparams {
  double learning_rate = 1e-4;
  std::size_t batch_size = 6;
  std::size_t epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = kDefaultDropout;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  void validate() const {
    if (!(learning_rate > 0) || batch_size == 0 || epochs == 0 || !(adam_eps > 0) ||
        !(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1) ||
        !(dropout >= 0 && dropout < 1))
      throw ConfigError("invalid hyperparameters");
  }
};

// ---------------------------------------------------------------------------
// Losses

struct LossGrad {
  double loss = 0.0;
  double grad = 0.0;  // derivative w.r.t. the loss's first argument
};

inline LossGrad mse_loss(double score, double rating) {
  const double d = score - rating;
  return {d * d, 2.0 * d};
}

// Probability that j exhibits the descriptor more than i:
// 1 / (1 + exp(-(score_j - score_i))).
inline double ranknet_probability(double score_i, double score_j) {
  const double d = score_j - score_i;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

inline constexpr double kProbClamp = 1e-12;

// Cross-entropy -(P ln Q + (1-P) ln(1-Q)) and its derivative in Q.
inline LossGrad ranknet_loss(double target, double predicted) {
  const double q = std::clamp(predicted, kProbClamp, 1.0 - kProbClamp);
  return {-(target * std::log(q) + (1.0 - target) * std::log(1.0 - q)),
          -target / q + (1.0 - target) / (1.0 - q)};
}

// Loss for one comparison plus its derivatives w.r.t. both scores.
struct PairLoss {
  double loss = 0.0;
  double d_score_i = 0.0;
  double d_score_j = 0.0;
};

inline PairLoss ranknet_pair_loss(double target, double score_i, double score_j) {
  const double q = ranknet_probability(score_i, score_j);
  const LossGrad lg = ranknet_loss(target, q);
  const double d_diff = lg.grad * q * (1.0 - q);
  return {lg.loss, -d_diff, d_diff};
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  TensorList m;
  TensorList v;
  std::uint64_t t = 0;

  static AdamState like(const ScorerParameters& p) {
    return {zeros_like(p.tensors), zeros_like(p.tensors), 0};
  }
};

// Bias-corrected Adam step applied in place. Non-finite gradients abort
// before any parameter is touched.
inline void adam_update(ScorerParameters& p, const TensorList& grads, AdamState& s,
                        const Hyperparams& hp) {
  if (grads.size() != p.tensors.size() || s.m.size() != p.tensors.size())
    throw ConfigError("adam_update: gradient/state shape mismatch");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].data.size() != p.tensors[k].data.size())
      throw ConfigError("adam_update: gradient shape mismatch for " + p.tensors[k].name);
    for (std::size_t i = 0; i < grads[k].data.size(); ++i)
      if (!std::isfinite(grads[k].data[i]))
        throw NumericError("non-finite gradient in tensor \"" + p.tensors[k].name +
                           "\" at element " + std::to_string(i) + " (step " +
                           std::to_string(s.t + 1) + ")");
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(hp.adam_beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(hp.adam_beta2, static_cast<double>(s.t));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto& w = p.tensors[k].data;
    auto& m = s.m[k].data;
    auto& v = s.v[k].data;
    const auto& g = grads[k].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = hp.adam_beta1 * m[i] + (1.0 - hp.adam_beta1) * g[i];
      v[i] = hp.adam_beta2 * v[i] + (1.0 - hp.adam_beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= hp.learning_rate * mhat / (std::sqrt(vhat) + hp.adam_eps);
    }
  }
  ++p.generation;
}

// ---------------------------------------------------------------------------
// Features by utterance

// Reads every utterance's model input. Feature files may be pooled vectors
// ("SVDF") or spectrogram caches ("SVDS"); audio sources are converted with
// stft_magnitude. For pooled_fc, spectrograms are time-averaged.
inline FeatureStore load_features(const Corpus& corpus, const std::filesystem::path& base_dir,
                                  Architecture arch) {
  FeatureStore store;
  for (const Utterance& u : corpus.utterances()) {
    std::filesystem::path path(u.source_path);
    if (path.is_relative()) path = base_dir / path;
    ScorerInput input;
    if (u.source_kind == SourceKind::audio) {
      input = stft_magnitude(load_wav(path.string()));
    } else {
      binio::Reader r = binio::Reader::open(path.string());
      const std::string magic = r.bytes(std::min<std::size_t>(4, r.remaining()));
      binio::Reader again = binio::Reader::open(path.string());
      if (magic == "SVDS")
        input = decode_spectrogram(std::move(again));
      else
        input = decode_pooled_feature(std::move(again));
    }
    if (arch == Architecture::pooled_fc) {
      if (const auto* s = std::get_if<Spectrogram>(&input)) input = time_average(*s);
    } else if (std::holds_alternative<PooledFeature>(input)) {
      throw ConfigError("conv_pool needs spectrogram or audio input; utterance \"" + u.id +
                        "\" has a pooled feature");
    }
    store.emplace(u.id, std::move(input));
  }
  return store;
}

inline std::size_t input_dim(const FeatureStore& store) {
  for (const auto& [id, x] : store)
    if (const auto* f = std::get_if<PooledFeature>(&x)) return f->values.size();
  return kBins;
}

// ---------------------------------------------------------------------------
// Training loops

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> ppref_strong;
  std::optional<double> ppref_weak;

  bool operator==(const EpochReport&) const = default;
};

struct PprefPair {
  std::optional<double> strong;
  std::optional<double> weak;
};

// Called after every epoch with the current parameters.
using EvalHook = std::function<PprefPair(const ScorerParameters&)>;

struct TrainResult {
  ScorerParameters model;
  std::vector<EpochReport> reports;
  std::size_t steps = 0;
};

namespace detail {

// Shared mini-batch loop. `item` computes one example's loss and accumulates
// its (unscaled) gradient; the batch loss is the mean over items.
template <class ItemFn>
TrainResult train_loop(ScorerParameters model, std::size_t n, const Hyperparams& hp,
                       std::uint64_t run_seed, const EvalHook& hook, ItemFn&& item) {
  hp.validate();
  if (n == 0) throw ConfigError("empty training set");
  TrainResult res;
  AdamState adam = AdamState::like(model);
  Rng order_rng = make_rng(run_seed, 0x21);
  std::vector<std::size_t> order(n);
  TensorList grads = zeros_like(model.tensors);
  std::uint64_t item_counter = 0;
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += hp.batch_size) {
      const std::size_t end = std::min(n, start + hp.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (Tensor& g : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        Rng dropout_rng = make_rng(run_seed, 0x1000 + item_counter++);
        epoch_loss += item(model, order[b], dropout_rng, grads, scale);
      }
      adam_update(model, grads, adam, hp);
      ++res.steps;
    }
    EpochReport rep;
    rep.epoch = epoch;
    rep.train_loss = epoch_loss / static_cast<double>(n);
    if (hook) {
      const PprefPair pp = hook(model);
      rep.ppref_strong = pp.strong;
      rep.ppref_weak = pp.weak;
    }
    res.reports.push_back(rep);
  }
  res.model = std::move(model);
  return res;
}

inline const ScorerInput& feature_for(const FeatureStore& f, const std::string& utt) {
  auto it = f.find(utt);
  if (it == f.end()) throw ConfigError("no feature for utterance \"" + utt + "\"");
  return it->second;
}

}  // namespace detail

// Minimizes the mean of (f(x) - rating)^2 over each batch.
inline TrainResult train_acr(ScorerParameters model, std::span<const AcrLabel> labels,
                             const FeatureStore& features, const Hyperparams& hp,
                             std::uint64_t run_seed, const EvalHook& hook = {}) {
  std::vector<const ScorerInput*> xs;
  for (const AcrLabel& l : labels) xs.push_back(&detail::feature_for(features, l.utterance_id));
  return detail::train_loop(
      std::move(model), labels.size(), hp, run_seed, hook,
      [&](const ScorerParameters& m, std::size_t k, Rng& rng, TensorList& g, double scale) {
        ScorerOutput out = forward(m, *xs[k], Mode::train, &rng, hp.dropout);
        const LossGrad lg = mse_loss(out.score, labels[k].rating);
        accumulate_gradients(m, lg.grad * scale, out.cache, g);
        return lg.loss;
      });
}

// RankNet: both utterances go through the same parameters and the pair's
// cross-entropy is backpropagated through both branches.
inline TrainResult train_ccr(ScorerParameters model, std::span<const CcrLabel> labels,
                             const FeatureStore& features, const Hyperparams& hp,
                             std::uint64_t run_seed, const EvalHook& hook = {}) {
  std::vector<std::pair<const ScorerInput*, const ScorerInput*>> xs;
  for (const CcrLabel& l : labels)
    xs.emplace_back(&detail::feature_for(features, l.utt_i),
                    &detail::feature_for(features, l.utt_j));
  return detail::train_loop(
      std::move(model), labels.size(), hp, run_seed, hook,
      [&](const ScorerParameters& m, std::size_t k, Rng& rng, TensorList& g, double scale) {
        ScorerOutput oi = forward(m, *xs[k].first, Mode::train, &rng, hp.dropout);
        ScorerOutput oj = forward(m, *xs[k].second, Mode::train, &rng, hp.dropout);
        const PairLoss pl =
            ranknet_pair_loss(ccr_choice_to_target(labels[k].choice), oi.score, oj.score);
        accumulate_gradients(m, pl.d_score_i * scale, oi.cache, g);
        accumulate_gradients(m, pl.d_score_j * scale, oj.cache, g);
        return pl.loss;
      });
}

// ---------------------------------------------------------------------------
// Evaluation

// Eval-mode scores for every utterance referenced by `labels`, each utterance
// scored once.
inline std::vector<PrefPrediction> predict_pairs(const ScorerParameters& model,
                                                 std::span<const CcrLabel> labels,
                                                 const FeatureStore& features) {
  std::unordered_map<std::string, double> cache;
  auto score = [&](const std::string& utt) {
    auto it = cache.find(utt);
    if (it != cache.end()) return it->second;
    const double s = forward(model, detail::feature_for(features, utt), Mode::eval).score;
    cache.emplace(utt, s);
    return s;
  };
  std::vector<PrefPrediction> out;
  out.reserve(labels.size());
  for (const CcrLabel& l : labels)
    out.push_back({l.utt_i, l.utt_j, score(l.utt_i), score(l.utt_j), l.choice});
  return out;
}

inline PprefPair evaluate_ppref(const ScorerParameters& model,
                                std::span<const CcrLabel> test,
                                const FeatureStore& features) {
  const auto preds = predict_pairs(model, test, features);
  PprefPair r;
  for (PrefSubset s : {PrefSubset::strong, PrefSubset::weak}) {
    bool any = false;
    for (const auto& p : preds) any = any || in_subset(s, p.label);
    if (!any) continue;
    (s == PrefSubset::strong ? r.strong : r.weak) = ppref(preds, s);
  }
  return r;
}

}  // namespace svdrank
