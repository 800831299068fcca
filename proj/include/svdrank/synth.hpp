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

// Synthetic corpora with known latent descriptor scores.
//
// Each speaker has a base score ~ Normal(0, 1); each utterance adds
// Normal(0, sigma_jitter) jitter to give its latent score z. Pooled features
// are a fixed random linear embedding of z plus isotropic noise, and audio
// (optional) is a harmonic complex whose spectral tilt follows z. Simulated
// annotators see z through Normal(0, sigma_label) noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "svdrank/dataset.hpp"
#include "svdrank/features.hpp"
#include "svdrank/metrics.hpp"
#include "svdrank/rng.hpp"
#include "svdrank/scorer.hpp"

namespace svdrank {

struct WorldConfig {
  std::size_t n_speakers = 200;
  std::size_t utts_per_speaker = 3;
  std::size_t feature_dim = 32;
  std::size_t n_sentences = 15;
  double sigma_jitter = 0.2;
  double sigma_label = 0.4;
  double tau = 0.5;
  double feature_noise = 0.3;
  bool identity_embedding = false;  // only meaningful for feature_dim == 1
  bool render_audio = false;
  double audio_seconds = 0.2;
  std::uint64_t seed = 0;
};

struct LatentWorld {
  WorldConfig config;
  std::map<std::string, double> speaker_base;
  std::unordered_map<std::string, double> z;
  std::vector<double> embedding;
  double z_min = 0.0;
  double z_max = 0.0;

  double latent(const std::string& utt) const {
    auto it = z.find(utt);
    if (it == z.end()) throw ConfigError("utterance \"" + utt + "\" is not in the world");
    return it->second;
  }

  // Affine map of the corpus z-range onto the 1..5 rating scale.
  double rating_scale(double zu) const {
    if (z_max <= z_min) return 3.0;
    return 1.0 + 4.0 * (zu - z_min) / (z_max - z_min);
  }
};

struct SyntheticCorpus {
  Corpus corpus;
  LatentWorld world;
  FeatureStore pooled;                      // utterance -> PooledFeature
  FeatureStore spectrograms;                // filled when render_audio
  std::map<std::string, Waveform> audio;    // filled when render_audio
};

inline std::string synth_speaker_id(std::size_t s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "spk%04zu", s);
  return buf;
}

inline std::string synth_utt_id(std::size_t s, std::size_t k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "spk%04zu_u%02zu", s, k);
  return buf;
}

// Harmonic complex at a gender-dependent f0 with per-harmonic amplitude
// h^-tilt, where tilt decreases with the observed latent score. Output is
// level-normalized and quantized to 16 bits.
inline Waveform render_voice(double z_obs, Gender g, double f0_jitter, double seconds,
                             Rng& rng) {
  const double f0 = (g == Gender::female ? 210.0 : 120.0) * (1.0 + f0_jitter);
  const double tilt = std::clamp(1.5 - 0.45 * z_obs, 0.2, 3.0);
  const auto n = static_cast<std::size_t>(seconds * kSampleRate);
  Waveform w;
  w.samples.assign(std::max(n, kWindow), 0.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t h = 1; h * f0 < kSampleRate / 2.0 - 200.0; ++h) {
    const double amp = std::pow(static_cast<double>(h), -tilt);
    const double ph = phase(rng);
    const double omega = 2.0 * std::numbers::pi * f0 * static_cast<double>(h) / kSampleRate;
    for (std::size_t t = 0; t < w.samples.size(); ++t)
      w.samples[t] += amp * std::sin(omega * static_cast<double>(t) + ph);
  }
  std::normal_distribution<double> noise(0.0, 0.003);
  for (double& x : w.samples) x += noise(rng);
  w = level_normalize(w);
  for (double& x : w.samples)
    x = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0) / 32768.0;
  return w;
}

// Speakers alternate female/male; utterance k of speaker s reads sentence
// (s/2 + k) mod n_sentences so same-gender speakers overlap on sentences.
inline SyntheticCorpus generate_corpus(const WorldConfig& cfg) {
  if (cfg.n_speakers == 0 || cfg.utts_per_speaker == 0 || cfg.feature_dim == 0 ||
      cfg.n_sentences == 0)
    throw ConfigError("synthetic corpus counts must be >= 1");
  if (cfg.sigma_jitter < 0 || cfg.sigma_label < 0 || cfg.feature_noise < 0 || !(cfg.tau > 0))
    throw ConfigError("synthetic noise scales must be >= 0 and tau > 0");
  SyntheticCorpus out;
  LatentWorld& world = out.world;
  world.config = cfg;

  Rng embed_rng = make_rng(cfg.seed, 0x31);
  std::normal_distribution<double> unit(0.0, 1.0);
  world.embedding.resize(cfg.feature_dim);
  if (cfg.identity_embedding && cfg.feature_dim == 1)
    world.embedding[0] = 1.0;
  else
    for (double& a : world.embedding) a = unit(embed_rng);

  std::vector<Utterance> utts;
  Rng rng = make_rng(cfg.seed, 0x32);
  std::normal_distribution<double> jitter(0.0, cfg.sigma_jitter);
  std::normal_distribution<double> fnoise(0.0, cfg.feature_noise);
  std::uniform_real_distribution<double> f0_jitter(-0.15, 0.15);
  world.z_min = std::numeric_limits<double>::infinity();
  world.z_max = -world.z_min;
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    const std::string spk = synth_speaker_id(s);
    const double base = unit(rng);
    const double spk_f0 = f0_jitter(rng);
    world.speaker_base[spk] = base;
    const Gender g = s % 2 == 0 ? Gender::female : Gender::male;
    for (std::size_t k = 0; k < cfg.utts_per_speaker; ++k) {
      Utterance u;
      u.id = synth_utt_id(s, k);
      u.speaker_id = spk;
      u.gender = g;
      u.sentence_id = "s" + std::to_string((s / 2 + k) % cfg.n_sentences);
      u.duration_s = std::max(cfg.audio_seconds, static_cast<double>(kWindow) / kSampleRate);
      u.source_kind = cfg.render_audio ? SourceKind::audio : SourceKind::feature;
      u.source_path = cfg.render_audio ? "audio/" + u.id + ".wav" : "features/" + u.id + ".svdf";
      const double zu = base + (cfg.sigma_jitter > 0 ? jitter(rng) : 0.0);
      world.z[u.id] = zu;
      world.z_min = std::min(world.z_min, zu);
      world.z_max = std::max(world.z_max, zu);

      PooledFeature f;
      f.values.resize(cfg.feature_dim);
      for (std::size_t d = 0; d < cfg.feature_dim; ++d)
        f.values[d] = static_cast<float>(world.embedding[d] * zu +
                                         (cfg.feature_noise > 0 ? fnoise(rng) : 0.0));
      out.pooled.emplace(u.id, std::move(f));

      if (cfg.render_audio) {
        Rng audio_rng = make_rng(cfg.seed, 0x10000 + s * 1000 + k);
        std::normal_distribution<double> obs(0.0, cfg.feature_noise);
        const double z_obs = zu + (cfg.feature_noise > 0 ? obs(audio_rng) : 0.0);
        Waveform w = render_voice(z_obs, g, spk_f0, cfg.audio_seconds, audio_rng);
        out.spectrograms.emplace(u.id, stft_magnitude(w));
        out.audio.emplace(u.id, std::move(w));
      }
      utts.push_back(std::move(u));
    }
  }
  out.corpus = Corpus(std::move(utts));
  return out;
}

inline std::string synth_annotator_id(std::size_t k) { return "synth_a" + std::to_string(k); }

// rating = clamp(round(rating_scale(z) + Normal(0, sigma_label)), 1, 5) for a
// uniformly chosen utterance per label.
inline std::vector<AcrLabel> generate_acr(const LatentWorld& world,
                                          const std::vector<std::string>& utterances,
                                          std::size_t n_labels, const std::string& svd_id,
                                          std::uint64_t seed, std::size_t n_annotators = 50) {
  if (utterances.empty()) throw ConfigError("generate_acr: no utterances");
  std::vector<AcrLabel> out;
  out.reserve(n_labels);
  for (std::size_t k = 0; k < n_labels; ++k) {
    Rng rng = make_rng(seed, 0x41000000 + k);
    std::uniform_int_distribution<std::size_t> pick(0, utterances.size() - 1);
    std::uniform_int_distribution<std::size_t> who(0, n_annotators - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::string& utt = utterances[pick(rng)];
    const double r = world.rating_scale(world.latent(utt)) +
                     world.config.sigma_label * noise(rng);
    const int rating = static_cast<int>(std::clamp(std::round(r), 1.0, 5.0));
    out.push_back({svd_id, synth_annotator_id(who(rng)), utt, rating});
  }
  return out;
}

// Forced four-way choice from d = (z_j + e_j) - (z_i + e_i).
inline CcrChoice ccr_choice_from_difference(double d, double tau) {
  if (d > tau) return CcrChoice::j_more;
  if (d > 0) return CcrChoice::j_little_more;
  if (d > -tau) return CcrChoice::i_little_more;
  return CcrChoice::i_more;
}

inline CcrChoice simulate_ccr_response(const LatentWorld& world, const std::string& utt_i,
                                       const std::string& utt_j, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const double s = world.config.sigma_label;
  const double ei = s > 0 ? s * noise(rng) : 0.0;
  const double ej = s > 0 ? s * noise(rng) : 0.0;
  const double d = (world.latent(utt_j) + ej) - (world.latent(utt_i) + ei);
  return ccr_choice_from_difference(d, world.config.tau);
}

// Labels a uniformly chosen pair per label, keeping the pair's orientation.
inline std::vector<CcrLabel> generate_ccr(
    const LatentWorld& world, const std::vector<std::pair<std::string, std::string>>& pairs,
    std::size_t n_labels, const std::string& svd_id, std::uint64_t seed,
    std::size_t n_annotators = 50) {
  if (pairs.empty()) throw ConfigError("generate_ccr: no eligible pairs");
  std::vector<CcrLabel> out;
  out.reserve(n_labels);
  for (std::size_t k = 0; k < n_labels; ++k) {
    Rng rng = make_rng(seed, 0x42000000 + k);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    std::uniform_int_distribution<std::size_t> who(0, n_annotators - 1);
    const auto& [i, j] = pairs[pick(rng)];
    const CcrChoice c = simulate_ccr_response(world, i, j, rng);
    out.push_back({svd_id, synth_annotator_id(who(rng)), i, j, c});
  }
  return out;
}

// n independent draws of sample_ccr_pair.
inline std::vector<std::pair<std::string, std::string>> sample_pairs(const Corpus& corpus,
                                                                     const Svd& svd,
                                                                     std::size_t n,
                                                                     std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x43);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(sample_ccr_pair(corpus, svd, rng));
  return out;
}

// Every annotator answers every question with independent noise.
inline std::vector<CcrLabel> panel_labels(
    const LatentWorld& world, const std::vector<std::pair<std::string, std::string>>& questions,
    std::size_t n_annotators, const std::string& svd_id, std::uint64_t seed) {
  if (n_annotators == 0) throw ConfigError("panel needs at least one annotator");
  std::vector<CcrLabel> out;
  for (std::size_t q = 0; q < questions.size(); ++q)
    for (std::size_t a = 0; a < n_annotators; ++a) {
      Rng rng = make_rng(seed, (std::uint64_t{q} << 32) | a);
      out.push_back({svd_id, "panel_a" + std::to_string(a), questions[q].first,
                     questions[q].second,
                     simulate_ccr_response(world, questions[q].first, questions[q].second, rng)});
    }
  return out;
}

inline std::vector<ResponseTally> simulate_panel(
    const LatentWorld& world, const std::vector<std::pair<std::string, std::string>>& questions,
    std::size_t n_annotators, std::uint64_t seed) {
  const auto labels = panel_labels(world, questions, n_annotators, "", seed);
  std::vector<ResponseTally> tallies(questions.size());
  for (std::size_t k = 0; k < labels.size(); ++k) tallies[k / n_annotators].add(labels[k].choice);
  return tallies;
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Per-choice response probabilities for one question under the noise model.
inline std::array<double, 4> response_probabilities(const LatentWorld& world,
                                                    const std::string& utt_i,
                                                    const std::string& utt_j) {
  const double delta = world.latent(utt_j) - world.latent(utt_i);
  const double tau = world.config.tau;
  const double s = world.config.sigma_label * std::numbers::sqrt2;
  if (s == 0.0) {
    std::array<double, 4> p{0, 0, 0, 0};
    p[static_cast<std::size_t>(ccr_choice_from_difference(delta, tau))] = 1.0;
    return p;
  }
  const double p_i_more = standard_normal_cdf((-tau - delta) / s);
  const double p_le0 = standard_normal_cdf(-delta / s);
  const double p_le_tau = standard_normal_cdf((tau - delta) / s);
  return {p_i_more, p_le0 - p_i_more, p_le_tau - p_le0, 1.0 - p_le_tau};
}

namespace detail {

// E[max(A, m - A) / m | m > 0] and P(m > 0) for m ~ Bin(n, pa + pb),
// A | m ~ Bin(m, pa / (pa + pb)).
inline std::pair<double, double> expected_agreement(double pa, double pb, std::size_t n) {
  const double q = pa + pb;
  if (!(q > 0)) return {0.0, 0.0};
  const double r = pa / q;
  auto log_binom = [](std::size_t n, std::size_t k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  };
  auto pmf = [&](std::size_t n, std::size_t k, double p) {
    if (p <= 0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1) return k == n ? 1.0 : 0.0;
    return std::exp(log_binom(n, k) + k * std::log(p) + (n - k) * std::log1p(-p));
  };
  double e = 0.0, contributes = 0.0;
  for (std::size_t m = 1; m <= n; ++m) {
    const double pm = pmf(n, m, q);
    if (pm == 0.0) continue;
    double inner = 0.0;
    for (std::size_t a = 0; a <= m; ++a)
      inner += pmf(m, a, r) * static_cast<double>(std::max(a, m - a)) / static_cast<double>(m);
    e += pm * inner;
    contributes += pm;
  }
  return {contributes > 0 ? e / contributes : 0.0, contributes};
}

}  // namespace detail

// Closed-form agreement of the noise model. With n_annotators == 0 this is
// the large-panel limit, per question max(p1, p4) / (p1 + p4) and
// max(p2, p3) / (p2 + p3) averaged uniformly. Otherwise each question's term
// is the exact expectation of the estimator for a panel of that size,
// weighted by the probability that the question contributes at all.
inline UpperBound analytic_agreement(
    const LatentWorld& world, const std::vector<std::pair<std::string, std::string>>& questions,
    std::size_t n_annotators = 0) {
  UpperBound ub;
  double s = 0.0, w = 0.0, s_weight = 0.0, w_weight = 0.0;
  auto add = [&](double pa, double pb, double& sum, double& weight, std::size_t& count) {
    if (!(pa + pb > 0)) return;
    ++count;
    if (n_annotators == 0) {
      sum += std::max(pa, pb) / (pa + pb);
      weight += 1.0;
      return;
    }
    const auto [e, contributes] = detail::expected_agreement(pa, pb, n_annotators);
    sum += contributes * e;
    weight += contributes;
  };
  for (const auto& [i, j] : questions) {
    const auto p = response_probabilities(world, i, j);
    add(p[0], p[3], s, s_weight, ub.strong_questions);
    add(p[1], p[2], w, w_weight, ub.weak_questions);
  }
  if (s_weight > 0) ub.strong = s / s_weight;
  if (w_weight > 0) ub.weak = w / w_weight;
  return ub;
}

struct LabelCounts {
  std::size_t acr = 9000;
  std::size_t ccr = 15000;
  std::size_t panel_questions = 50;
  std::size_t panel_annotators = 50;
};

struct SyntheticLabels {
  LabelSet labels;
  std::vector<std::pair<std::string, std::string>> panel_questions;
  std::vector<CcrLabel> panel;
};

// ACR and CCR label pools plus a common-question panel for one SVD.
inline SyntheticLabels synthesize_labels(const SyntheticCorpus& sc, const Svd& svd,
                                         const LabelCounts& counts) {
  const std::uint64_t seed = sc.world.config.seed;
  std::vector<std::string> ids;
  for (std::size_t i : sc.corpus.in_scope_indices(svd.gender_scope))
    ids.push_back(sc.corpus[i].id);
  SyntheticLabels out;
  out.labels.acr = generate_acr(sc.world, ids, counts.acr, svd.id, derive_seed(seed, 1));
  const auto pairs = sample_pairs(sc.corpus, svd, counts.ccr, derive_seed(seed, 2));
  out.labels.ccr = generate_ccr(sc.world, pairs, counts.ccr, svd.id, derive_seed(seed, 3));
  out.panel_questions =
      sample_pairs(sc.corpus, svd, counts.panel_questions, derive_seed(seed, 4));
  out.panel = panel_labels(sc.world, out.panel_questions, counts.panel_annotators, svd.id,
                           derive_seed(seed, 5));
  return out;
}

inline nlohmann::json world_to_json(const LatentWorld& w) {
  const WorldConfig& c = w.config;
  nlohmann::json j;
  j["config"] = {{"n_speakers", c.n_speakers},     {"utts_per_speaker", c.utts_per_speaker},
                 {"feature_dim", c.feature_dim},   {"n_sentences", c.n_sentences},
                 {"sigma_jitter", c.sigma_jitter}, {"sigma_label", c.sigma_label},
                 {"tau", c.tau},                   {"feature_noise", c.feature_noise},
                 {"render_audio", c.render_audio}, {"seed", c.seed}};
  j["speaker_base"] = w.speaker_base;
  j["z"] = std::map<std::string, double>(w.z.begin(), w.z.end());
  j["embedding"] = w.embedding;
  j["z_min"] = w.z_min;
  j["z_max"] = w.z_max;
  return j;
}

// Writes manifest.jsonl, feature or audio files, and world.json under `dir`.
inline void write_synthetic_corpus(const SyntheticCorpus& sc, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / (sc.world.config.render_audio ? "audio" : "features"));
  for (const Utterance& u : sc.corpus.utterances()) {
    if (u.source_kind == SourceKind::audio)
      save_wav(sc.audio.at(u.id), (dir / u.source_path).string());
    else
      save_pooled_feature(std::get<PooledFeature>(sc.pooled.at(u.id)),
                          (dir / u.source_path).string());
  }
  save_manifest(sc.corpus, (dir / "manifest.jsonl").string());
  std::ofstream((dir / "world.json").string()) << world_to_json(sc.world).dump(1) << '\n';
}

}  // namespace svdrank
