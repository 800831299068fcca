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
#include <filesystem>

#include "svdrank/synth.hpp"
#include "svdrank/training.hpp"

namespace svdrank {
namespace {

WorldConfig small(std::size_t speakers = 20) {
  WorldConfig c;
  c.n_speakers = speakers;
  return c;
}

LatentWorld three_point_world(double sigma) {
  LatentWorld w;
  w.config.sigma_label = sigma;
  w.z = {{"lo", 0.0}, {"mid", 0.5}, {"hi", 1.0}};
  w.z_min = 0.0;
  w.z_max = 1.0;
  return w;
}

TEST(World, CountsIdsAndLayout) {
  WorldConfig c = small(2);
  c.utts_per_speaker = 1;
  const SyntheticCorpus sc = generate_corpus(c);
  EXPECT_EQ(sc.corpus.size(), 2u);
  const SyntheticCorpus big = generate_corpus(small(10));
  EXPECT_EQ(big.corpus.size(), 30u);
  const Utterance& u = big.corpus.at("spk0003_u01");
  EXPECT_EQ(u.speaker_id, "spk0003");
  EXPECT_EQ(u.gender, Gender::male);
  EXPECT_EQ(u.sentence_id, "s2");
  EXPECT_EQ(big.corpus.at("spk0002_u00").gender, Gender::female);
  EXPECT_EQ(big.world.embedding.size(), 32u);
  EXPECT_THROW(generate_corpus(small(0)), ConfigError);
}

TEST(World, IdentityEmbeddingWithoutNoiseExposesLatent) {
  WorldConfig c = small(6);
  c.feature_dim = 1;
  c.identity_embedding = true;
  c.feature_noise = 0.0;
  const SyntheticCorpus sc = generate_corpus(c);
  for (const auto& [id, x] : sc.pooled)
    EXPECT_EQ(std::get<PooledFeature>(x).values[0], static_cast<float>(sc.world.latent(id)));
}

TEST(World, UtterancesShareSpeakerBaseWithoutJitter) {
  WorldConfig c = small(4);
  c.sigma_jitter = 0.0;
  const SyntheticCorpus sc = generate_corpus(c);
  EXPECT_EQ(sc.world.latent("spk0001_u00"), sc.world.latent("spk0001_u02"));
  EXPECT_EQ(sc.world.latent("spk0001_u00"), sc.world.speaker_base.at("spk0001"));
}

TEST(World, DeterministicPerSeed) {
  const SyntheticCorpus a = generate_corpus(small());
  const SyntheticCorpus b = generate_corpus(small());
  EXPECT_EQ(a.world.z, b.world.z);
  EXPECT_EQ(a.pooled, b.pooled);
  WorldConfig other = small();
  other.seed = 1;
  EXPECT_NE(generate_corpus(other).world.z, a.world.z);
}

TEST(Acr, NoiselessRatingsFollowTheScale) {
  const LatentWorld w = three_point_world(0.0);
  const auto mid = generate_acr(w, {"mid"}, 20, "youthfulF", 0);
  for (const auto& l : mid) EXPECT_EQ(l.rating, 3);
  EXPECT_EQ(generate_acr(w, {"lo"}, 1, "youthfulF", 0)[0].rating, 1);
  EXPECT_EQ(generate_acr(w, {"hi"}, 1, "youthfulF", 0)[0].rating, 5);
}

TEST(Acr, RatingsAreClampedAtTheTop) {
  LatentWorld w = three_point_world(3.0);
  const auto labels = generate_acr(w, {"hi"}, 2000, "youthfulF", 1);
  std::size_t fives = 0;
  for (const auto& l : labels) {
    EXPECT_GE(l.rating, 1);
    EXPECT_LE(l.rating, 5);
    fives += l.rating == 5;
  }
  // P(round(5 + e) >= 5) = P(e >= -0.5)
  const double p = 1.0 - standard_normal_cdf(-0.5 / 3.0);
  EXPECT_NEAR(fives / 2000.0, p, 3 * std::sqrt(p * (1 - p) / 2000));
}

TEST(Acr, HistogramMatchesRoundedGaussian) {
  const LatentWorld w = three_point_world(0.4);
  const std::size_t n = 10000;
  const auto labels = generate_acr(w, {"mid"}, n, "youthfulF", 2);
  std::array<std::size_t, 6> hist{};
  for (const auto& l : labels) ++hist[l.rating];
  for (int r = 1; r <= 5; ++r) {
    const double lo = r == 1 ? -1e9 : r - 0.5 - 3.0, hi = r == 5 ? 1e9 : r + 0.5 - 3.0;
    const double p = standard_normal_cdf(hi / 0.4) - standard_normal_cdf(lo / 0.4);
    const double sd = std::sqrt(std::max(p * (1 - p), 1e-6) / n);
    EXPECT_NEAR(hist[r] / double(n), p, 3 * sd + 1e-4) << "rating " << r;
  }
}

TEST(Ccr, ThresholdBands) {
  EXPECT_EQ(ccr_choice_from_difference(1.0, 0.5), CcrChoice::j_more);
  EXPECT_EQ(ccr_choice_from_difference(0.5, 0.5), CcrChoice::j_little_more);
  EXPECT_EQ(ccr_choice_from_difference(0.1, 0.5), CcrChoice::j_little_more);
  EXPECT_EQ(ccr_choice_from_difference(0.0, 0.5), CcrChoice::i_little_more);
  EXPECT_EQ(ccr_choice_from_difference(-0.5, 0.5), CcrChoice::i_more);
  EXPECT_EQ(ccr_choice_from_difference(-2.0, 0.5), CcrChoice::i_more);
}

TEST(Ccr, StrongRateForEqualLatents) {
  LatentWorld w = three_point_world(0.4);
  w.config.tau = 0.5;
  w.z["mid2"] = 0.5;
  const std::size_t n = 20000;
  std::size_t strong = 0;
  Rng rng(3);
  for (std::size_t k = 0; k < n; ++k) strong += is_strong(simulate_ccr_response(w, "mid", "mid2", rng));
  const double p = 2 * standard_normal_cdf(-0.5 / (0.4 * std::numbers::sqrt2));
  EXPECT_NEAR(strong / double(n), p, 3 * std::sqrt(p * (1 - p) / n));
  const auto probs = response_probabilities(w, "mid", "mid2");
  EXPECT_NEAR(probs[0] + probs[3], p, 1e-15);
  EXPECT_NEAR(probs[0] + probs[1] + probs[2] + probs[3], 1.0, 1e-15);
}

TEST(Ccr, GeneratedLabelsKeepOrientation) {
  const SyntheticCorpus sc = generate_corpus(small());
  const Svd svd = svd_from_id("youthfulF");
  const auto pairs = sample_pairs(sc.corpus, svd, 50, 4);
  for (const auto& [i, j] : pairs) {
    const Utterance &a = sc.corpus.at(i), &b = sc.corpus.at(j);
    EXPECT_EQ(a.sentence_id, b.sentence_id);
    EXPECT_EQ(a.gender, Gender::female);
    EXPECT_EQ(b.gender, Gender::female);
    EXPECT_NE(i, j);
  }
  const auto labels = generate_ccr(sc.world, pairs, 200, "youthfulF", 5);
  std::set<std::pair<std::string, std::string>> allowed(pairs.begin(), pairs.end());
  for (const auto& l : labels) EXPECT_TRUE(allowed.count({l.utt_i, l.utt_j}));
  EXPECT_EQ(labels, generate_ccr(sc.world, pairs, 200, "youthfulF", 5));
}

TEST(Panel, NoiselessPanelIsUnanimous) {
  WorldConfig c = small();
  c.sigma_label = 0.0;
  const SyntheticCorpus sc = generate_corpus(c);
  const auto q = sample_pairs(sc.corpus, svd_from_id("youthfulF"), 20, 6);
  const auto tallies = simulate_panel(sc.world, q, 30, 0);
  for (const auto& t : tallies) {
    const auto top = std::max({t.a1, t.a2, t.a3, t.a4});
    EXPECT_EQ(top, 30u);
  }
  const UpperBound ub = upper_bound_estimate(tallies);
  ASSERT_TRUE(ub.strong.has_value());
  EXPECT_EQ(*ub.strong, 1.0);
}

TEST(Panel, LargePanelApproachesClosedForm) {
  const SyntheticCorpus sc = generate_corpus(small(40));
  std::vector<std::pair<std::string, std::string>> q;
  for (const auto& pr : sample_pairs(sc.corpus, svd_from_id("youthfulF"), 60, 7)) {
    const auto p = response_probabilities(sc.world, pr.first, pr.second);
    if (p[0] + p[3] > 0.05 && p[1] + p[2] > 0.05) q.push_back(pr);
  }
  ASSERT_GT(q.size(), 20u);
  const UpperBound est = upper_bound_estimate(simulate_panel(sc.world, q, 3000, 1));
  const UpperBound ref = analytic_agreement(sc.world, q);
  EXPECT_NEAR(*est.strong, *ref.strong, 0.01);
  EXPECT_NEAR(*est.weak, *ref.weak, 0.01);
  EXPECT_GE(*ref.strong, *ref.weak);
}

TEST(Panel, FinitePanelExpectationMatchesEnumeration) {
  // All 4^n response vectors of a three-member panel, each scored like one
  // question of the estimator.
  const std::array<double, 4> p{0.1, 0.3, 0.2, 0.4};
  const std::size_t n = 3;
  double s_num = 0, s_den = 0, w_num = 0, w_den = 0;
  for (int code = 0; code < 64; ++code) {
    std::array<std::size_t, 4> a{};
    double prob = 1;
    for (std::size_t k = 0, c = code; k < n; ++k, c /= 4) {
      ++a[c % 4];
      prob *= p[c % 4];
    }
    if (a[0] + a[3] > 0) {
      s_num += prob * double(std::max(a[0], a[3])) / double(a[0] + a[3]);
      s_den += prob;
    }
    if (a[1] + a[2] > 0) {
      w_num += prob * double(std::max(a[1], a[2])) / double(a[1] + a[2]);
      w_den += prob;
    }
  }
  const auto [es, cs] = detail::expected_agreement(p[0], p[3], n);
  const auto [ew, cw] = detail::expected_agreement(p[1], p[2], n);
  EXPECT_NEAR(es, s_num / s_den, 1e-12);
  EXPECT_NEAR(cs, s_den, 1e-12);
  EXPECT_NEAR(ew, w_num / w_den, 1e-12);
  EXPECT_NEAR(cw, w_den, 1e-12);
  EXPECT_NEAR(detail::expected_agreement(0.5, 0.5, 2).first, 0.75, 1e-15);
  EXPECT_NEAR(detail::expected_agreement(0.3, 0.1, 5000).first, 0.75, 1e-3);
}

TEST(Audio, TiltBrightensWithLatent) {
  auto centroid = [](double z) {
    Rng rng(1);
    const Spectrogram s = stft_magnitude(render_voice(z, Gender::female, 0.0, 0.2, rng));
    const PooledFeature m = time_average(s);
    double num = 0, den = 0;
    for (std::size_t b = 0; b < kBins; ++b) {
      num += b * m.values[b];
      den += m.values[b];
    }
    return num / den;
  };
  EXPECT_LT(centroid(-1.5), centroid(0.0));
  EXPECT_LT(centroid(0.0), centroid(1.5));
}

TEST(Audio, RenderedCorpusHasElevenFrames) {
  WorldConfig c = small(4);
  c.render_audio = true;
  const SyntheticCorpus sc = generate_corpus(c);
  ASSERT_EQ(sc.spectrograms.size(), 12u);
  EXPECT_EQ(std::get<Spectrogram>(sc.spectrograms.at("spk0000_u00")).frames, 11u);
}

TEST(Files, WrittenCorpusLoadsBack) {
  const auto dir = std::filesystem::temp_directory_path() / "svdrank_synth_files";
  for (bool audio : {false, true}) {
    std::filesystem::remove_all(dir);
    WorldConfig c = small(6);
    c.render_audio = audio;
    const SyntheticCorpus sc = generate_corpus(c);
    write_synthetic_corpus(sc, dir);
    const Corpus back = load_corpus((dir / "manifest.jsonl").string());
    ASSERT_EQ(back.size(), sc.corpus.size());
    const FeatureStore store = load_features(
        back, dir, audio ? Architecture::conv_pool : Architecture::pooled_fc);
    EXPECT_EQ(store, audio ? sc.spectrograms : sc.pooled);
    EXPECT_TRUE(std::filesystem::exists(dir / "world.json"));
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace svdrank
