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
#include <cstring>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "svdrank/features.hpp"

namespace svdrank {
namespace {

Waveform sine(double hz, std::size_t n, double amp = 1.0) {
  Waveform w;
  w.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    w.samples[t] = amp * std::sin(2 * std::numbers::pi * hz * t / kSampleRate);
  return w;
}

double rms(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s / x.size());
}

TEST(Stft, ZerosGiveZeroFrames) {
  Waveform w;
  w.samples.assign(1024, 0.0);
  const Spectrogram s = stft_magnitude(w);
  EXPECT_EQ(s.frames, 3u);
  for (float v : s.data) EXPECT_EQ(v, 0.0f);
}

TEST(Stft, FrameCountFormulaAndBoundary) {
  Waveform w;
  w.samples.assign(512, 0.1);
  EXPECT_EQ(stft_magnitude(w).frames, 1u);
  w.samples.assign(511, 0.1);
  EXPECT_THROW(stft_magnitude(w), ConfigError);
  w.samples.assign(5000, 0.1);
  EXPECT_EQ(stft_magnitude(w).frames, (5000u - 512u) / 256u + 1u);
  w.sample_rate_hz = 8000;
  EXPECT_THROW(stft_magnitude(w), ConfigError);
}

TEST(Stft, OneKilohertzPeaksAtBin32AndMatchesDirectDft) {
  const Waveform w = sine(1000.0, 4000);
  const Spectrogram s = stft_magnitude(w);
  const auto win = oracle::hamming_periodic(kWindow);
  for (std::size_t t = 0; t < s.frames; ++t) {
    auto row = s.row(t);
    EXPECT_EQ(std::max_element(row.begin(), row.end()) - row.begin(), 32);
    const auto ref = oracle::dft_magnitude(
        std::span<const double>(w.samples.data() + t * kHop, kWindow), win);
    for (std::size_t b = 0; b < kBins; ++b)
      EXPECT_NEAR(row[b], ref[b], 1e-5 * ref[32]) << "frame " << t << " bin " << b;
  }
}

TEST(Stft, SignFlipInvariantAndQuadraticEnergy) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 0.2);
  Waveform w;
  for (int k = 0; k < 2000; ++k) w.samples.push_back(n(rng));
  Waveform neg = w, scaled = w;
  for (double& x : neg.samples) x = -x;
  for (double& x : scaled.samples) x *= 3.0;
  const Spectrogram a = stft_magnitude(w), b = stft_magnitude(neg), c = stft_magnitude(scaled);
  EXPECT_EQ(a, b);
  double ea = 0, ec = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ea += double(a.data[i]) * a.data[i];
    ec += double(c.data[i]) * c.data[i];
  }
  // Magnitudes are stored as f32, which bounds the achievable agreement.
  EXPECT_NEAR(ec / ea, 9.0, 9.0 * 1e-6);
}

TEST(LevelNormalize, ScalarGain) {
  const Waveform w = sine(440.0, 16000, 0.1 * std::numbers::sqrt2);  // RMS 0.1
  const Waveform out = level_normalize(w, 20 * std::log10(0.2));
  for (std::size_t t = 0; t < w.samples.size(); t += 97)
    EXPECT_NEAR(out.samples[t], 2.0 * w.samples[t], 1e-3 * 0.2);
  EXPECT_NEAR(rms(out.samples), 0.2, 0.2 * 1e-3);
}

TEST(LevelNormalize, SilenceExcluded) {
  Waveform w = sine(300.0, 8192, 0.5);
  const Waveform loud = w;
  w.samples.resize(16384, 0.0);
  const double target = -20.0;
  const Waveform a = level_normalize(loud, target);
  const Waveform b = level_normalize(w, target);
  EXPECT_NEAR(b.samples[100] / w.samples[100], a.samples[100] / loud.samples[100], 1e-12);
  std::vector<double> voiced(b.samples.begin(), b.samples.begin() + 8192);
  EXPECT_NEAR(rms(voiced), std::pow(10.0, target / 20), 1e-6 * std::pow(10.0, target / 20));
}

TEST(LevelNormalize, IdempotentAndRejectsSilence) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.3);
  Waveform w;
  for (int k = 0; k < 6000; ++k) w.samples.push_back(k < 3000 ? n(rng) : 0.001 * n(rng));
  const Waveform once = level_normalize(w);
  const Waveform twice = level_normalize(once);
  for (std::size_t t = 0; t < w.samples.size(); ++t)
    EXPECT_NEAR(twice.samples[t], once.samples[t], 1e-6);
  Waveform silent;
  silent.samples.assign(1000, 0.0);
  EXPECT_THROW(level_normalize(silent), ConfigError);
}

TEST(TimeAverage, IdentityMeanAndOracle) {
  const std::vector<double> one{1, 2, 3};
  EXPECT_EQ(time_average(std::span<const double>(one), 1, 3), one);
  const std::vector<double> col{1, 3};
  EXPECT_EQ(time_average(std::span<const double>(col), 2, 1), std::vector<double>{2});
  EXPECT_THROW(time_average(std::span<const double>(), 0, 3), ConfigError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<std::vector<double>> rows(5, std::vector<double>(4));
  std::vector<double> flat;
  for (auto& r : rows)
    for (double& v : r) flat.push_back(v = u(rng));
  const auto got = time_average(std::span<const double>(flat), 5, 4);
  const auto ref = oracle::column_means(rows);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(got[c], ref[c], 1e-12);
}

TEST(FeatureFile, RoundTripIsBitwise) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0, 1);
  PooledFeature f;
  for (int k = 0; k < 768; ++k) f.values.push_back(n(rng));
  const auto path = std::filesystem::temp_directory_path() / "svdrank_feature_test.svdf";
  save_pooled_feature(f, path.string());
  const PooledFeature back = load_pooled_feature(path.string());
  ASSERT_EQ(back.values.size(), 768u);
  EXPECT_EQ(std::memcmp(back.values.data(), f.values.data(), 768 * sizeof(float)), 0);
  std::filesystem::remove(path);
}

TEST(FeatureFile, ExactLayout) {
  const std::string bytes = encode_pooled_feature({{1.0f, -2.0f}});
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "SVDF");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(12, 4), std::string("\x00\x00\x80\x3f", 4));  // 1.0f
}

TEST(FeatureFile, Errors) {
  PooledFeature f;
  f.values.assign(768, 0.5f);
  std::string bytes = encode_pooled_feature(f);
  try {
    decode_pooled_feature(binio::Reader(bytes.substr(0, bytes.size() - 4)));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_pooled_feature(binio::Reader(bad)), FormatError);
  f.values[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(decode_pooled_feature(binio::Reader(encode_pooled_feature(f))), FormatError);
}

TEST(SpectrogramFile, RoundTrip) {
  const Spectrogram s = stft_magnitude(sine(700, 3000));
  const std::string bytes = encode_spectrogram(s);
  EXPECT_EQ(bytes.size(), 16 + s.frames * kBins * 4);
  EXPECT_EQ(decode_spectrogram(binio::Reader(bytes)), s);
}

TEST(Wav, RoundTripWithin16BitQuantization) {
  const Waveform w = sine(250, 4000, 0.5);
  const Waveform back = decode_wav(binio::Reader(encode_wav(w)));
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.sample_rate_hz, kSampleRate);
  for (std::size_t t = 0; t < w.samples.size(); ++t)
    EXPECT_NEAR(back.samples[t], w.samples[t], 1.0 / 32768);
}

}  // namespace
}  // namespace svdrank
