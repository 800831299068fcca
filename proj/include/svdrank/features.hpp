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

// Model inputs: magnitude spectrograms computed from 16 kHz speech and
// fixed-dimension pooled feature vectors ingested from disk.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "svdrank/binary_io.hpp"
#include "svdrank/error.hpp"

namespace svdrank {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kWindow = 512;  // 32 ms
inline constexpr std::size_t kHop = 256;     // 16 ms
inline constexpr std::size_t kBins = kWindow / 2 + 1;
inline constexpr double kDefaultTargetDb = -26.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;
};

// T x 257 magnitudes, row-major, one row per 16 ms frame.
struct Spectrogram {
  std::size_t frames = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t t) const {
    return {data.data() + t * kBins, kBins};
  }
  float at(std::size_t t, std::size_t bin) const { return data[t * kBins + bin]; }
  bool operator==(const Spectrogram&) const = default;
};

struct PooledFeature {
  std::vector<float> values;
  bool operator==(const PooledFeature&) const = default;
};

namespace detail {

// Per-thread real-to-complex FFTW plan for one kWindow frame. Planner calls
// are serialized.
class FramePlan {
 public:
  FramePlan() {
    std::lock_guard lock(planner_mutex());
    in_ = fftw_alloc_real(kWindow);
    out_ = fftw_alloc_complex(kBins);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kWindow), in_, out_, FFTW_ESTIMATE);
  }
  ~FramePlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  FramePlan(const FramePlan&) = delete;
  FramePlan& operator=(const FramePlan&) = delete;

  double* input() { return in_; }
  // Magnitudes of bins 0..kWindow/2 of the current input.
  void magnitudes(float* dst) {
    fftw_execute(plan_);
    for (std::size_t b = 0; b < kBins; ++b)
      dst[b] = static_cast<float>(std::hypot(out_[b][0], out_[b][1]));
  }

  static FramePlan& local() {
    thread_local FramePlan plan;
    return plan;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace detail

// Periodic Hamming window of length kWindow.
inline const std::vector<double>& hamming_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWindow);
    for (std::size_t n = 0; n < kWindow; ++n)
      v[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                    static_cast<double>(kWindow));
    return v;
  }();
  return w;
}

// 512-sample Hamming frames with a 256-sample hop; the trailing partial
// window is dropped. No pre-emphasis and no log compression.
inline Spectrogram stft_magnitude(const Waveform& w) {
  if (w.sample_rate_hz != kSampleRate)
    throw ConfigError("expected " + std::to_string(kSampleRate) +
                      " Hz audio, got " + std::to_string(w.sample_rate_hz));
  if (w.samples.size() < kWindow)
    throw ConfigError("waveform of " + std::to_string(w.samples.size()) +
                      " samples is shorter than one 512-sample window");
  const auto& win = hamming_window();
  Spectrogram s;
  s.frames = (w.samples.size() - kWindow) / kHop + 1;
  s.data.resize(s.frames * kBins);
  detail::FramePlan& plan = detail::FramePlan::local();
  for (std::size_t t = 0; t < s.frames; ++t) {
    const double* x = w.samples.data() + t * kHop;
    for (std::size_t n = 0; n < kWindow; ++n) plan.input()[n] = x[n] * win[n];
    plan.magnitudes(s.data.data() + t * kBins);
  }
  return s;
}

// Scales the waveform so the RMS over non-silent 32 ms frames equals
// `target_level_db` dBFS. A frame is silent when its RMS is more than 40 dB
// below the loudest frame.
inline Waveform level_normalize(const Waveform& w,
                                double target_level_db = kDefaultTargetDb) {
  const std::size_t n = w.samples.size();
  std::vector<double> frame_energy;
  std::vector<std::size_t> frame_len;
  double max_rms = 0.0;
  for (std::size_t start = 0; start < n; start += kWindow) {
    const std::size_t len = std::min(kWindow, n - start);
    double e = 0.0;
    for (std::size_t k = 0; k < len; ++k) e += w.samples[start + k] * w.samples[start + k];
    frame_energy.push_back(e);
    frame_len.push_back(len);
    max_rms = std::max(max_rms, std::sqrt(e / static_cast<double>(len)));
  }
  if (!(max_rms > 0.0)) throw ConfigError("cannot level-normalize an all-silent waveform");
  const double gate = max_rms * std::pow(10.0, -40.0 / 20.0);
  double energy = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < frame_energy.size(); ++f) {
    if (std::sqrt(frame_energy[f] / static_cast<double>(frame_len[f])) < gate) continue;
    energy += frame_energy[f];
    count += frame_len[f];
  }
  const double rms = std::sqrt(energy / static_cast<double>(count));
  const double gain = std::pow(10.0, target_level_db / 20.0) / rms;
  Waveform out = w;
  for (double& x : out.samples) x *= gain;
  return out;
}

// Arithmetic mean over the rows of a row-major rows x cols matrix.
template <class T>
std::vector<double> time_average(std::span<const T> data, std::size_t rows,
                                 std::size_t cols) {
  if (rows == 0 || cols == 0) throw ConfigError("time_average of an empty matrix");
  if (data.size() != rows * cols) throw ConfigError("time_average: shape mismatch");
  std::vector<double> mean(cols, 0.0);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += static_cast<double>(data[t * cols + c]);
  for (double& m : mean) m /= static_cast<double>(rows);
  return mean;
}

inline PooledFeature time_average(const Spectrogram& s) {
  auto mean = time_average(std::span<const float>(s.data), s.frames, kBins);
  return {std::vector<float>(mean.begin(), mean.end())};
}

// ---------------------------------------------------------------------------
// Codecs

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::uint32_t kSpectrogramVersion = 1;

inline std::string encode_pooled_feature(const PooledFeature& f) {
  binio::Writer w;
  w.bytes("SVDF");
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(f.values.size()));
  for (float v : f.values) w.f32(v);
  return w.data();
}

inline PooledFeature decode_pooled_feature(binio::Reader r) {
  r.expect_magic("SVDF");
  if (const auto v = r.u32(); v != kFeatureVersion)
    throw FormatError(r.name() + ": unsupported feature version " + std::to_string(v));
  const std::uint32_t dim = r.u32();
  if (dim == 0) throw FormatError(r.name() + ": zero feature dimension");
  if (r.remaining() < std::size_t{dim} * 4)
    throw FormatError(r.name() + ": truncated file (declared D=" + std::to_string(dim) +
                      ", found " + std::to_string(r.remaining() / 4) + " values)");
  PooledFeature f;
  f.values.resize(dim);
  for (auto& v : f.values) {
    v = r.f32();
    if (!std::isfinite(v)) throw FormatError(r.name() + ": non-finite feature value");
  }
  r.expect_end();
  return f;
}

inline void save_pooled_feature(const PooledFeature& f, const std::string& path) {
  binio::Writer w;
  w.bytes(encode_pooled_feature(f));
  w.save(path);
}

inline PooledFeature load_pooled_feature(const std::string& path) {
  return decode_pooled_feature(binio::Reader::open(path));
}

inline std::string encode_spectrogram(const Spectrogram& s) {
  binio::Writer w;
  w.bytes("SVDS");
  w.u32(kSpectrogramVersion);
  w.u32(static_cast<std::uint32_t>(s.frames));
  w.u32(static_cast<std::uint32_t>(kBins));
  for (float v : s.data) w.f32(v);
  return w.data();
}

inline Spectrogram decode_spectrogram(binio::Reader r) {
  r.expect_magic("SVDS");
  if (const auto v = r.u32(); v != kSpectrogramVersion)
    throw FormatError(r.name() + ": unsupported spectrogram version " + std::to_string(v));
  Spectrogram s;
  s.frames = r.u32();
  if (const auto bins = r.u32(); bins != kBins)
    throw FormatError(r.name() + ": expected 257 bins, found " + std::to_string(bins));
  if (s.frames == 0) throw FormatError(r.name() + ": zero frames");
  if (r.remaining() < s.frames * kBins * 4) throw FormatError(r.name() + ": truncated file");
  s.data.resize(s.frames * kBins);
  for (auto& v : s.data) {
    v = r.f32();
    if (!std::isfinite(v) || v < 0.0f)
      throw FormatError(r.name() + ": spectrogram values must be finite and >= 0");
  }
  r.expect_end();
  return s;
}

inline void save_spectrogram(const Spectrogram& s, const std::string& path) {
  binio::Writer w;
  w.bytes(encode_spectrogram(s));
  w.save(path);
}

inline Spectrogram load_spectrogram(const std::string& path) {
  return decode_spectrogram(binio::Reader::open(path));
}

// ---------------------------------------------------------------------------
// RIFF WAVE, 16-bit PCM mono

inline std::string encode_wav(const Waveform& w) {
  binio::Writer out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.bytes("RIFF");
  out.u32(36 + data_bytes);
  out.bytes("WAVEfmt ");
  out.u32(16);
  out.u8(1); out.u8(0);  // PCM
  out.u8(1); out.u8(0);  // mono
  out.u32(static_cast<std::uint32_t>(w.sample_rate_hz));
  out.u32(static_cast<std::uint32_t>(w.sample_rate_hz) * 2);
  out.u8(2); out.u8(0);
  out.u8(16); out.u8(0);
  out.bytes("data");
  out.u32(data_bytes);
  for (double x : w.samples) {
    const double c = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    const auto v = static_cast<std::uint16_t>(static_cast<std::int16_t>(c));
    out.u8(static_cast<std::uint8_t>(v & 0xff));
    out.u8(static_cast<std::uint8_t>(v >> 8));
  }
  return out.data();
}

inline Waveform decode_wav(binio::Reader r) {
  r.expect_magic("RIFF");
  r.u32();
  r.expect_magic("WAVE");
  bool have_fmt = false;
  Waveform w;
  while (r.remaining() >= 8) {
    const std::string id = r.bytes(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) throw FormatError(r.name() + ": short fmt chunk");
      const std::uint32_t fmt_mono = r.u32();  // format tag + channels
      w.sample_rate_hz = static_cast<int>(r.u32());
      r.u32();
      const std::uint32_t align_bits = r.u32();
      if ((fmt_mono & 0xffff) != 1 || (fmt_mono >> 16) != 1 || (align_bits >> 16) != 16)
        throw FormatError(r.name() + ": only 16-bit PCM mono is supported");
      r.bytes(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(r.name() + ": data chunk before fmt");
      const std::string raw = r.bytes(size);
      w.samples.resize(size / 2);
      for (std::size_t k = 0; k < w.samples.size(); ++k) {
        const auto lo = static_cast<std::uint8_t>(raw[2 * k]);
        const auto hi = static_cast<std::uint8_t>(raw[2 * k + 1]);
        const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        w.samples[k] = v / 32768.0;
      }
      return w;
    } else {
      r.bytes(size + (size & 1));
    }
  }
  throw FormatError(r.name() + ": no data chunk");
}

inline Waveform load_wav(const std::string& path) {
  return decode_wav(binio::Reader::open(path));
}

inline void save_wav(const Waveform& w, const std::string& path) {
  binio::Writer out;
  out.bytes(encode_wav(w));
  out.save(path);
}

}  // namespace svdrank
