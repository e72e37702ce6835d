// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dsp/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "core/error.hpp"

namespace cl4ac::dsp {
namespace {

struct FftwBuffer {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  explicit FftwBuffer(std::size_t n)
      : in(fftw_alloc_real(n)), out(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftwBuffer() {
    fftw_free(in);
    fftw_free(out);
  }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

// FFTW planning is not thread-safe; execution with new arrays is. Plans are
// cached per size for the life of the process.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  FftwBuffer scratch(n);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), scratch.in, scratch.out, FFTW_ESTIMATE);
  plans.emplace(n, p);
  return p;
}

}  // namespace

std::size_t frame_count(std::size_t length, std::size_t frame, std::size_t hop) {
  if (length < frame) return 0;
  return (length - frame) / hop + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Spectrogram stft_power(const AudioClip& clip, std::size_t frame, std::size_t hop) {
  if (clip.sample_rate <= 0) throw InputError("sample rate must be positive");
  if (frame == 0 || hop == 0) throw ConfigError("frame and hop must be positive");
  if (clip.samples.size() < frame) {
    throw InputError("clip of " + std::to_string(clip.samples.size()) +
                     " samples is shorter than one frame (" + std::to_string(frame) + ")");
  }
  const std::size_t frames = frame_count(clip.samples.size(), frame, hop);
  const std::size_t bins = frame / 2 + 1;
  std::vector<double> window(frame);
  for (std::size_t n = 0; n < frame; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(frame));
  }
  Spectrogram spec{bins, frames, std::vector<double>(bins * frames)};
  fftw_plan plan = r2c_plan(frame);
  FftwBuffer buf(frame);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* src = clip.samples.data() + f * hop;
    for (std::size_t n = 0; n < frame; ++n) buf.in[n] = window[n] * src[n];
    fftw_execute_dft_r2c(plan, buf.in, buf.out);
    for (std::size_t k = 0; k < bins; ++k) {
      spec.values[k * frames + f] = buf.out[k][0] * buf.out[k][0] + buf.out[k][1] * buf.out[k][1];
    }
  }
  return spec;
}

Spectrogram mel_filterbank(std::size_t n_mels, int sample_rate, std::size_t n_fft, double f_min,
                           double f_max) {
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  if (f_max <= 0.0) f_max = nyquist;
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= nyquist)) {
    throw ConfigError("mel filterbank needs 0 <= f_min < f_max <= sample_rate / 2");
  }
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_min), mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }
  Spectrogram fb{n_mels, bins, std::vector<double>(n_mels * bins, 0.0)};
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    double peak = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      fb.values[m * bins + k] = w;
      peak = std::max(peak, w);
    }
    if (peak <= 0.0) {
      throw ConfigError("mel band " + std::to_string(m) + " contains no FFT bin; " +
                        std::to_string(n_mels) + " bands is too many for n_fft " +
                        std::to_string(n_fft));
    }
    for (std::size_t k = 0; k < bins; ++k) fb.values[m * bins + k] /= peak;
  }
  return fb;
}

MelSpectrogram log_mel(const AudioClip& clip, const DspConfig& cfg) {
  const Spectrogram power = stft_power(clip, cfg.frame, cfg.hop);
  // The filterbank depends only on (n_mels, rate, n_fft, band edges).
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, int, std::size_t, double, double>,
                  std::shared_ptr<const Spectrogram>> cache;
  std::shared_ptr<const Spectrogram> fb;
  {
    const auto key = std::make_tuple(cfg.n_mels, clip.sample_rate, cfg.frame, cfg.f_min, cfg.f_max);
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, std::make_shared<const Spectrogram>(mel_filterbank(
                                  cfg.n_mels, clip.sample_rate, cfg.frame, cfg.f_min, cfg.f_max)))
               .first;
    }
    fb = it->second;
  }
  MelSpectrogram mel{cfg.n_mels, power.cols, std::vector<float>(cfg.n_mels * power.cols)};
  std::vector<double> acc(power.cols);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < power.rows; ++k) {
      const double w = fb->values[m * fb->cols + k];
      if (w == 0.0) continue;
      const double* prow = power.values.data() + k * power.cols;
      for (std::size_t f = 0; f < power.cols; ++f) acc[f] += w * prow[f];
    }
    for (std::size_t f = 0; f < power.cols; ++f) {
      mel.values[m * power.cols + f] = static_cast<float>(std::log(std::max(acc[f], kLogFloor)));
    }
  }
  return mel;
}

SpecAugmentConfig SpecAugmentConfig::defaults_for(std::size_t frames) {
  return SpecAugmentConfig{2, 8, 2, frames / 8};
}

void mask_bands(MelSpectrogram& mel, std::size_t start, std::size_t width, float fill) {
  if (start + width > mel.bands) throw ContractError("band mask outside the spectrogram");
  for (std::size_t b = start; b < start + width; ++b)
    for (std::size_t f = 0; f < mel.frames; ++f) mel.at(b, f) = fill;
}

void mask_frames(MelSpectrogram& mel, std::size_t start, std::size_t width, float fill) {
  if (start + width > mel.frames) throw ContractError("frame mask outside the spectrogram");
  for (std::size_t b = 0; b < mel.bands; ++b)
    for (std::size_t f = start; f < start + width; ++f) mel.at(b, f) = fill;
}

MelSpectrogram spec_augment(const MelSpectrogram& mel, const SpecAugmentConfig& cfg, Rng& rng) {
  if (cfg.max_freq_width > mel.bands || cfg.max_time_width > mel.frames) {
    throw ContractError("SpecAugment mask width exceeds the spectrogram extent");
  }
  MelSpectrogram out = mel;
  if (mel.values.empty()) return out;
  double total = 0.0;
  for (float v : mel.values) total += v;
  const auto fill = static_cast<float>(total / static_cast<double>(mel.values.size()));
  for (std::size_t i = 0; i < cfg.n_freq_masks; ++i) {
    const auto width = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(cfg.max_freq_width)));
    const auto start = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(mel.bands - width)));
    mask_bands(out, start, width, fill);
  }
  for (std::size_t i = 0; i < cfg.n_time_masks; ++i) {
    const auto width = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(cfg.max_time_width)));
    const auto start = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(mel.frames - width)));
    mask_frames(out, start, width, fill);
  }
  return out;
}

}  // namespace cl4ac::dsp
