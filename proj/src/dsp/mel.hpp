// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsp/audio.hpp"
#include "numerics/rng.hpp"

namespace cl4ac::dsp {

inline constexpr double kLogFloor = 1e-10;

struct DspConfig {
  std::size_t n_mels = 64;
  std::size_t frame = 1024;
  std::size_t hop = 512;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects sample_rate / 2
};

// Row-major [rows][cols] real matrix. For power spectrograms rows are FFT
// bins and cols are frames; for filterbanks rows are mel bands and cols bins.
struct Spectrogram {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Log-mel features, [bands][frames] with bands = n_mels.
struct MelSpectrogram {
  std::size_t bands = 0;
  std::size_t frames = 0;
  std::vector<float> values;

  float at(std::size_t b, std::size_t f) const { return values[b * frames + f]; }
  float& at(std::size_t b, std::size_t f) { return values[b * frames + f]; }
  friend bool operator==(const MelSpectrogram&, const MelSpectrogram&) = default;
};

// Number of frames for a clip of `length` samples without center padding.
std::size_t frame_count(std::size_t length, std::size_t frame, std::size_t hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// |DFT|^2 of periodic-Hann-windowed frames; rows are the frame/2 + 1 bins.
Spectrogram stft_power(const AudioClip& clip, std::size_t frame = 1024, std::size_t hop = 512);

// Triangular filters with peaks equally spaced on the HTK mel scale. Each
// row is scaled so its largest tap is exactly 1. Shape [n_mels][n_fft/2 + 1].
Spectrogram mel_filterbank(std::size_t n_mels, int sample_rate, std::size_t n_fft = 1024,
                           double f_min = 0.0, double f_max = 0.0);

// ln(max(filterbank * power, 1e-10)).
MelSpectrogram log_mel(const AudioClip& clip, const DspConfig& cfg = {});

struct SpecAugmentConfig {
  std::size_t n_freq_masks = 2;
  std::size_t max_freq_width = 8;
  std::size_t n_time_masks = 2;
  std::size_t max_time_width = 0;

  // Two frequency masks up to 8 bands and two time masks up to frames / 8.
  static SpecAugmentConfig defaults_for(std::size_t frames);
};

// Sets bands [start, start + width) across all frames to `fill`.
void mask_bands(MelSpectrogram& mel, std::size_t start, std::size_t width, float fill);
// Sets frames [start, start + width) across all bands to `fill`.
void mask_frames(MelSpectrogram& mel, std::size_t start, std::size_t width, float fill);

// Masks random frequency bands and time intervals with the spectrogram mean.
// Widths are uniform in [0, max], starts uniform over valid positions.
MelSpectrogram spec_augment(const MelSpectrogram& mel, const SpecAugmentConfig& cfg, Rng& rng);

}  // namespace cl4ac::dsp
