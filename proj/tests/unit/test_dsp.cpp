// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <complex>
#include <filesystem>
#include <set>

#include "core/error.hpp"
#include "doctest.h"
#include "dsp/audio.hpp"
#include "dsp/mel.hpp"

using namespace cl4ac;
using namespace cl4ac::dsp;

namespace {

AudioClip tone(double hz, int sr, std::size_t len, double amp = 0.5) {
  AudioClip c{std::vector<float>(len), sr};
  for (std::size_t n = 0; n < len; ++n)
    c.samples[n] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * static_cast<double>(n) / sr));
  return c;
}

AudioClip white_noise(std::size_t len, int sr, std::uint64_t seed) {
  Rng rng(seed);
  AudioClip c{std::vector<float>(len), sr};
  for (auto& s : c.samples) s = static_cast<float>(uniform01(rng) * 2.0 - 1.0) * 0.3f;
  return c;
}

// Direct O(N^2) DFT of one Hann-windowed frame.
std::vector<double> direct_power(const AudioClip& clip, std::size_t offset, std::size_t n) {
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / n);
      acc += w * clip.samples[offset + t] * std::polar(1.0, -2.0 * M_PI * k * t / n);
    }
    out[k] = std::norm(acc);
  }
  return out;
}

}  // namespace

TEST_CASE("frame count follows floor((len - 1024) / 512) + 1 for every length 1024..4096") {
  for (std::size_t len = 1024; len <= 4096; ++len) {
    AudioClip c{std::vector<float>(len, 0.0f), 16000};
    const auto spec = stft_power(c);
    REQUIRE(spec.cols == (len - 1024) / 512 + 1);
    REQUIRE(spec.rows == 513);
  }
}

TEST_CASE("stft of silence is zero and short clips are rejected") {
  AudioClip zero{std::vector<float>(22050, 0.0f), 44100};
  const auto spec = stft_power(zero);
  CHECK(spec.cols == 42);
  for (double v : spec.values) CHECK(v == 0.0);
  AudioClip short_clip{std::vector<float>(1023, 0.1f), 44100};
  CHECK_THROWS_AS(stft_power(short_clip), InputError);
}

TEST_CASE("sine at an exact bin peaks at that bin in every frame and matches a direct DFT") {
  const auto clip = tone(689.0625, 44100, 8192);
  const auto spec = stft_power(clip);
  for (std::size_t f = 0; f < spec.cols; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.rows; ++k)
      if (spec.at(k, f) > spec.at(best, f)) best = k;
    CHECK(best == 16);
  }
  const auto oracle = direct_power(clip, 512 * 3, 1024);
  for (std::size_t k = 0; k < 513; ++k) {
    CHECK(spec.at(k, 3) == doctest::Approx(oracle[k]).epsilon(1e-6).scale(1e-6));
  }
}

TEST_CASE("mel filterbank shape properties") {
  for (int sr : {16000, 22050, 44100}) {
    CAPTURE(sr);
    const auto fb = mel_filterbank(64, sr);
    REQUIRE(fb.rows == 64);
    REQUIRE(fb.cols == 513);
    std::vector<double> peak_freq;
    for (std::size_t m = 0; m < 64; ++m) {
      double mx = 0.0;
      std::size_t arg = 0, nz = 0, at_max = 0;
      for (std::size_t k = 0; k < 513; ++k) {
        const double w = fb.at(m, k);
        CHECK(w >= 0.0);
        if (w > 0.0) ++nz;
        if (w > mx) { mx = w; arg = k; }
      }
      for (std::size_t k = 0; k < 513; ++k)
        if (fb.at(m, k) == mx) ++at_max;
      CHECK(mx == 1.0);
      CHECK(at_max == 1);
      CHECK(nz >= 1);
      peak_freq.push_back(static_cast<double>(arg));
      if (m > 0) {
        bool overlap = false;
        for (std::size_t k = 0; k < 513; ++k) overlap |= fb.at(m, k) > 0 && fb.at(m - 1, k) > 0;
        // Adjacent triangles share support unless both are a single bin wide.
        CHECK((overlap || nz == 1));
      }
    }
    for (std::size_t k = 0; k < 513; ++k) {
      double col = 0;
      for (std::size_t m = 0; m < 64; ++m) col += fb.at(m, k);
      CHECK(col <= 2.0);
    }
    for (std::size_t m = 1; m < 64; ++m) CHECK(peak_freq[m] > peak_freq[m - 1]);
  }
}

TEST_CASE("too many mel bands for the FFT resolution is a config error") {
  CHECK_THROWS_AS(mel_filterbank(400, 16000), ConfigError);
  CHECK_THROWS_AS(mel_filterbank(64, 16000, 1024, 5000.0, 4000.0), ConfigError);
}

TEST_CASE("filterbank applied to white noise power gives positive band energies") {
  const auto clip = white_noise(16000, 16000, 3);
  const auto power = stft_power(clip);
  const auto fb = mel_filterbank(64, 16000);
  const auto mel = log_mel(clip);
  for (std::size_t m = 0; m < 64; ++m) {
    for (std::size_t f = 0; f < power.cols; ++f) {
      double e = 0.0;
      for (std::size_t k = 0; k < 513; ++k) e += fb.at(m, k) * power.at(k, f);
      CHECK(e > 0.0);
      CHECK(mel.at(m, f) == doctest::Approx(std::log(e)).epsilon(1e-5));
    }
  }
}

TEST_CASE("log-mel of silence sits at the floor and has 64 x 42 shape for 22050 samples") {
  AudioClip zero{std::vector<float>(22050, 0.0f), 44100};
  const auto mel = log_mel(zero);
  CHECK(mel.bands == 64);
  CHECK(mel.frames == 42);
  for (float v : mel.values) CHECK(v == doctest::Approx(-23.0259).epsilon(1e-5));
}

TEST_CASE("pure tone lands in the band whose filter weights its bin most") {
  const int sr = 16000;
  const auto fb = mel_filterbank(64, sr);
  for (std::size_t bin : {40u, 100u, 200u}) {
    const double hz = bin * static_cast<double>(sr) / 1024.0;
    std::size_t oracle = 0;
    for (std::size_t m = 1; m < 64; ++m)
      if (fb.at(m, bin) > fb.at(oracle, bin)) oracle = m;
    const auto mel = log_mel(tone(hz, sr, 8000));
    for (std::size_t f = 0; f < mel.frames; ++f) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < 64; ++m)
        if (mel.at(m, f) > mel.at(best, f)) best = m;
      CHECK(best == oracle);
    }
  }
}

TEST_CASE("log-mel is monotone under amplification") {
  const auto base = white_noise(6000, 16000, 5);
  for (float g : {1.5f, 3.0f}) {
    AudioClip loud = base;
    for (auto& s : loud.samples) s *= g;
    const auto a = log_mel(base), b = log_mel(loud);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (a.values[i] > std::log(kLogFloor) + 1e-3) CHECK(b.values[i] >= a.values[i]);
    }
  }
}

TEST_CASE("SpecAugment with no masks is the identity") {
  const auto mel = log_mel(white_noise(8000, 16000, 7));
  Rng rng(1);
  CHECK(spec_augment(mel, SpecAugmentConfig{0, 0, 0, 0}, rng) == mel);
  CHECK(spec_augment(mel, SpecAugmentConfig{3, 0, 2, 0}, rng) == mel);
}

TEST_CASE("a width-4 band mask sets exactly four rows to the fill value") {
  const auto mel = log_mel(white_noise(8000, 16000, 8));
  auto out = mel;
  mask_bands(out, 10, 4, -5.0f);
  for (std::size_t b = 0; b < mel.bands; ++b) {
    for (std::size_t f = 0; f < mel.frames; ++f) {
      if (b >= 10 && b < 14) CHECK(out.at(b, f) == -5.0f);
      else CHECK(out.at(b, f) == mel.at(b, f));
    }
  }
}

TEST_CASE("SpecAugment is seeded, keeps shape, and only touches masked cells") {
  const auto mel = log_mel(white_noise(16000, 16000, 9));
  const auto cfg = SpecAugmentConfig::defaults_for(mel.frames);
  double total = 0;
  for (float v : mel.values) total += v;
  const auto fill = static_cast<float>(total / mel.values.size());
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r1(seed), r2(seed);
    const auto a = spec_augment(mel, cfg, r1);
    CHECK(a == spec_augment(mel, cfg, r2));
    REQUIRE(a.bands == mel.bands);
    REQUIRE(a.frames == mel.frames);
    std::set<std::size_t> masked_rows, masked_cols;
    for (std::size_t b = 0; b < mel.bands; ++b) {
      bool full = true;
      for (std::size_t f = 0; f < mel.frames; ++f) full &= a.at(b, f) == fill;
      if (full) masked_rows.insert(b);
    }
    for (std::size_t f = 0; f < mel.frames; ++f) {
      bool full = true;
      for (std::size_t b = 0; b < mel.bands; ++b) full &= a.at(b, f) == fill;
      if (full) masked_cols.insert(f);
    }
    CHECK(masked_rows.size() <= cfg.n_freq_masks * cfg.max_freq_width);
    CHECK(masked_cols.size() <= cfg.n_time_masks * cfg.max_time_width);
    for (std::size_t b = 0; b < mel.bands; ++b) {
      for (std::size_t f = 0; f < mel.frames; ++f) {
        if (a.at(b, f) != mel.at(b, f)) {
          CHECK(a.at(b, f) == fill);
          CHECK((masked_rows.count(b) || masked_cols.count(f)));
        }
      }
    }
  }
}

TEST_CASE("WAV encode/parse round trip and stereo averaging") {
  AudioClip clip = tone(440.0, 16000, 3000);
  const auto bytes = encode_wav(clip);
  const auto back = parse_wav(bytes);
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 16384);

  // Hand-built stereo file: L = +0.5, R = -0.25 -> mono 0.125.
  std::vector<std::uint8_t> st = {'R','I','F','F',0,0,0,0,'W','A','V','E','f','m','t',' ',16,0,0,0,
                                  1,0,2,0,0x40,0x1f,0,0,0,0,0,0,4,0,16,0,'d','a','t','a',8,0,0,0};
  auto push16 = [&](std::int16_t v) { st.push_back(v & 0xff); st.push_back((v >> 8) & 0xff); };
  push16(16384); push16(-8192); push16(16384); push16(-8192);
  const auto mono = parse_wav(st);
  REQUIRE(mono.samples.size() == 2);
  CHECK(mono.samples[0] == doctest::Approx(0.125));
}

TEST_CASE("corrupted WAV data is rejected with the file name") {
  auto bytes = encode_wav(tone(440.0, 16000, 2000));
  bytes[0] = 'X';
  try {
    parse_wav(bytes, "broken.wav");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("broken.wav") != std::string::npos);
  }
  auto truncated = encode_wav(tone(440.0, 16000, 2000));
  truncated.resize(100);
  CHECK_THROWS_AS(parse_wav(truncated), InputError);
}
