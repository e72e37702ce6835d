// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "core/error.hpp"
#include "training/trainer.hpp"

namespace cl4ac::data {
namespace {

constexpr const char* kCounts[] = {"one", "two", "three"};
constexpr const char* kPitches[] = {"low", "mid", "high"};
constexpr double kPitchHz[] = {250.0, 700.0, 2000.0};
constexpr const char* kNoises[] = {"deep rumble", "sharp hiss"};

// Tempo sets both the onset spacing and the burst length, so it stays
// audible when there is a single burst.
constexpr double kSlowBurst = 0.25;
constexpr double kSlowSpacing = 0.6;
constexpr double kFastBurst = 0.08;
constexpr double kFastSpacing = 0.3;

double hann(std::size_t i, std::size_t n) {
  return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
}

// Filtered white noise scaled to unit peak.
std::vector<double> noise_burst(std::size_t n, int timbre, int sample_rate, Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = normal(rng, 0.0, 1.0);
  if (timbre == 0) {
    // Two one-pole low-pass stages around 200 Hz.
    const double a = 1.0 - std::exp(-2.0 * std::numbers::pi * 200.0 / sample_rate);
    for (int stage = 0; stage < 2; ++stage) {
      double y = 0.0;
      for (auto& v : x) v = y += a * (v - y);
    }
  } else {
    // Second difference: a steep high-pass.
    for (int stage = 0; stage < 2; ++stage) {
      double prev = 0.0;
      for (auto& v : x) {
        const double cur = v;
        v = cur - prev;
        prev = cur;
      }
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (auto& v : x) v /= peak;
  }
  return x;
}

}  // namespace

GrammarSet parse_grammar_set(const std::string& name) {
  if (name == "tone") return GrammarSet::kTone;
  if (name == "noise") return GrammarSet::kNoise;
  if (name == "both") return GrammarSet::kBoth;
  throw ConfigError("unknown grammar set '" + name + "' (expected tone, noise or both)");
}

std::string caption_for(const EventParams& p) {
  if (p.count < 1 || p.count > 3) throw ContractError("event count must be 1..3");
  const std::string tail = std::string(kCounts[p.count - 1]) + " times " + (p.fast ? "quickly" : "slowly");
  if (p.grammar == Grammar::kTone) {
    if (p.timbre < 0 || p.timbre > 2) throw ContractError("tone timbre must be 0..2");
    return std::string("a ") + kPitches[p.timbre] + " tone beeps " + tail;
  }
  if (p.timbre < 0 || p.timbre > 1) throw ContractError("noise timbre must be 0..1");
  return std::string("a ") + kNoises[p.timbre] + " sounds " + tail;
}

std::vector<EventParams> template_space(GrammarSet set) {
  std::vector<EventParams> out;
  for (Grammar g : {Grammar::kTone, Grammar::kNoise}) {
    if ((g == Grammar::kTone && set == GrammarSet::kNoise) || (g == Grammar::kNoise && set == GrammarSet::kTone)) {
      continue;
    }
    const int timbres = g == Grammar::kTone ? 3 : 2;
    for (int t = 0; t < timbres; ++t)
      for (int c = 1; c <= 3; ++c)
        for (bool fast : {false, true}) out.push_back({g, t, c, fast});
  }
  return out;
}

dsp::AudioClip render_clip(const EventParams& p, const SynthSpec& spec, Rng& rng) {
  if (spec.sample_rate <= 0 || spec.duration <= 0.0) throw ConfigError("synthetic clips need a positive rate and duration");
  const double sr = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * sr));
  const double spacing = p.fast ? kFastSpacing : kSlowSpacing;
  const double burst_seconds = p.fast ? kFastBurst : kSlowBurst;
  const double span = spacing * (p.count - 1) + burst_seconds;
  if (span + 0.05 > spec.duration) {
    throw ConfigError("clip duration " + std::to_string(spec.duration) + " s is too short for the event pattern");
  }
  const double onset = uniform01(rng) * std::min(0.35, spec.duration - span - 0.05) + 0.025;
  const double level = 0.42 + 0.08 * uniform01(rng);
  const double freq = p.grammar == Grammar::kTone ? kPitchHz[p.timbre] * (0.97 + 0.06 * uniform01(rng)) : 0.0;
  const auto burst = static_cast<std::size_t>(std::llround(burst_seconds * sr));

  std::vector<double> x(n);
  for (auto& v : x) v = normal(rng, 0.0, 0.003);
  for (int b = 0; b < p.count; ++b) {
    const auto start = static_cast<std::size_t>(std::llround((onset + spacing * b) * sr));
    std::vector<double> shape(burst);
    if (p.grammar == Grammar::kTone) {
      const double phase = 2.0 * std::numbers::pi * uniform01(rng);
      for (std::size_t i = 0; i < burst; ++i) {
        shape[i] = std::sin(phase + 2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr);
      }
    } else {
      shape = noise_burst(burst, p.timbre, spec.sample_rate, rng);
    }
    for (std::size_t i = 0; i < burst && start + i < n; ++i) x[start + i] += level * hann(i, burst) * shape[i];
  }
  dsp::AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = static_cast<float>(std::clamp(x[i], -1.0, 1.0));
  return clip;
}

SynthDataset synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir, Rng& rng) {
  if (spec.n_clips == 0) throw ConfigError("synthetic dataset needs at least one clip");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string());
  }
  // One shuffled cycle per grammar; with both, clips alternate between them.
  std::vector<std::vector<EventParams>> cycles;
  if (spec.grammars != GrammarSet::kNoise) cycles.push_back(template_space(GrammarSet::kTone));
  if (spec.grammars != GrammarSet::kTone) cycles.push_back(template_space(GrammarSet::kNoise));
  for (auto& c : cycles) training::shuffle(c, rng);

  SynthDataset out;
  out.manifest.split = "synthetic";
  for (std::size_t i = 0; i < spec.n_clips; ++i) {
    const auto& cycle = cycles[i % cycles.size()];
    const EventParams& p = cycle[(i / cycles.size()) % cycle.size()];
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.wav", spec.prefix.c_str(), i);
    SynthClip clip{name, p, caption_for(p)};
    dsp::write_wav(out_dir / clip.file_name, render_clip(p, spec, rng));
    ManifestRow row;
    row.file_name = clip.file_name;
    row.audio_path = out_dir / clip.file_name;
    row.captions.assign(kCaptionsPerClip, clip.caption);
    out.manifest.rows.push_back(std::move(row));
    out.clips.push_back(std::move(clip));
  }
  write_manifest(out.manifest, out_dir / "manifest.csv");
  return out;
}

}  // namespace cl4ac::data
