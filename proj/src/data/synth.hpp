// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "data/manifest.hpp"
#include "dsp/audio.hpp"
#include "numerics/rng.hpp"

namespace cl4ac::data {

enum class Grammar { kTone, kNoise };

// "tone", "noise" or "both".
enum class GrammarSet { kTone, kNoise, kBoth };
GrammarSet parse_grammar_set(const std::string& name);

// One synthetic sound event pattern.
//   tone:  "a {low|mid|high} tone beeps {one|two|three} times {slowly|quickly}"
//   noise: "a {deep rumble|sharp hiss} sounds {one|two|three} times {slowly|quickly}"
struct EventParams {
  Grammar grammar = Grammar::kTone;
  int timbre = 0;  // tone: 0 low, 1 mid, 2 high; noise: 0 rumble, 1 hiss
  int count = 1;   // 1..3 bursts
  bool fast = false;

  bool operator==(const EventParams&) const = default;
};

std::string caption_for(const EventParams& p);
// Every parameter combination of the selected grammars.
std::vector<EventParams> template_space(GrammarSet set);

struct SynthSpec {
  std::size_t n_clips = 8;
  int sample_rate = 16000;
  double duration = 2.0;  // seconds
  GrammarSet grammars = GrammarSet::kBoth;
  std::string prefix = "synth";
};

// Renders the bursts with random onset, level and pitch jitter. Slow
// patterns use long, widely spaced bursts; fast ones short, close bursts.
dsp::AudioClip render_clip(const EventParams& p, const SynthSpec& spec, Rng& rng);

struct SynthClip {
  std::string file_name;
  EventParams params;
  std::string caption;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<SynthClip> clips;
};

// Clip parameters cycle through a shuffled template space, so the first
// |space| clips have distinct captions. With both grammars, clips alternate
// tone/noise. Writes <prefix>_NNNN.wav files and manifest.csv (every caption
// column holds the same caption) into out_dir.
SynthDataset synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir, Rng& rng);

}  // namespace cl4ac::data
