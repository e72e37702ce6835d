// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "data/feature_cache.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/log.hpp"
#include "data/binary.hpp"

namespace cl4ac::data {
namespace {

constexpr char kMelMagic[4] = {'C', 'L', '4', 'M'};
constexpr std::uint32_t kMelVersion = 1;

std::string dsp_fingerprint(const dsp::DspConfig& c) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "mel-v%u;n_mels=%zu;frame=%zu;hop=%zu;f_min=%.17g;f_max=%.17g;", kMelVersion,
                c.n_mels, c.frame, c.hop, c.f_min, c.f_max);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_mel(const dsp::MelSpectrogram& mel) {
  ByteWriter w;
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMelMagic), 4));
  w.u32(kMelVersion);
  w.u64(mel.bands);
  w.u64(mel.frames);
  for (float v : mel.values) w.f32(v);
  const Sha256 d = sha256(w.bytes());
  w.raw(d);
  return std::move(w.bytes());
}

dsp::MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMelMagic)) throw CorruptionError(origin + ": bad magic at byte offset 0");
  const auto version = r.u32("version");
  if (version != kMelVersion) {
    throw VersionError(origin + ": feature format version " + std::to_string(version) + ", expected " +
                       std::to_string(kMelVersion));
  }
  dsp::MelSpectrogram mel;
  mel.bands = r.u64("band count");
  mel.frames = r.u64("frame count");
  if (mel.bands == 0 || mel.frames == 0 || mel.bands > (r.remaining() / 4) / mel.frames) {
    throw CorruptionError(origin + ": implausible shape at byte offset 12");
  }
  mel.values.resize(mel.bands * mel.frames);
  for (auto& v : mel.values) v = r.f32("values");
  const std::size_t body = r.pos();
  const auto stored = r.take(32, "digest");
  const Sha256 d = sha256(bytes.first(body));
  if (!std::equal(d.begin(), d.end(), stored.begin())) {
    throw CorruptionError(origin + ": digest mismatch over bytes [0, " + std::to_string(body) + ")");
  }
  if (r.remaining()) throw CorruptionError(origin + ": trailing bytes at offset " + std::to_string(r.pos()));
  return mel;
}

FeatureCache::FeatureCache(const std::filesystem::path& run_dir) : dir_(run_dir / "features") {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create feature cache " + dir_.string() + ": " + ec.message());
}

std::string FeatureCache::key(std::span<const std::uint8_t> wav_bytes, const dsp::DspConfig& cfg) {
  return to_hex(Sha256Builder().update(dsp_fingerprint(cfg)).update(wav_bytes).finish());
}

std::filesystem::path FeatureCache::entry_path(const std::string& key) const { return dir_ / (key + ".mel"); }

dsp::MelSpectrogram FeatureCache::get(const std::filesystem::path& wav_path, const dsp::DspConfig& cfg) {
  const auto wav = dsp::read_file_bytes(wav_path);
  const std::string k = key(wav, cfg);
  const auto path = entry_path(k);
  if (std::filesystem::is_regular_file(path)) {
    try {
      auto mel = decode_mel(dsp::read_file_bytes(path), path.string());
      ++hits_;
      log::info("cache hit ", wav_path.filename().string(), " -> ", path.filename().string());
      return mel;
    } catch (const Error& e) {
      log::warn("discarding unreadable cache entry: ", e.what());
    }
  }
  ++misses_;
  auto mel = dsp::log_mel(dsp::parse_wav(wav, wav_path.string()), cfg);
  const auto bytes = encode_mel(mel);
  const auto tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
  log::info("cache miss ", wav_path.filename().string(), " -> ", path.filename().string());
  return mel;
}

}  // namespace cl4ac::data
