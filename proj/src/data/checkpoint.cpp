// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "data/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "data/binary.hpp"
#include "dsp/audio.hpp"
#include "pipeline/config.hpp"

namespace cl4ac::data {
namespace {

constexpr char kMagic[4] = {'C', 'L', '4', 'A'};
using Json = nlohmann::json;

std::vector<std::string> corpus_tokens(const text::Vocabulary& v) {
  return {v.tokens().begin() + text::kFirstCorpusId, v.tokens().end()};
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const Json model = pipeline::to_json(ckpt.model);
  Json dir = Json::array();
  std::size_t offset = 0;
  for (const auto& p : ckpt.params) {
    if (nn::shape_size(p.shape) != p.values.size()) {
      throw ContractError("parameter " + p.name + " has " + std::to_string(p.values.size()) +
                          " values for shape " + nn::shape_str(p.shape));
    }
    dir.push_back(Json{{"name", p.name},
                       {"shape", p.shape},
                       {"trainable", p.trainable},
                       {"offset", offset},
                       {"count", p.values.size()}});
    offset += p.values.size();
  }
  const Json header{{"model", model},
                    {"config_hash", pipeline::config_hash(model)},
                    {"vocab", corpus_tokens(ckpt.vocab)},
                    {"meta", ckpt.meta},
                    {"parameters", dir}};
  const std::string text = header.dump();

  ByteWriter w;
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(kCheckpointVersion);
  w.u64(text.size());
  w.raw(text);
  for (const auto& p : ckpt.params)
    for (float v : p.values) w.f32(v);
  const Sha256 d = sha256(w.bytes());
  w.raw(d);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw CorruptionError(origin + ": not a checkpoint (bad magic at byte offset 0)");
  }
  const auto version = r.u32("format version");
  if (version != kCheckpointVersion) {
    throw VersionError(origin + ": checkpoint format version " + std::to_string(version) + ", this build reads " +
                       std::to_string(kCheckpointVersion));
  }
  const auto json_len = r.u64("metadata length");
  const std::size_t json_at = r.pos();
  if (json_len > r.remaining()) {
    throw CorruptionError(origin + ": truncated at byte offset " + std::to_string(bytes.size()) +
                          ": metadata needs " + std::to_string(json_len) + " bytes from offset " +
                          std::to_string(json_at));
  }
  const auto text = r.take(static_cast<std::size_t>(json_len), "metadata");

  Json header;
  try {
    header = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(origin + ": metadata at byte offset " + std::to_string(json_at) + " is not JSON: " + e.what());
  }
  Checkpoint ckpt;
  std::size_t payload_floats = 0;
  try {
    for (const auto& e : header.at("parameters")) {
      ParameterBlob p;
      p.name = e.at("name").get<std::string>();
      p.shape = e.at("shape").get<nn::Shape>();
      p.trainable = e.at("trainable").get<bool>();
      const auto off = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (off != payload_floats || count != nn::shape_size(p.shape)) {
        throw CorruptionError(origin + ": parameter directory entry " + p.name + " is inconsistent");
      }
      payload_floats += count;
      p.values.resize(count);
      ckpt.params.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(origin + ": parameter directory at byte offset " + std::to_string(json_at) + ": " + e.what());
  }

  const std::size_t expected = r.pos() + payload_floats * 4 + 32;
  if (bytes.size() < expected) {
    throw CorruptionError(origin + ": truncated at byte offset " + std::to_string(bytes.size()) + ", expected " +
                          std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw CorruptionError(origin + ": unexpected trailing data at byte offset " + std::to_string(expected));
  }
  const std::size_t body = expected - 32;
  const Sha256 d = sha256(bytes.first(body));
  if (!std::equal(d.begin(), d.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body))) {
    throw CorruptionError(origin + ": digest mismatch over bytes [0, " + std::to_string(body) +
                          "); digest stored at byte offset " + std::to_string(body));
  }

  try {
    const std::string hash = pipeline::config_hash(header.at("model"));
    if (hash != header.at("config_hash").get<std::string>()) {
      throw VersionError(origin + ": config hash " + header.at("config_hash").get<std::string>() +
                         " does not match the stored model config (" + hash + ")");
    }
    ckpt.model = pipeline::model_from_json(header.at("model"));
    ckpt.vocab = text::Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    ckpt.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(origin + ": metadata at byte offset " + std::to_string(json_at) + ": " + e.what());
  }
  for (auto& p : ckpt.params)
    for (auto& v : p.values) v = r.f32("payload");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw InputError("checkpoint not found: " + path.string());
  return decode_checkpoint(dsp::read_file_bytes(path), path.string());
}

void require_model_config(const Checkpoint& ckpt, const model::ModelConfig& cfg) {
  const auto have = pipeline::config_hash(pipeline::to_json(ckpt.model));
  const auto want = pipeline::config_hash(pipeline::to_json(cfg));
  if (have != want) {
    throw VersionError("checkpoint model config hash " + have + " differs from the requested config " + want);
  }
}

template <typename T>
Checkpoint capture(model::CaptionModel<T>& model, const text::Vocabulary& vocab, nlohmann::json meta) {
  if (vocab.size() != model.config().vocab_size) {
    throw ContractError("vocabulary has " + std::to_string(vocab.size()) + " tokens, model expects " +
                        std::to_string(model.config().vocab_size));
  }
  Checkpoint c;
  c.model = model.config();
  c.vocab = vocab;
  c.meta = std::move(meta);
  for (auto* p : model.parameters()) {
    ParameterBlob b{p->name(), p->value().shape(), p->trainable(), {}};
    b.values.reserve(p->value().size());
    for (T v : p->value().data()) b.values.push_back(static_cast<float>(v));
    c.params.push_back(std::move(b));
  }
  return c;
}

template <typename T>
void restore(const Checkpoint& ckpt, model::CaptionModel<T>& model) {
  const auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw VersionError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                       std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& b = ckpt.params[i];
    if (b.name != params[i]->name() || b.shape != params[i]->value().shape()) {
      throw VersionError("checkpoint parameter " + b.name + " " + nn::shape_str(b.shape) + " does not match model " +
                         params[i]->name() + " " + nn::shape_str(params[i]->value().shape()));
    }
    auto dst = params[i]->value().data();
    for (std::size_t k = 0; k < b.values.size(); ++k) dst[k] = static_cast<T>(b.values[k]);
  }
}

template <typename T>
model::CaptionModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.vocab.size() != ckpt.model.vocab_size) {
    throw VersionError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                       " tokens but the model config says " + std::to_string(ckpt.model.vocab_size));
  }
  Rng rng(0);
  model::CaptionModel<T> m(ckpt.model, rng);
  restore(ckpt, m);
  return m;
}

template Checkpoint capture<float>(model::CaptionModel<float>&, const text::Vocabulary&, nlohmann::json);
template Checkpoint capture<double>(model::CaptionModel<double>&, const text::Vocabulary&, nlohmann::json);
template void restore<float>(const Checkpoint&, model::CaptionModel<float>&);
template void restore<double>(const Checkpoint&, model::CaptionModel<double>&);
template model::CaptionModel<float> model_from_checkpoint<float>(const Checkpoint&);
template model::CaptionModel<double> model_from_checkpoint<double>(const Checkpoint&);

}  // namespace cl4ac::data
