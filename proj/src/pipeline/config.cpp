// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "pipeline/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "core/digest.hpp"
#include "core/error.hpp"

namespace cl4ac::pipeline {
namespace {

// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + path_ + "' must be a JSON object");
  }

  template <typename V>
  void get(const std::string& key, V& out) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<V, bool>) {
        if (!it->is_boolean()) throw ConfigError(where(key) + " must be true or false");
        out = it->template get<bool>();
      } else if constexpr (std::is_integral_v<V>) {
        if (!it->is_number_integer() || (!it->is_number_unsigned() && it->template get<long long>() < 0)) {
          throw ConfigError(where(key) + " must be a non-negative integer");
        }
        out = it->template get<V>();
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!it->is_number()) throw ConfigError(where(key) + " must be a number");
        out = it->template get<V>();
      } else {
        out = it->template get<V>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const Json* child(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return "'" + path_ + "." + key + "'"; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in section '" + path_ + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_dsp(const Json& j, dsp::DspConfig& c, const std::string& path) {
  Section s(j, path);
  s.get("n_mels", c.n_mels);
  s.get("frame", c.frame);
  s.get("hop", c.hop);
  s.get("f_min", c.f_min);
  s.get("f_max", c.f_max);
  s.finish();
}

void read_model(const Json& j, model::ModelConfig& c, const std::string& path) {
  Section s(j, path);
  if (const Json* e = s.child("encoder")) {
    Section es(*e, path + ".encoder");
    std::vector<std::size_t> channels(c.encoder.channels.begin(), c.encoder.channels.end());
    es.get("channels", channels);
    if (channels.size() != 4) throw ConfigError(es.where("channels") + " must list 4 widths");
    std::copy(channels.begin(), channels.end(), c.encoder.channels.begin());
    es.get("fc_hidden", c.encoder.fc_hidden);
    es.get("dropout", c.encoder.dropout);
    es.get("pool_every_block", c.encoder.pool_every_block);
    es.finish();
  }
  if (const Json* d = s.child("decoder")) {
    Section ds(*d, path + ".decoder");
    ds.get("layers", c.decoder.layers);
    ds.get("heads", c.decoder.heads);
    ds.get("width", c.decoder.width);
    ds.get("ff_width", c.decoder.ff_width);
    ds.get("dropout", c.decoder.dropout);
    ds.get("max_len", c.decoder.max_len);
    ds.finish();
  }
  s.get("vocab_size", c.vocab_size);
  s.finish();
}

ManifestSource read_source(const Json& j, const std::string& path) {
  Section s(j, path);
  ManifestSource m;
  s.get("csv", m.csv);
  s.get("audio_root", m.audio_root);
  s.finish();
  if (m.csv.empty()) throw ConfigError("'" + path + ".csv' is required");
  return m;
}

Json source_json(const ManifestSource& m) { return Json{{"csv", m.csv}, {"audio_root", m.audio_root}}; }

}  // namespace

void RunConfig::validate() const {
  if (dsp.n_mels == 0 || dsp.frame == 0 || dsp.hop == 0) throw ConfigError("dsp sizes must be positive");
  if (text.word2vec_mode != "cbow" && text.word2vec_mode != "skipgram" && text.word2vec_mode != "both") {
    throw ConfigError("text.word2vec_mode must be cbow, skipgram or both, got '" + text.word2vec_mode + "'");
  }
  if (text.min_count == 0) throw ConfigError("text.min_count must be at least 1");
  if (text.word2vec && text.w2v.dim != model.decoder.width) {
    throw ConfigError("text.w2v.dim (" + std::to_string(text.w2v.dim) + ") must equal model.decoder.width (" +
                      std::to_string(model.decoder.width) + ") when word2vec initialisation is on");
  }
  train.validate();
  auto probe = model;
  if (probe.vocab_size == 0) probe.vocab_size = text::kFirstCorpusId;
  probe.validate();
}

RunConfig parse_config(const Json& j) {
  RunConfig c;
  Section root(j, "config");
  if (const Json* d = root.child("dsp")) read_dsp(*d, c.dsp, "dsp");
  if (const Json* t = root.child("text")) {
    Section s(*t, "text");
    s.get("min_count", c.text.min_count);
    s.get("word2vec", c.text.word2vec);
    s.get("word2vec_mode", c.text.word2vec_mode);
    if (const Json* w = s.child("w2v")) {
      Section ws(*w, "text.w2v");
      ws.get("window", c.text.w2v.window);
      ws.get("negatives", c.text.w2v.negatives);
      ws.get("epochs", c.text.w2v.epochs);
      ws.get("learning_rate", c.text.w2v.learning_rate);
      ws.get("dim", c.text.w2v.dim);
      ws.finish();
    }
    s.finish();
  }
  if (const Json* m = root.child("model")) read_model(*m, c.model, "model");
  if (const Json* t = root.child("train")) {
    Section s(*t, "train");
    auto& tc = c.train;
    s.get("batch", tc.batch);
    s.get("epochs", tc.epochs);
    s.get("lr", tc.lr);
    s.get("warmup_epochs", tc.warmup_epochs);
    s.get("decay_every", tc.decay_every);
    s.get("decay_factor", tc.decay_factor);
    s.get("beta1", tc.beta1);
    s.get("beta2", tc.beta2);
    s.get("adam_eps", tc.adam_eps);
    s.get("clip_norm", tc.clip_norm);
    s.get("seed", tc.seed);
    s.get("negative_ratio", tc.negative_ratio);
    s.get("use_cl", tc.use_cl);
    s.get("spec_augment", tc.spec_augment);
    s.finish();
  }
  if (const Json* p = root.child("paths")) {
    Section s(*p, "paths");
    if (const Json* tr = s.child("train")) {
      if (!tr->is_array()) throw ConfigError("'paths.train' must be a list of {csv, audio_root} objects");
      for (std::size_t i = 0; i < tr->size(); ++i) {
        c.paths.train.push_back(read_source((*tr)[i], "paths.train[" + std::to_string(i) + "]"));
      }
    }
    if (const Json* ev = s.child("eval")) {
      if (!ev->is_null()) c.paths.eval = read_source(*ev, "paths.eval");
    }
    s.get("run_dir", c.paths.run_dir);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

void rebase_paths(RunConfig& c, const std::filesystem::path& base) {
  auto rebase = [&base](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  for (auto& src : c.paths.train) {
    rebase(src.csv);
    rebase(src.audio_root);
  }
  if (c.paths.eval) {
    rebase(c.paths.eval->csv);
    rebase(c.paths.eval->audio_root);
  }
  rebase(c.paths.run_dir);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = parse_config(j);
  rebase_paths(c, path.parent_path());
  return c;
}

Json to_json(const dsp::DspConfig& c) {
  return Json{{"n_mels", c.n_mels}, {"frame", c.frame}, {"hop", c.hop}, {"f_min", c.f_min}, {"f_max", c.f_max}};
}

dsp::DspConfig dsp_from_json(const Json& j) {
  dsp::DspConfig c;
  read_dsp(j, c, "dsp");
  return c;
}

Json to_json(const model::ModelConfig& c) {
  Json enc{{"channels", c.encoder.channels},
           {"fc_hidden", c.encoder.fc_hidden},
           {"dropout", c.encoder.dropout},
           {"pool_every_block", c.encoder.pool_every_block}};
  Json dec{{"layers", c.decoder.layers},   {"heads", c.decoder.heads},     {"width", c.decoder.width},
           {"ff_width", c.decoder.ff_width}, {"dropout", c.decoder.dropout}, {"max_len", c.decoder.max_len}};
  return Json{{"encoder", enc}, {"decoder", dec}, {"vocab_size", c.vocab_size}};
}

model::ModelConfig model_from_json(const Json& j) {
  model::ModelConfig c;
  read_model(j, c, "model");
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["dsp"] = to_json(c.dsp);
  j["text"] = Json{{"min_count", c.text.min_count},
                   {"word2vec", c.text.word2vec},
                   {"word2vec_mode", c.text.word2vec_mode},
                   {"w2v",
                    {{"window", c.text.w2v.window},
                     {"negatives", c.text.w2v.negatives},
                     {"epochs", c.text.w2v.epochs},
                     {"learning_rate", c.text.w2v.learning_rate},
                     {"dim", c.text.w2v.dim}}}};
  j["model"] = to_json(c.model);
  const auto& t = c.train;
  j["train"] = Json{{"batch", t.batch},
                    {"epochs", t.epochs},
                    {"lr", t.lr},
                    {"warmup_epochs", t.warmup_epochs},
                    {"decay_every", t.decay_every},
                    {"decay_factor", t.decay_factor},
                    {"beta1", t.beta1},
                    {"beta2", t.beta2},
                    {"adam_eps", t.adam_eps},
                    {"clip_norm", t.clip_norm},
                    {"seed", t.seed},
                    {"negative_ratio", t.negative_ratio},
                    {"use_cl", t.use_cl},
                    {"spec_augment", t.spec_augment}};
  Json train = Json::array();
  for (const auto& s : c.paths.train) train.push_back(source_json(s));
  j["paths"] = Json{{"train", train},
                    {"eval", c.paths.eval ? source_json(*c.paths.eval) : Json(nullptr)},
                    {"run_dir", c.paths.run_dir}};
  return j;
}

std::string config_hash(const Json& j) { return to_hex(Sha256Builder().update(j.dump()).finish()); }

std::filesystem::path resolve_run_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("CL4AC_RUN_DIR"); env && *env) return env;
  return cfg.paths.run_dir;
}

}  // namespace cl4ac::pipeline
