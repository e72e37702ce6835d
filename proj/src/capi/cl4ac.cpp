// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cl4ac/cl4ac.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "core/error.hpp"
#include "core/log.hpp"
#include "data/checkpoint.hpp"
#include "data/synth.hpp"
#include "dsp/audio.hpp"
#include "dsp/mel.hpp"
#include "numerics/ops.hpp"
#include "pipeline/commands.hpp"
#include "pipeline/config.hpp"
#include "pipeline/gradcheck_suite.hpp"

struct cl4ac_config {
  cl4ac::pipeline::Json raw;
  cl4ac::pipeline::RunConfig parsed;
  std::filesystem::path base;  // directory of the config file, if any
};

struct cl4ac_model {
  cl4ac::data::Checkpoint ckpt;
  cl4ac::model::CaptionModel<float> model;
  cl4ac::dsp::DspConfig dsp;
};

namespace {

thread_local std::string g_last_error;

cl4ac_status status_of(cl4ac::ErrorKind k) {
  switch (k) {
    case cl4ac::ErrorKind::kInput: return CL4AC_ERR_INPUT;
    case cl4ac::ErrorKind::kNumeric: return CL4AC_ERR_NUMERIC;
    case cl4ac::ErrorKind::kGradcheck: return CL4AC_ERR_GRADCHECK;
    case cl4ac::ErrorKind::kInternal: break;
  }
  return CL4AC_ERR_INTERNAL;
}

template <typename F>
cl4ac_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const cl4ac::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
  } catch (...) {
    g_last_error = "internal error: unknown exception";
  }
  return CL4AC_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw cl4ac::ContractError(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* cl4ac_version(void) { return "1.0.0"; }

const char* cl4ac_last_error(void) { return g_last_error.c_str(); }

void cl4ac_string_free(char* s) { std::free(s); }

void cl4ac_set_log_callback(cl4ac_log_fn fn, void* user) {
  if (!fn) {
    cl4ac::log::set_sink(nullptr);
    return;
  }
  cl4ac::log::set_sink([fn, user](cl4ac::log::Level level, const std::string& msg) {
    fn(level == cl4ac::log::Level::kWarning ? 1 : 0, msg.c_str(), user);
  });
}

cl4ac_status cl4ac_config_load(const char* path, cl4ac_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<cl4ac_config>();
    if (path) {
      cfg->parsed = cl4ac::pipeline::load_config(path);
      cfg->base = std::filesystem::path(path).parent_path();
      std::ifstream in(path);
      cfg->raw = cl4ac::pipeline::Json::parse(in);
    } else {
      cfg->raw = cl4ac::pipeline::Json::object();
      cfg->parsed = cl4ac::pipeline::parse_config(cfg->raw);
    }
    *out = cfg.release();
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_config_from_json(const char* json, cl4ac_config** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<cl4ac_config>();
    try {
      cfg->raw = cl4ac::pipeline::Json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      throw cl4ac::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    cfg->parsed = cl4ac::pipeline::parse_config(cfg->raw);
    *out = cfg.release();
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_config_set(cl4ac_config* cfg, const char* dotted_key, const char* json_value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(dotted_key, "dotted_key");
    require(json_value, "json_value");
    cl4ac::pipeline::Json value;
    try {
      value = cl4ac::pipeline::Json::parse(json_value);
    } catch (const nlohmann::json::exception&) {
      throw cl4ac::ConfigError(std::string("value for '") + dotted_key + "' is not JSON: " + json_value);
    }
    auto raw = cfg->raw;
    cl4ac::pipeline::Json* node = &raw;
    std::istringstream keys(dotted_key);
    std::string key, next;
    std::getline(keys, key, '.');
    while (std::getline(keys, next, '.')) {
      if (!node->is_object()) throw cl4ac::ConfigError(std::string("cannot set '") + dotted_key + "'");
      node = &(*node)[key];
      if (node->is_null()) *node = cl4ac::pipeline::Json::object();
      key = next;
    }
    if (!node->is_object() || key.empty()) throw cl4ac::ConfigError(std::string("cannot set '") + dotted_key + "'");
    (*node)[key] = value;
    auto parsed = cl4ac::pipeline::parse_config(raw);
    cl4ac::pipeline::rebase_paths(parsed, cfg->base);
    cfg->raw = std::move(raw);
    cfg->parsed = std::move(parsed);
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_config_to_json(const cl4ac_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup_string(cl4ac::pipeline::to_json(cfg->parsed).dump(2));
    return CL4AC_OK;
  });
}

void cl4ac_config_free(cl4ac_config* cfg) { delete cfg; }

cl4ac_status cl4ac_synth(const char* out_dir, size_t n_clips, uint64_t seed, const char* grammars,
                         double duration_seconds) {
  return guarded([&] {
    require(out_dir, "out_dir");
    cl4ac::data::SynthSpec spec;
    spec.n_clips = n_clips;
    spec.duration = duration_seconds;
    spec.grammars = cl4ac::data::parse_grammar_set(grammars ? grammars : "both");
    cl4ac::Rng rng(seed);
    const auto ds = cl4ac::data::synth_dataset(spec, out_dir, rng);
    cl4ac::log::info("wrote ", ds.clips.size(), " clips and manifest.csv to ", out_dir);
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_prepare(const cl4ac_config* cfg) {
  return guarded([&] {
    require(cfg, "cfg");
    cl4ac::pipeline::cmd_prepare(cfg->parsed);
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_train(const cl4ac_config* cfg) {
  return guarded([&] {
    require(cfg, "cfg");
    cl4ac::pipeline::cmd_train(cfg->parsed);
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_evaluate(const char* checkpoint, const char* manifest_csv, const char* audio_root,
                            const char* out_dir, size_t max_len, int references_as_candidates, char** report_json) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(manifest_csv, "manifest_csv");
    require(out_dir, "out_dir");
    cl4ac::pipeline::EvaluateOptions opts;
    opts.out_dir = out_dir;
    opts.max_len = max_len;
    opts.references_as_candidates = references_as_candidates != 0;
    const auto report = cl4ac::pipeline::cmd_evaluate(checkpoint, manifest_csv, audio_root ? audio_root : ".", opts);
    if (report_json) *report_json = dup_string(cl4ac::metrics::report_to_json(report));
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_gradcheck(const char* inject_fault, char** table) {
  return guarded([&] {
    struct Reset {
      ~Reset() { cl4ac::nn::debug::inject_fault(""); }
    } reset;
    cl4ac::nn::debug::inject_fault(inject_fault ? inject_fault : "");
    const auto rows = cl4ac::pipeline::run_gradcheck_suite();
    if (table) *table = dup_string(cl4ac::pipeline::format_gradcheck_table(rows));
    std::string failing;
    for (const auto& r : rows) {
      if (!r.pass) failing += (failing.empty() ? "" : ", ") + r.family;
    }
    if (!failing.empty()) {
      g_last_error = "gradient check failed for: " + failing;
      return CL4AC_ERR_GRADCHECK;
    }
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_model_load(const char* checkpoint, cl4ac_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = nullptr;
    auto ckpt = cl4ac::data::load_checkpoint(checkpoint);
    auto model = cl4ac::data::model_from_checkpoint<float>(ckpt);
    cl4ac::dsp::DspConfig dsp;
    if (ckpt.meta.is_object() && ckpt.meta.contains("dsp")) dsp = cl4ac::pipeline::dsp_from_json(ckpt.meta.at("dsp"));
    *out = new cl4ac_model{std::move(ckpt), std::move(model), dsp};
    return CL4AC_OK;
  });
}

cl4ac_status cl4ac_model_caption(cl4ac_model* m, const char* wav_path, size_t max_len, char** caption) {
  return guarded([&] {
    require(m, "model");
    require(wav_path, "wav_path");
    require(caption, "caption");
    const auto mel = cl4ac::dsp::log_mel(cl4ac::dsp::read_wav(wav_path), m->dsp);
    const cl4ac::nn::Tensor<float> t({mel.bands, mel.frames}, mel.values);
    *caption = dup_string(cl4ac::text::decode(m->model.greedy_decode(t, max_len), m->ckpt.vocab));
    return CL4AC_OK;
  });
}

size_t cl4ac_model_vocab_size(const cl4ac_model* m) { return m ? m->ckpt.vocab.size() : 0; }

void cl4ac_model_free(cl4ac_model* m) { delete m; }

}  // extern "C"
