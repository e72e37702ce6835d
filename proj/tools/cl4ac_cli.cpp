// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Command line front end. Talks to the library only through the C API.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "cl4ac/cl4ac.h"

namespace {

struct ConfigDeleter {
  void operator()(cl4ac_config* c) const { cl4ac_config_free(c); }
};
using ConfigPtr = std::unique_ptr<cl4ac_config, ConfigDeleter>;

struct StringDeleter {
  void operator()(char* s) const { cl4ac_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

int report(cl4ac_status st) {
  if (st != CL4AC_OK) std::fprintf(stderr, "error: %s\n", cl4ac_last_error());
  return static_cast<int>(st);
}

void log_to_stderr(int level, const char* message, void*) {
  std::fprintf(stderr, "%s%s\n", level ? "warning: " : "", message);
}

// Loads the config file (or defaults) and applies flag overrides in order.
cl4ac_status load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides,
                         ConfigPtr& out) {
  cl4ac_config* raw = nullptr;
  cl4ac_status st = cl4ac_config_load(path.empty() ? nullptr : path.c_str(), &raw);
  if (st != CL4AC_OK) return st;
  out.reset(raw);
  for (const auto& [key, value] : overrides) {
    st = cl4ac_config_set(out.get(), key.c_str(), value.c_str());
    if (st != CL4AC_OK) return st;
  }
  return CL4AC_OK;
}

// JSON string literal for a config override.
std::string json_quote(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += static_cast<char>(c);
    } else if (c < 0x20) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\u%04x", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out + "\"";
}

}  // namespace

int main(int argc, char** argv) {
  cl4ac_set_log_callback(log_to_stderr, nullptr);
  CLI::App app{"cl4ac: audio captioning with a contrastive auxiliary objective"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cl4ac_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic captioned dataset");
  std::string synth_out, grammars = "both";
  std::size_t clips = 8;
  std::uint64_t synth_seed = 1;
  double duration = 2.0;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--clips", clips, "Number of clips")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--grammar", grammars, "tone, noise or both")->capture_default_str();
  synth->add_option("--duration", duration, "Clip length in seconds")->capture_default_str();

  // prepare / train share the config handling.
  std::string config_path, run_dir;
  auto* prepare = app.add_subcommand("prepare", "Build vocabulary, embeddings and the feature cache");
  prepare->add_option("--config", config_path, "Run config (JSON)");
  prepare->add_option("--run-dir", run_dir, "Override paths.run_dir");

  auto* train = app.add_subcommand("train", "Train a captioning model");
  bool no_cl = false;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  train->add_option("--config", config_path, "Run config (JSON)");
  train->add_option("--run-dir", run_dir, "Override paths.run_dir");
  train->add_flag("--no-cl", no_cl, "Disable the contrastive objective (cross-entropy baseline)");
  auto* seed_opt = train->add_option("--seed", seed, "Random seed");
  auto* epochs_opt = train->add_option("--epochs", epochs, "Number of epochs");

  // caption
  auto* caption = app.add_subcommand("caption", "Caption one WAV file");
  std::string checkpoint, wav;
  std::size_t max_len = 35;
  caption->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  caption->add_option("--wav", wav, "Input WAV file")->required();
  caption->add_option("--max-len", max_len, "Maximum caption length in tokens")->capture_default_str();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Caption a manifest and score it");
  std::string manifest, audio_root, out_dir;
  bool refs_as_candidates = false;
  evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  evaluate->add_option("--manifest", manifest, "Caption CSV")->required();
  evaluate->add_option("--audio-root", audio_root, "Directory of the WAV files (default: manifest directory)");
  evaluate->add_option("--out", out_dir, "Report directory (default: checkpoint directory)");
  evaluate->add_option("--max-len", max_len, "Maximum caption length in tokens")->capture_default_str();
  evaluate->add_flag("--references-as-candidates", refs_as_candidates,
                     "Score each clip's first reference instead of model output");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Verify gradients of every layer family");
  std::string fault;
  gradcheck->add_option("--config", config_path, "Ignored; accepted for symmetry");
  gradcheck->add_option("--inject-fault", fault, "Sabotage one op's backward pass")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return CL4AC_ERR_INPUT;
  }

  if (*synth) {
    return report(cl4ac_synth(synth_out.c_str(), clips, synth_seed, grammars.c_str(), duration));
  }

  std::vector<std::pair<std::string, std::string>> overrides;
  if (!run_dir.empty()) {
    // The flag is relative to the working directory, not the config file.
    overrides.emplace_back("paths.run_dir", json_quote(std::filesystem::absolute(run_dir).string()));
  }

  if (*prepare) {
    ConfigPtr cfg;
    if (auto st = load_config(config_path, overrides, cfg); st != CL4AC_OK) return report(st);
    return report(cl4ac_prepare(cfg.get()));
  }

  if (*train) {
    if (no_cl) overrides.emplace_back("train.use_cl", "false");
    if (*seed_opt) overrides.emplace_back("train.seed", std::to_string(seed));
    if (*epochs_opt) overrides.emplace_back("train.epochs", std::to_string(epochs));
    ConfigPtr cfg;
    if (auto st = load_config(config_path, overrides, cfg); st != CL4AC_OK) return report(st);
    return report(cl4ac_train(cfg.get()));
  }

  if (*caption) {
    cl4ac_model* raw = nullptr;
    if (auto st = cl4ac_model_load(checkpoint.c_str(), &raw); st != CL4AC_OK) return report(st);
    std::unique_ptr<cl4ac_model, void (*)(cl4ac_model*)> model(raw, cl4ac_model_free);
    char* text = nullptr;
    if (auto st = cl4ac_model_caption(model.get(), wav.c_str(), max_len, &text); st != CL4AC_OK) return report(st);
    CString owned(text);
    std::printf("%s\n", owned.get());
    return 0;
  }

  if (*evaluate) {
    const auto parent = [](const std::string& p) {
      const auto dir = std::filesystem::path(p).parent_path();
      return dir.empty() ? std::string(".") : dir.string();
    };
    if (audio_root.empty()) audio_root = parent(manifest);
    if (out_dir.empty()) out_dir = parent(checkpoint);
    char* json = nullptr;
    const auto st = cl4ac_evaluate(checkpoint.c_str(), manifest.c_str(), audio_root.c_str(), out_dir.c_str(), max_len,
                                   refs_as_candidates ? 1 : 0, &json);
    if (st != CL4AC_OK) return report(st);
    CString owned(json);
    std::printf("%s", owned.get());
    return 0;
  }

  if (*gradcheck) {
    char* table = nullptr;
    const auto st = cl4ac_gradcheck(fault.c_str(), &table);
    CString owned(table);
    if (owned) std::printf("%s", owned.get());
    return report(st);
  }
  return report(CL4AC_ERR_INTERNAL);
}
