// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Exercises the shared library through its C header only.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cl4ac/cl4ac.h"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cl4ac_capi_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string last_error() { return cl4ac_last_error() ? cl4ac_last_error() : ""; }

std::string take(char* s) {
  std::string out = s ? s : "";
  cl4ac_string_free(s);
  return out;
}

json micro_config(const fs::path& manifest_dir, const fs::path& run_dir) {
  return json{
      {"model",
       {{"encoder", {{"channels", {4, 4, 8, 8}}, {"fc_hidden", 16}, {"dropout", 0.0}}},
        {"decoder", {{"layers", 1}, {"heads", 2}, {"width", 16}, {"ff_width", 32}, {"dropout", 0.0}}}}},
      {"text", {{"w2v", {{"dim", 16}, {"epochs", 2}}}}},
      {"train", {{"batch", 4}, {"epochs", 1}, {"seed", 5}}},
      {"paths",
       {{"train", {{{"csv", (manifest_dir / "manifest.csv").string()}, {"audio_root", manifest_dir.string()}}}},
        {"run_dir", run_dir.string()}}}};
}

struct Config {
  cl4ac_config* p = nullptr;
  ~Config() { cl4ac_config_free(p); }
};

std::vector<std::string> g_log;

void collect(int, const char* msg, void*) { g_log.emplace_back(msg); }

}  // namespace

TEST_CASE("version and null arguments") {
  REQUIRE(cl4ac_version() != nullptr);
  CHECK(std::string(cl4ac_version()).size() > 0);
  CHECK(cl4ac_config_from_json("{}", nullptr) == CL4AC_ERR_INTERNAL);
  CHECK(last_error().find("must not be NULL") != std::string::npos);
  cl4ac_string_free(nullptr);
  cl4ac_config_free(nullptr);
  cl4ac_model_free(nullptr);
}

TEST_CASE("config errors map to the input status") {
  Config c;
  CHECK(cl4ac_config_from_json("{not json", &c.p) == CL4AC_ERR_INPUT);
  CHECK(c.p == nullptr);
  CHECK(cl4ac_config_from_json(R"({"train": {"epochz": 3}})", &c.p) == CL4AC_ERR_INPUT);
  CHECK(last_error().find("unknown key 'epochz' in section 'train'") != std::string::npos);
  CHECK(cl4ac_config_from_json(R"({"train": {"epochs": -1}})", &c.p) == CL4AC_ERR_INPUT);
  CHECK(cl4ac_config_load("/definitely/not/here.json", &c.p) == CL4AC_ERR_INPUT);
  CHECK(last_error().find("/definitely/not/here.json") != std::string::npos);
}

TEST_CASE("config set and echo") {
  Config c;
  REQUIRE(cl4ac_config_load(nullptr, &c.p) == CL4AC_OK);
  REQUIRE(cl4ac_config_set(c.p, "train.epochs", "7") == CL4AC_OK);
  REQUIRE(cl4ac_config_set(c.p, "train.use_cl", "false") == CL4AC_OK);
  char* out = nullptr;
  REQUIRE(cl4ac_config_to_json(c.p, &out) == CL4AC_OK);
  const json j = json::parse(take(out));
  CHECK(j["train"]["epochs"] == 7);
  CHECK(j["train"]["use_cl"] == false);
  // A rejected override leaves the config untouched.
  CHECK(cl4ac_config_set(c.p, "train.bogus", "1") == CL4AC_ERR_INPUT);
  CHECK(cl4ac_config_set(c.p, "train.epochs", "seven") == CL4AC_ERR_INPUT);
  REQUIRE(cl4ac_config_to_json(c.p, &out) == CL4AC_OK);
  CHECK(json::parse(take(out))["train"]["epochs"] == 7);
}

TEST_CASE("relative config paths follow the config file") {
  TempDir tmp("rel");
  {
    std::ofstream f(tmp.path / "cfg.json");
    f << R"({"paths": {"train": [{"csv": "data/m.csv", "audio_root": "data"}], "run_dir": "out"}})";
  }
  Config c;
  REQUIRE(cl4ac_config_load((tmp.path / "cfg.json").c_str(), &c.p) == CL4AC_OK);
  REQUIRE(cl4ac_config_set(c.p, "train.epochs", "2") == CL4AC_OK);
  char* out = nullptr;
  REQUIRE(cl4ac_config_to_json(c.p, &out) == CL4AC_OK);
  const json j = json::parse(take(out));
  CHECK(j["paths"]["run_dir"] == (tmp.path / "out").string());
  CHECK(j["paths"]["train"][0]["csv"] == (tmp.path / "data/m.csv").string());
}

TEST_CASE("gradient check status") {
  char* table = nullptr;
  CHECK(cl4ac_gradcheck(nullptr, &table) == CL4AC_OK);
  const std::string t = take(table);
  CHECK(t.find("caption_objective") != std::string::npos);
  CHECK(t.find("FAIL") == std::string::npos);

  CHECK(cl4ac_gradcheck("softmax", &table) == CL4AC_ERR_GRADCHECK);
  CHECK(take(table).find("FAIL") != std::string::npos);
  CHECK(last_error().find("softmax") != std::string::npos);

  CHECK(cl4ac_gradcheck("no_such_op", nullptr) == CL4AC_ERR_INPUT);
  // The injected fault does not leak into later runs.
  CHECK(cl4ac_gradcheck(nullptr, nullptr) == CL4AC_OK);
}

TEST_CASE("synth, prepare, train, caption, evaluate") {
  TempDir tmp("flow");
  const fs::path data = tmp.path / "synth", run = tmp.path / "run";
  CHECK(cl4ac_synth(data.c_str(), 4, 1, "klaxon", 2.0) == CL4AC_ERR_INPUT);
  REQUIRE(cl4ac_synth(data.c_str(), 8, 1, "both", 2.0) == CL4AC_OK);
  REQUIRE(fs::exists(data / "manifest.csv"));

  Config c;
  REQUIRE(cl4ac_config_from_json(micro_config(data, run).dump().c_str(), &c.p) == CL4AC_OK);
  CHECK(cl4ac_train(c.p) == CL4AC_ERR_INPUT);  // not prepared yet
  CHECK(last_error().find("prepare") != std::string::npos);

  g_log.clear();
  cl4ac_set_log_callback(collect, nullptr);
  REQUIRE(cl4ac_prepare(c.p) == CL4AC_OK);
  REQUIRE(cl4ac_prepare(c.p) == CL4AC_OK);
  cl4ac_set_log_callback(nullptr, nullptr);
  int hits = 0;
  for (const auto& line : g_log) hits += line.rfind("cache hit", 0) == 0;
  CHECK(hits == 8);

  REQUIRE(cl4ac_train(c.p) == CL4AC_OK);
  REQUIRE(fs::exists(run / "model.ckpt"));
  REQUIRE(fs::exists(run / "loss.csv"));

  cl4ac_model* model = nullptr;
  CHECK(cl4ac_model_load((run / "missing.ckpt").c_str(), &model) == CL4AC_ERR_INPUT);
  REQUIRE(cl4ac_model_load((run / "model.ckpt").c_str(), &model) == CL4AC_OK);
  std::ifstream vocab(run / "vocab.txt");
  std::size_t corpus_tokens = 0;
  for (std::string line; std::getline(vocab, line);) corpus_tokens += !line.empty() && line[0] != '#';
  CHECK(cl4ac_model_vocab_size(model) == corpus_tokens + 4);

  char* caption = nullptr;
  REQUIRE(cl4ac_model_caption(model, (data / "synth_0000.wav").c_str(), 35, &caption) == CL4AC_OK);
  std::istringstream words(take(caption));
  std::size_t n = 0;
  for (std::string w; words >> w;) ++n;
  CHECK(n <= 35);
  CHECK(cl4ac_model_caption(model, (data / "nope.wav").c_str(), 35, &caption) == CL4AC_ERR_INPUT);
  cl4ac_model_free(model);

  char* report = nullptr;
  REQUIRE(cl4ac_evaluate((run / "model.ckpt").c_str(), (data / "manifest.csv").c_str(), data.c_str(),
                         (tmp.path / "eval").c_str(), 35, 1, &report) == CL4AC_OK);
  const json r = json::parse(take(report));
  CHECK(r["bleu1"] == doctest::Approx(1.0));
  CHECK(r["meteor"].is_null());
  CHECK(r["spice"].is_null());
  CHECK(r["spider"].is_null());
  CHECK(fs::exists(tmp.path / "eval" / "report.csv"));
  CHECK(fs::exists(tmp.path / "eval" / "report.json"));

  CHECK(cl4ac_evaluate((run / "model.ckpt").c_str(), (tmp.path / "none.csv").c_str(), data.c_str(),
                       (tmp.path / "eval").c_str(), 35, 1, nullptr) == CL4AC_ERR_INPUT);
}

TEST_CASE("non-finite training loss is a numeric error") {
  TempDir tmp("nan");
  const fs::path data = tmp.path / "synth", run = tmp.path / "run";
  REQUIRE(cl4ac_synth(data.c_str(), 4, 2, "tone", 2.0) == CL4AC_OK);
  json j = micro_config(data, run);
  j["train"]["lr"] = 1e38;
  j["train"]["warmup_epochs"] = 0;
  j["train"]["epochs"] = 3;
  Config c;
  REQUIRE(cl4ac_config_from_json(j.dump().c_str(), &c.p) == CL4AC_OK);
  REQUIRE(cl4ac_prepare(c.p) == CL4AC_OK);
  CHECK(cl4ac_train(c.p) == CL4AC_ERR_NUMERIC);
  CHECK(last_error().find("non-finite loss at step") != std::string::npos);
}

TEST_CASE("corrupted audio is an input error naming the file") {
  TempDir tmp("bad");
  const fs::path data = tmp.path / "synth", run = tmp.path / "run";
  REQUIRE(cl4ac_synth(data.c_str(), 3, 3, "both", 2.0) == CL4AC_OK);
  {
    std::ofstream f(data / "synth_0001.wav", std::ios::binary | std::ios::trunc);
    f << "RIFF\x10\x00\x00\x00WAVEjunk";
  }
  Config c;
  REQUIRE(cl4ac_config_from_json(micro_config(data, run).dump().c_str(), &c.p) == CL4AC_OK);
  CHECK(cl4ac_prepare(c.p) == CL4AC_ERR_INPUT);
  CHECK(last_error().find("synth_0001.wav") != std::string::npos);

  fs::remove(data / "manifest.csv");
  CHECK(cl4ac_prepare(c.p) == CL4AC_ERR_INPUT);
  CHECK(last_error().find("manifest.csv") != std::string::npos);
}
