// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "pipeline/commands.hpp"

#include <fstream>
#include <sstream>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/log.hpp"
#include "data/binary.hpp"
#include "data/feature_cache.hpp"
#include "dsp/audio.hpp"
#include "dsp/mel.hpp"
#include "text/vocab.hpp"
#include "text/word2vec.hpp"

namespace cl4ac::pipeline {
namespace {

constexpr char kMatrixMagic[4] = {'C', 'L', '4', 'E'};

RunLayout make_run(const RunConfig& cfg) {
  RunLayout run{resolve_run_dir(cfg)};
  std::error_code ec;
  fs::create_directories(run.root, ec);
  if (ec) throw IoError("cannot create run directory " + run.root.string() + ": " + ec.message());
  return run;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

dsp::DspConfig dsp_of(const data::Checkpoint& ckpt) {
  if (ckpt.meta.is_object() && ckpt.meta.contains("dsp")) return dsp_from_json(ckpt.meta.at("dsp"));
  return {};
}

nn::Tensor<float> mel_tensor(const dsp::MelSpectrogram& m) { return nn::Tensor<float>({m.bands, m.frames}, m.values); }

}  // namespace

void echo_config(const RunConfig& cfg, const RunLayout& run) {
  std::ofstream out(run.config());
  out << to_json(cfg).dump(2) << "\n";
  if (!out) throw IoError("cannot write " + run.config().string());
}

data::DatasetManifest load_training_manifest(const RunConfig& cfg) {
  if (cfg.paths.train.empty()) throw ConfigError("paths.train lists no manifest");
  data::DatasetManifest merged;
  for (const auto& src : cfg.paths.train) {
    merged = data::merge_splits(merged, data::load_manifest(src.csv, src.audio_root, fs::path(src.csv).stem().string()));
  }
  return merged;
}

void save_matrix(const nn::Tensor<float>& m, const fs::path& path) {
  if (m.rank() != 2) throw ShapeError("save_matrix expects a matrix, got " + nn::shape_str(m.shape()));
  data::ByteWriter w;
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMatrixMagic), 4));
  w.u32(1);
  w.u64(m.dim(0));
  w.u64(m.dim(1));
  for (float v : m.data()) w.f32(v);
  const Sha256 d = sha256(w.bytes());
  w.raw(d);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("cannot write " + path.string());
}

nn::Tensor<float> load_matrix(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("missing file " + path.string());
  const auto bytes = dsp::read_file_bytes(path);
  data::ByteReader r(bytes, path.string());
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMatrixMagic)) throw CorruptionError(path.string() + ": bad magic at byte offset 0");
  if (const auto v = r.u32("version"); v != 1) throw VersionError(path.string() + ": matrix version " + std::to_string(v));
  const auto rows = r.u64("rows"), cols = r.u64("cols");
  if (cols == 0 || rows > r.remaining() / 4 / cols) throw CorruptionError(path.string() + ": implausible shape at byte offset 8");
  nn::Tensor<float> m({rows, cols});
  for (auto& v : m.data()) v = r.f32("values");
  const std::size_t body = r.pos();
  const auto stored = r.take(32, "digest");
  const Sha256 d = sha256(std::span(bytes).first(body));
  if (!std::equal(d.begin(), d.end(), stored.begin())) {
    throw CorruptionError(path.string() + ": digest mismatch over bytes [0, " + std::to_string(body) + ")");
  }
  return m;
}

PrepareResult cmd_prepare(const RunConfig& cfg) {
  cfg.validate();
  const RunLayout run = make_run(cfg);
  echo_config(cfg, run);
  const auto manifest = load_training_manifest(cfg);

  std::vector<std::string> corpus;
  for (const auto& row : manifest.rows) corpus.insert(corpus.end(), row.captions.begin(), row.captions.end());
  const auto vocab = text::build_vocab(corpus, cfg.text.min_count);
  text::save_vocab(vocab, run.vocab());
  log::info("vocabulary: ", vocab.size(), " tokens (", vocab.size() - text::kFirstCorpusId, " from captions)");

  if (cfg.text.word2vec) {
    Rng rng(cfg.train.seed);
    text::EmbeddingMatrix emb;
    if (cfg.text.word2vec_mode == "both") {
      emb = text::train_word2vec_combined(corpus, vocab, cfg.text.w2v, rng);
    } else {
      auto w = cfg.text.w2v;
      w.mode = cfg.text.word2vec_mode == "cbow" ? text::Word2VecMode::kCbow : text::Word2VecMode::kSkipGram;
      emb = text::train_word2vec(corpus, vocab, w, rng).embeddings;
    }
    save_matrix(emb, run.embeddings());
    log::info("word2vec embeddings: ", emb.dim(0), " x ", emb.dim(1));
  }

  data::FeatureCache cache(run.root);
  for (const auto& row : manifest.rows) cache.get(row.audio_path, cfg.dsp);
  PrepareResult res{manifest.rows.size(), vocab.size(), 0, 0};
  if (cfg.paths.eval) {
    const auto ev = data::load_manifest(cfg.paths.eval->csv, cfg.paths.eval->audio_root, "eval");
    for (const auto& row : ev.rows) cache.get(row.audio_path, cfg.dsp);
  }
  res.cache_hits = cache.hits();
  res.cache_misses = cache.misses();
  log::info("features: ", res.cache_hits, " cache hits, ", res.cache_misses, " computed");
  return res;
}

std::vector<training::ClipRecord> load_clips(const data::DatasetManifest& manifest, const text::Vocabulary& vocab,
                                             const dsp::DspConfig& dsp, const fs::path& run_dir) {
  data::FeatureCache cache(run_dir);
  std::vector<training::ClipRecord> clips;
  clips.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    training::ClipRecord c;
    c.id = row.file_name;
    c.mel = cache.get(row.audio_path, dsp);
    for (const auto& cap : row.captions) c.captions.push_back(text::encode(cap, vocab));
    clips.push_back(std::move(c));
  }
  return clips;
}

TrainResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const RunLayout run = make_run(cfg);
  if (!fs::is_regular_file(run.vocab())) {
    throw InputError("run directory " + run.root.string() + " is not prepared (missing " +
                     run.vocab().filename().string() + "); run prepare first");
  }
  echo_config(cfg, run);
  const auto vocab = text::load_vocab(run.vocab());
  const auto clips = load_clips(load_training_manifest(cfg), vocab, cfg.dsp, run.root);

  model::ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  Rng init(cfg.train.seed);
  model::CaptionModel<float> model(mcfg, init);
  if (cfg.text.word2vec) {
    if (fs::is_regular_file(run.embeddings())) {
      model.set_embeddings(load_matrix(run.embeddings()));
    } else {
      log::warn("word2vec is enabled but ", run.embeddings().string(), " is missing; using random embeddings");
    }
  }

  std::ofstream loss(run.loss_csv());
  if (!loss) throw IoError("cannot write " + run.loss_csv().string());
  training::LossCsv csv(loss);
  training::TrainHooks hooks;
  hooks.on_step = [&](const training::StepRecord& r) { csv.write(r); };
  hooks.on_epoch = [&](std::size_t epoch, double mean_total) {
    log::info("epoch ", epoch, "/", cfg.train.epochs, " mean loss ", mean_total);
  };
  const auto summary = training::train(model, clips, cfg.train, hooks);

  const nlohmann::json meta{{"dsp", to_json(cfg.dsp)}, {"run", to_json(cfg)}};
  data::save_checkpoint(data::capture(model, vocab, meta), run.checkpoint());
  log::info("checkpoint written to ", run.checkpoint().string());
  return {run.checkpoint(), run.loss_csv(), summary.steps, summary.epoch_total};
}

std::string cmd_caption(const fs::path& checkpoint, const fs::path& wav, std::size_t max_len) {
  const auto ckpt = data::load_checkpoint(checkpoint);
  auto model = data::model_from_checkpoint<float>(ckpt);
  const auto mel = dsp::log_mel(dsp::read_wav(wav), dsp_of(ckpt));
  return text::decode(model.greedy_decode(mel_tensor(mel), max_len), ckpt.vocab);
}

metrics::EvalCorpus caption_corpus(model::CaptionModel<float>& model, const text::Vocabulary& vocab,
                                   const dsp::DspConfig& dsp, const data::DatasetManifest& manifest,
                                   std::size_t max_len, bool references_as_candidates) {
  metrics::EvalCorpus corpus;
  for (const auto& row : manifest.rows) {
    metrics::EvalItem item;
    for (const auto& c : row.captions) item.references.push_back(split_words(c));
    if (references_as_candidates) {
      item.candidate = item.references.front();
    } else {
      const auto mel = dsp::log_mel(dsp::read_wav(row.audio_path), dsp);
      item.candidate = split_words(text::decode(model.greedy_decode(mel_tensor(mel), max_len), vocab));
    }
    corpus.push_back(std::move(item));
  }
  return corpus;
}

metrics::MetricReport cmd_evaluate(const fs::path& checkpoint, const fs::path& manifest_csv,
                                   const fs::path& audio_root, const EvaluateOptions& opts) {
  const auto ckpt = data::load_checkpoint(checkpoint);
  auto model = data::model_from_checkpoint<float>(ckpt);
  const auto manifest = data::load_manifest(manifest_csv, audio_root, "eval");
  const auto corpus =
      caption_corpus(model, ckpt.vocab, dsp_of(ckpt), manifest, opts.max_len, opts.references_as_candidates);
  const auto report = metrics::evaluate_all(corpus);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw IoError("cannot create " + opts.out_dir.string() + ": " + ec.message());
  const RunLayout out{opts.out_dir};
  metrics::save_report(report, out.report_csv(), out.report_json());
  log::info("report written to ", out.report_csv().string(), " and ", out.report_json().string());
  return report;
}

}  // namespace cl4ac::pipeline
