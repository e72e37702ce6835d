// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "pipeline/gradcheck_suite.hpp"

#include <cstdio>
#include <functional>

#include "model/caption_model.hpp"
#include "numerics/gradcheck.hpp"
#include "numerics/ops.hpp"
#include "training/trainer.hpp"

namespace cl4ac::pipeline {
namespace {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using Fn = std::function<Var(Tape<double>&)>;

Tensor<double> random_tensor(nn::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

// Values with |v| in [0.2, 1], so no element sits near a kink.
Tensor<double> away_from_zero(nn::Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * (0.2 + 0.8 * uniform01(rng));
  return t;
}

// sum(out * w) for a fixed random w, so every output element matters.
Var project(Tape<double>& t, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return nn::sum(t, nn::mul(t, out, t.constant(random_tensor(t.shape(out), rng))));
}

constexpr double kEps = 1e-5;
// Central differences of an O(1) objective carry ~1e-10 of rounding noise, so
// gradients that are exactly zero (attention key biases) need a floor well
// above that to avoid reading noise as relative error.
constexpr double kFloor = 1e-4;
// A family whose gradients all vanish (dead ReLUs) passes vacuously; fail it.
constexpr double kLiveGradient = 1e-6;

model::ModelConfig micro_model() {
  model::ModelConfig cfg;
  cfg.encoder.channels = {3, 3, 3, 3};
  cfg.encoder.fc_hidden = 8;
  cfg.encoder.dropout = 0.0;
  cfg.decoder.layers = 1;
  cfg.decoder.heads = 2;
  cfg.decoder.width = 8;
  cfg.decoder.ff_width = 8;
  cfg.decoder.dropout = 0.0;
  cfg.vocab_size = 8;
  return cfg;
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck_suite(double tolerance) {
  Rng rng(20260101);
  Parameter<double> x("x", random_tensor({3, 4}, rng));
  Parameter<double> w("w", random_tensor({4, 5}, rng)), b("b", random_tensor({5}, rng));
  Parameter<double> y("y", random_tensor({4, 3}, rng));
  Parameter<double> img("img", random_tensor({2, 2, 4, 5}, rng));
  Parameter<double> ker("ker", random_tensor({3, 2, 3, 3}, rng));
  Parameter<double> bn_g("bn_g", random_tensor({2}, rng, 0.5, 1.5)), bn_b("bn_b", random_tensor({2}, rng));
  Parameter<double> rm("rm", Tensor<double>({2}, 0.0), false), rv("rv", Tensor<double>({2}, 1.0), false);
  Parameter<double> kinky("kinky", away_from_zero({3, 5}, rng));
  Parameter<double> ln_g("ln_g", random_tensor({4}, rng, 0.5, 1.5)), ln_b("ln_b", random_tensor({4}, rng));
  Parameter<double> q("q", random_tensor({2, 3, 4}, rng)), k("k", random_tensor({2, 3, 4}, rng)),
      v("v", random_tensor({2, 3, 4}, rng));
  Parameter<double> table("table", random_tensor({6, 4}, rng));
  Parameter<double> logits("logits", random_tensor({6, 5}, rng, -2.0, 2.0));
  Parameter<double> scores("scores", random_tensor({4}, rng, -2.0, 2.0));
  Parameter<double> ce("ce", random_tensor({4}, rng, 0.5, 3.0)), cl("cl", random_tensor({4}, rng, 0.1, 1.0));

  Rng init(7);
  model::CaptionModel<double> micro(micro_model(), init);
  std::vector<Parameter<double>*> encoder_params, decoder_params, trainable;
  for (auto* p : micro.parameters()) {
    if (!p->trainable()) continue;
    trainable.push_back(p);
    (p->name().rfind("encoder.", 0) == 0 ? encoder_params : decoder_params).push_back(p);
  }
  Rng data_rng(11);
  const Tensor<double> mels = random_tensor({2, 16, 16}, data_rng, -6.0, 0.0);
  std::vector<training::ClipRecord> clips(3);
  for (std::size_t c = 0; c < clips.size(); ++c) {
    clips[c].id = "clip" + std::to_string(c);
    clips[c].mel = dsp::MelSpectrogram{16, 16, std::vector<float>(256)};
    for (auto& m : clips[c].mel.values) m = static_cast<float>(-6.0 + 6.0 * uniform01(data_rng));
    clips[c].captions.push_back({text::kSos, static_cast<int>(4 + c), static_cast<int>(5 + c), text::kEos});
  }
  const std::vector<training::TrainingExample> batch = {
      {0, clips[0].captions[0], 0}, {1, clips[2].captions[0], 1}, {2, clips[2].captions[0], 0}};
  const model::Mode train_mode{true, nullptr};

  struct Case {
    const char* family;
    Fn f;
    std::vector<Parameter<double>*> params;
  };
  const std::vector<Case> cases = {
      {"linear", [&](Tape<double>& t) { return project(t, nn::linear(t, t.param(x), t.param(w), t.param(b)), 1); }, {&x, &w, &b}},
      {"matmul", [&](Tape<double>& t) { return project(t, nn::matmul(t, t.param(x), t.param(y)), 2); }, {&x, &y}},
      {"conv2d", [&](Tape<double>& t) { return project(t, nn::conv2d(t, t.param(img), t.param(ker)), 3); }, {&img, &ker}},
      {"batch_norm",
       [&](Tape<double>& t) {
         return project(t, nn::batch_norm(t, t.param(img), t.param(bn_g), t.param(bn_b), rm, rv, true), 4);
       },
       {&img, &bn_g, &bn_b}},
      {"relu", [&](Tape<double>& t) { return project(t, nn::relu(t, t.param(kinky)), 5); }, {&kinky}},
      {"avg_pool_2x2", [&](Tape<double>& t) { return project(t, nn::avg_pool_2x2(t, t.param(img)), 6); }, {&img}},
      {"global_mean", [&](Tape<double>& t) { return project(t, nn::global_mean(t, t.param(img), 2), 7); }, {&img}},
      {"layer_norm",
       [&](Tape<double>& t) { return project(t, nn::layer_norm(t, t.param(x), t.param(ln_g), t.param(ln_b)), 8); },
       {&x, &ln_g, &ln_b}},
      {"softmax", [&](Tape<double>& t) { return project(t, nn::softmax(t, t.param(logits), 1), 9); }, {&logits}},
      {"sigmoid", [&](Tape<double>& t) { return project(t, nn::sigmoid(t, t.param(scores)), 10); }, {&scores}},
      {"log", [&](Tape<double>& t) { return project(t, nn::log(t, t.param(ce)), 20); }, {&ce}},
      {"attention",
       [&](Tape<double>& t) {
         const std::size_t lengths[] = {3, 2};
         const auto mask = nn::AttentionMask::causal(2, 3, lengths);
         return project(t, nn::attention(t, t.param(q), t.param(k), t.param(v), 2, &mask), 11);
       },
       {&q, &k, &v}},
      {"embedding",
       [&](Tape<double>& t) {
         const int ids[] = {1, 4, 4, 0, 5};
         return project(t, nn::embedding_lookup(t, t.param(table), ids), 12);
       },
       {&table}},
      {"dropout",
       [&](Tape<double>& t) {
         Rng mask_rng(99);
         return project(t, nn::dropout(t, t.param(x), 0.3, &mask_rng, true), 13);
       },
       {&x}},
      {"cross_entropy",
       [&](Tape<double>& t) {
         const int targets[] = {0, 3, 1, -1, 4, 2};
         const int groups[] = {0, 0, 1, 1, 2, 2};
         return project(t, nn::sequence_cross_entropy(t, t.param(logits), targets, groups, 3), 14);
       },
       {&logits}},
      {"bce_with_logits",
       [&](Tape<double>& t) {
         const int labels[] = {0, 1, 1, 0};
         return project(t, nn::binary_cross_entropy_with_logits(t, t.param(scores), labels), 15);
       },
       {&scores}},
      {"gated_objective",
       [&](Tape<double>& t) {
         const int labels[] = {0, 1, 0, 1};
         return nn::gated_objective<double>(t, t.param(ce), t.param(cl), labels);
       },
       {&ce, &cl}},
      {"encoder",
       [&](Tape<double>& t) { return project(t, micro.encode(t, t.constant(mels), train_mode), 16); },
       encoder_params},
      {"decoder",
       [&](Tape<double>& t) {
         Var z = micro.encode(t, t.constant(mels), train_mode);
         const auto tb = model::TokenBatch::from({{1, 4, 5, 2}, {1, 6, 2}});
         return project(t, micro.project_vocab(t, micro.decode_states(t, z, tb, train_mode)), 17);
       },
       decoder_params},
      {"caption_objective",
       [&](Tape<double>& t) {
         return training::forward_batch<double>(t, micro, clips, batch, train_mode, true).total;
       },
       trainable},
  };

  std::vector<GradcheckRow> rows;
  for (const auto& c : cases) {
    const auto r = nn::finite_diff_check<double>(c.f, c.params, kEps, kFloor);
    const bool live = r.max_abs_gradient > kLiveGradient;
    rows.push_back({c.family, r.max_rel_error, r.coordinates, live && r.max_rel_error < tolerance,
                    r.worst_parameter + "[" + std::to_string(r.worst_index) + "]", live});
  }
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %14s %11s  %-6s %s\n", "family", "max_rel_error", "coordinates", "status",
                "worst");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-18s %14.3e %11zu  %-6s %s%s\n", r.family.c_str(), r.max_rel_error,
                  r.coordinates, r.pass ? "pass" : "FAIL", r.worst.c_str(), r.live ? "" : " (no gradient)");
    out += line;
  }
  return out;
}

}  // namespace cl4ac::pipeline
