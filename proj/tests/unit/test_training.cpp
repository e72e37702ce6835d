// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "doctest.h"
#include "numerics/gradcheck.hpp"
#include "training/trainer.hpp"

using namespace cl4ac;
using namespace cl4ac::training;
using cl4ac::nn::Shape;
using cl4ac::nn::Tensor;

namespace {

dsp::MelSpectrogram random_mel(std::size_t bands, std::size_t frames, Rng& rng) {
  dsp::MelSpectrogram m{bands, frames, std::vector<float>(bands * frames)};
  for (auto& v : m.values) v = static_cast<float>(normal(rng, -4.0, 2.0));
  return m;
}

// Clip c has a mel offset by c and a two-word caption built from `words`
// corpus ids.
std::vector<ClipRecord> toy_clips(std::size_t n, std::uint64_t seed = 1, std::size_t frames = 16,
                                  std::size_t words = 4) {
  Rng rng(seed);
  std::vector<ClipRecord> clips;
  for (std::size_t c = 0; c < n; ++c) {
    ClipRecord r;
    r.id = "clip" + std::to_string(c);
    r.mel = random_mel(16, frames, rng);
    for (auto& v : r.mel.values) v += static_cast<float>(c);
    const int a = static_cast<int>(4 + c % words), b = static_cast<int>(4 + (c / words) % words);
    r.captions.push_back({text::kSos, a, b, text::kEos});
    clips.push_back(std::move(r));
  }
  return clips;
}

model::ModelConfig micro_config(std::size_t vocab = 8) {
  model::ModelConfig cfg;
  cfg.encoder.channels = {2, 2, 2, 2};
  cfg.encoder.fc_hidden = 4;
  cfg.encoder.dropout = 0.0;
  cfg.decoder.layers = 1;
  cfg.decoder.heads = 2;
  cfg.decoder.width = 8;
  cfg.decoder.ff_width = 8;
  cfg.decoder.dropout = 0.0;
  cfg.vocab_size = vocab;
  return cfg;
}

}  // namespace

TEST_CASE("negatives: counts, labels and no self-pairing") {
  std::vector<ClipRecord> clips(3);
  for (std::size_t c = 0; c < 3; ++c) {
    clips[c].id = std::to_string(c);
    clips[c].captions.push_back({1, static_cast<int>(4 + c), 2});
  }
  Rng rng(3);
  const auto base = sample_positives(clips, rng);
  const auto ext = make_negatives(clips, base, 1.0, rng);
  CHECK(ext.size() == 6);
  std::size_t negatives = 0;
  for (const auto& e : ext) {
    if (e.y == 1) {
      ++negatives;
      CHECK(e.tokens != clips[e.clip].captions[0]);
    } else {
      CHECK(e.tokens == clips[e.clip].captions[0]);
    }
  }
  CHECK(negatives == 3);
  Rng r0(3);
  const auto same = make_negatives(clips, base, 0.0, r0);
  CHECK(same.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(same[i].tokens == base[i].tokens);

  Rng a(9), b(9);
  const auto e1 = make_negatives(clips, base, 1.0, a), e2 = make_negatives(clips, base, 1.0, b);
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i].clip == e2[i].clip);
    CHECK(e1[i].tokens == e2[i].tokens);
  }
}

TEST_CASE("negatives never reuse any of a clip's five captions") {
  std::vector<ClipRecord> clips(4);
  for (std::size_t c = 0; c < 4; ++c) {
    clips[c].id = std::to_string(c);
    for (int k = 0; k < 5; ++k) clips[c].captions.push_back({1, static_cast<int>(10 * c + k), 2});
  }
  // A caption shared verbatim between clips 0 and 1 is not a valid negative for either.
  clips[1].captions[4] = clips[0].captions[0];
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto ext = make_negatives(clips, sample_positives(clips, rng), 1.0, rng);
    for (const auto& e : ext) {
      if (e.y == 0) continue;
      for (const auto& own : clips[e.clip].captions) REQUIRE(e.tokens != own);
    }
  }
}

TEST_CASE("negatives need two clips") {
  std::vector<ClipRecord> one(1);
  one[0].captions.push_back({1, 4, 2});
  Rng rng(1);
  CHECK_THROWS_AS(make_negatives(one, sample_positives(one, rng), 1.0, rng), InputError);
}

TEST_CASE("ce_loss values") {
  nn::Tape<double> tape;
  Var uniform = tape.constant(Tensor<double>({3, 4}, 0.0));
  const int t3[] = {0, 1, 2};
  const std::uint8_t all[] = {1, 1, 1};
  CHECK(tape.value(ce_loss(tape, uniform, t3, all)).item() == doctest::Approx(std::log(4.0)));

  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 50.0}) {
    Tensor<double> l({2, 4}, 0.0);
    l[1] = margin;
    l[4 + 3] = margin;
    const int t[] = {1, 3};
    const std::uint8_t m[] = {1, 1};
    nn::Tape<double> tp;
    const double v = tp.value(ce_loss(tp, tp.constant(l), t, m)).item();
    CHECK(v < prev);
    prev = v;
  }
  CHECK(prev < 1e-20);

  // Hand example: rows with per-row losses ln4, ln4, -ln(e^2/(e^2+3)), ln4.
  Tensor<double> l({4, 4}, 0.0);
  l[2 * 4 + 1] = 2.0;
  const int t[] = {0, 1, 1, 3};
  const std::uint8_t half[] = {1, 0, 1, 0};
  const double row2 = -std::log(std::exp(2.0) / (std::exp(2.0) + 3.0));
  nn::Tape<double> tp;
  CHECK(tp.value(ce_loss(tp, tp.constant(l), t, half)).item() ==
        doctest::Approx((std::log(4.0) + row2) / 2.0).epsilon(1e-12));
  const std::uint8_t none[] = {0, 0, 0, 0};
  CHECK_THROWS_AS(ce_loss(tp, tp.constant(l), t, none), ContractError);
}

TEST_CASE("cl_loss and total_loss values") {
  CHECK(cl_loss_value(0.5, 0) == doctest::Approx(std::log(2.0)));
  CHECK(cl_loss_value(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(cl_loss_value(1.0 - 1e-12, 1) < 1e-11);
  CHECK(cl_loss_value(0.9, 0) == doctest::Approx(2.302585093).epsilon(1e-9));
  CHECK_THROWS_AS(cl_loss_value(1.0, 1), DomainError);
  CHECK_THROWS_AS(cl_loss_value(0.0, 0), DomainError);

  nn::Tape<double> tape;
  Var p = tape.constant(Tensor<double>({2}, std::vector<double>{0.5, 0.9}));
  const int y[] = {1, 0};
  CHECK(tape.value(cl_loss(tape, p, y)).item() ==
        doctest::Approx((std::log(2.0) + 2.302585093) / 2).epsilon(1e-9));
  Var bad = tape.constant(Tensor<double>({1}, std::vector<double>{1.5}));
  const int y1[] = {0};
  CHECK_THROWS_AS(cl_loss(tape, bad, y1), DomainError);

  CHECK(total_loss_value(7.3, 0.5, 1) == 0.5);
  CHECK(total_loss_value(2.0, 0.5, 0) == 2.5);
  Var ce = tape.constant(Tensor<double>({2}, std::vector<double>{7.3, 2.0}));
  Var cl = tape.constant(Tensor<double>({2}, std::vector<double>{0.5, 0.5}));
  CHECK(tape.value(total_loss(tape, ce, cl, y)).item() == doctest::Approx((0.5 + 2.5) / 2));
}

TEST_CASE("learning-rate schedule over epochs 1..30") {
  TrainConfig cfg;
  for (std::size_t e = 1; e <= 30; ++e) {
    double want;
    if (e <= 5) want = 5e-4 * static_cast<double>(e) / 5.0;
    else if (e <= 15) want = 5e-4;
    else if (e <= 25) want = 5e-5;
    else want = 5e-6;
    CHECK(lr_schedule(e, cfg) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(lr_schedule(2, cfg) == doctest::Approx(2e-4));
  CHECK(lr_schedule(10, cfg) == doctest::Approx(5e-4));
  CHECK(lr_schedule(20, cfg) == doctest::Approx(5e-5));
  CHECK_THROWS_AS(lr_schedule(0, cfg), ContractError);
}

TEST_CASE("gradient clipping and a first Adam step") {
  nn::Parameter<double> a("a", Tensor<double>({2}, std::vector<double>{1.0, -2.0}));
  nn::Parameter<double> frozen("f", Tensor<double>({1}, 5.0), false);
  a.grad() = Tensor<double>({2}, std::vector<double>{3.0, 4.0});
  frozen.grad() = Tensor<double>({1}, 100.0);
  nn::Parameter<double>* ps[] = {&a, &frozen};
  CHECK(clip_grad_norm<double>(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(a.grad()[1] == doctest::Approx(0.8));
  Adam<double> adam;
  adam.step(ps, 0.1);
  // First step moves each coordinate by lr * sign(g).
  CHECK(a.value()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(a.value()[1] == doctest::Approx(-2.1).epsilon(1e-6));
  CHECK(frozen.value()[0] == 5.0);
}

TEST_CASE("negatives-only batch: CE branch leaves updates bitwise unchanged") {
  const auto clips = toy_clips(4);
  std::vector<TrainingExample> negs;
  for (std::size_t c = 0; c < 4; ++c) negs.push_back({c, clips[(c + 1) % 4].captions[0], 1});
  auto cfg = micro_config();
  cfg.encoder.dropout = 0.2;
  cfg.decoder.dropout = 0.2;

  auto run = [&](bool skip) {
    Rng init(5);
    model::CaptionModel<float> m(cfg, init);
    const auto params = m.parameters();
    Rng rng(77);
    nn::Tape<float> tape;
    auto fwd = forward_batch<float>(tape, m, clips, negs, model::Mode{true, &rng}, true, skip);
    tape.backward(fwd.total);
    std::vector<std::vector<float>> grads;
    for (auto* p : params) grads.emplace_back(p->grad().data().begin(), p->grad().data().end());
    clip_grad_norm<float>(params, 1.0);
    Adam<float> adam;
    adam.step(params, 1e-3);
    std::vector<std::vector<float>> values;
    for (auto* p : params) values.emplace_back(p->value().data().begin(), p->value().data().end());
    return std::make_tuple(grads, values, fwd.loss);
  };
  const auto [g_full, v_full, l_full] = run(false);
  const auto [g_skip, v_skip, l_skip] = run(true);
  CHECK(g_full == g_skip);
  CHECK(v_full == v_skip);
  REQUIRE(l_full.cl.has_value());
  CHECK(l_full.total == doctest::Approx(*l_full.cl).epsilon(1e-6));
  CHECK(l_full.total == l_skip.total);
}

TEST_CASE("mixed batch: the CE term of a negative has no effect on the gradient") {
  const auto clips = toy_clips(4);
  std::vector<TrainingExample> batch = {{0, clips[0].captions[0], 0},
                                        {1, clips[2].captions[0], 1},
                                        {2, clips[2].captions[0], 0}};
  auto run = [&](bool skip) {
    Rng init(5);
    model::CaptionModel<double> m(micro_config(), init);
    nn::Tape<double> tape;
    auto fwd = forward_batch<double>(tape, m, clips, batch, model::Mode{}, true, skip);
    tape.backward(fwd.total);
    std::vector<double> g;
    for (auto* p : m.parameters()) g.insert(g.end(), p->grad().data().begin(), p->grad().data().end());
    return std::make_pair(g, fwd.loss.total);
  };
  const auto full = run(false), skip = run(true);
  CHECK(full.second == doctest::Approx(skip.second).epsilon(1e-14));
  REQUIRE(full.first.size() == skip.first.size());
  for (std::size_t i = 0; i < full.first.size(); ++i)
    CHECK(full.first[i] == doctest::Approx(skip.first[i]).epsilon(1e-12).scale(1e-14));
}

TEST_CASE("end-to-end gradient check of the full objective on a micro-model") {
  const auto clips = toy_clips(3, 2, 16, 2);
  std::vector<TrainingExample> batch = {{0, clips[0].captions[0], 0},
                                        {1, clips[2].captions[0], 1},
                                        {2, clips[2].captions[0], 0}};
  Rng init(21);
  model::CaptionModel<double> m(micro_config(6), init);
  std::vector<nn::Parameter<double>*> trainable;
  for (auto* p : m.parameters())
    if (p->trainable()) trainable.push_back(p);
  const auto r = nn::finite_diff_check<double>(
      [&](nn::Tape<double>& tape) {
        return forward_batch<double>(tape, m, clips, batch, model::Mode{true, nullptr}, true).total;
      },
      trainable);
  CAPTURE(r.worst_parameter);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("training is deterministic under a seed and logs every step") {
  const auto clips = toy_clips(8);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  cfg.warmup_epochs = 1;
  auto run = [&]() {
    Rng init(3);
    model::CaptionModel<float> m(micro_config(), init);
    std::vector<StepRecord> log;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) { log.push_back(r); };
    hooks.max_steps = 10;
    train(m, clips, cfg, hooks);
    return log;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == 10);
  REQUIRE(b.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a[i].step == i + 1);
    CHECK(a[i].loss.total == b[i].loss.total);
    CHECK(a[i].loss.ce == b[i].loss.ce);
  }
}

TEST_CASE("epoch-mean loss falls by epoch 10 for the median seed") {
  const auto clips = toy_clips(8);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.epochs = 10;
  cfg.lr = 3e-3;
  cfg.warmup_epochs = 1;
  std::vector<std::pair<double, double>> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng init(seed);
    auto mc = micro_config();
    mc.decoder.width = 16;
    model::CaptionModel<float> m(mc, init);
    cfg.seed = seed;
    const auto s = train(m, clips, cfg);
    runs.emplace_back(s.epoch_total.front(), s.epoch_total.back());
  }
  std::vector<double> first, last;
  for (auto& [f, l] : runs) {
    first.push_back(f);
    last.push_back(l);
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  CHECK(last[1] < first[1]);
}

TEST_CASE("non-finite loss aborts with the step number") {
  auto clips = toy_clips(4);
  clips[0].mel.values[3] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.epochs = 1;
  cfg.spec_augment = false;
  Rng init(1);
  model::CaptionModel<float> m(micro_config(), init);
  try {
    train(m, clips, cfg);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("loss CSV layout") {
  std::ostringstream os;
  LossCsv csv(os);
  StepRecord r;
  r.step = 1;
  r.epoch = 1;
  r.lr = 1e-4;
  r.loss.ce = 2.5;
  r.loss.total = 2.5;
  csv.write(r);
  r.loss.cl = 0.25;
  csv.write(r);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,epoch,lr,ce,cl,total");
  std::getline(in, line);
  CHECK(line == "1,1,0.0001,2.5,,2.5");
  std::getline(in, line);
  CHECK(line == "1,1,0.0001,2.5,0.25,2.5");
}
