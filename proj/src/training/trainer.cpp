// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include "core/error.hpp"

namespace cl4ac::training {

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (decay_every == 0) throw ConfigError("train.decay_every must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("train.decay_factor must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be non-negative");
  if (!(negative_ratio >= 0.0)) throw ConfigError("train.negative_ratio must be non-negative");
}

std::vector<TrainingExample> sample_positives(const std::vector<ClipRecord>& clips, Rng& rng) {
  std::vector<TrainingExample> out;
  out.reserve(clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& caps = clips[c].captions;
    if (caps.empty()) throw InputError("clip " + clips[c].id + " has no caption");
    const auto k = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(caps.size() - 1)));
    out.push_back({c, caps[k], 0});
  }
  return out;
}

std::vector<TrainingExample> make_negatives(const std::vector<ClipRecord>& clips,
                                            const std::vector<TrainingExample>& base, double ratio,
                                            Rng& rng) {
  if (!(ratio >= 0.0)) throw ConfigError("negative ratio must be non-negative");
  std::vector<TrainingExample> out = base;
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(base.size())));
  if (count == 0) return out;
  {
    std::vector<std::size_t> distinct;
    for (const auto& e : base) distinct.push_back(e.clip);
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2) {
      throw InputError("negative sampling needs at least two distinct clips");
    }
  }
  // Pool of every (clip, caption) pair.
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t c = 0; c < clips.size(); ++c)
    for (std::size_t k = 0; k < clips[c].captions.size(); ++k) pool.emplace_back(c, k);

  auto valid = [&](std::size_t own, const std::pair<std::size_t, std::size_t>& cand) {
    if (cand.first == own) return false;
    const auto& tokens = clips[cand.first].captions[cand.second];
    for (const auto& mine : clips[own].captions)
      if (mine == tokens) return false;
    return true;
  };

  // Each positive donates its clip once per pass, in a shuffled order.
  std::vector<std::size_t> order;
  while (order.size() < count) {
    std::vector<std::size_t> pass(base.size());
    for (std::size_t i = 0; i < pass.size(); ++i) pass[i] = i;
    shuffle(pass, rng);
    order.insert(order.end(), pass.begin(), pass.end());
  }
  order.resize(count);

  for (std::size_t idx : order) {
    const std::size_t own = base[idx].clip;
    std::optional<std::pair<std::size_t, std::size_t>> pick;
    for (int attempt = 0; attempt < 64 && !pick; ++attempt) {
      const auto& cand = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(pool.size() - 1)))];
      if (valid(own, cand)) pick = cand;
    }
    if (!pick) {
      std::vector<std::pair<std::size_t, std::size_t>> allowed;
      for (const auto& cand : pool)
        if (valid(own, cand)) allowed.push_back(cand);
      if (allowed.empty()) {
        throw InputError("clip " + clips[own].id + " has no caption from another clip to pair with");
      }
      pick = allowed[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(allowed.size() - 1)))];
    }
    out.push_back({own, clips[pick->first].captions[pick->second], 1});
  }
  shuffle(out, rng);
  return out;
}

template <typename T>
Var ce_loss(Tape<T>& tape, Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask) {
  if (mask.size() != targets.size()) throw ShapeError("ce_loss: mask and targets differ in length");
  std::vector<int> groups(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) groups[i] = mask[i] ? 0 : -1;
  Var v = nn::sequence_cross_entropy(tape, logits, targets, std::span<const int>(groups), 1);
  return nn::reshape(tape, v, nn::Shape{});
}

template <typename T>
Var cl_loss(Tape<T>& tape, Var p, std::span<const int> y) {
  return nn::mean(tape, nn::binary_cross_entropy(tape, p, y));
}

template <typename T>
Var total_loss(Tape<T>& tape, std::optional<Var> ce, std::optional<Var> cl, std::span<const int> y) {
  return nn::gated_objective(tape, ce, cl, y);
}

double cl_loss_value(double p, int y) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("classifier probability " + std::to_string(p) + " outside (0, 1)");
  return y ? -std::log(p) : -std::log1p(-p);
}

double total_loss_value(double ce, double cl, int y) { return (y ? 0.0 : ce) + cl; }

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch == 0) throw ContractError("epochs are numbered from 1");
  if (epoch <= cfg.warmup_epochs) {
    return cfg.lr * static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
  }
  const std::size_t decays = (epoch - cfg.warmup_epochs - 1) / cfg.decay_every;
  return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(decays));
}

template <typename T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params) {
    if (!p->trainable()) continue;
    for (T g : p->grad().data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      if (!p->trainable()) continue;
      for (T& g : p->grad().data()) g *= s;
    }
  }
  return norm;
}

template <typename T>
void Adam<T>::step(std::span<Parameter<T>* const> params, double lr) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value().size(), 0.0);
      v_.emplace_back(p->value().size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ContractError("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    if (!p->trainable()) continue;
    auto w = p->value().data();
    auto g = p->grad().data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      const double upd = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      w[k] = static_cast<T>(static_cast<double>(w[k]) - upd);
    }
  }
}

template <typename T>
BatchForward<T> forward_batch(Tape<T>& tape, model::CaptionModel<T>& model,
                              const std::vector<ClipRecord>& clips,
                              std::span<const TrainingExample> batch, const model::Mode& mode,
                              bool use_cl, bool skip_negative_ce,
                              const std::vector<dsp::MelSpectrogram>* mel_override) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractError("forward_batch: empty batch");
  if (mel_override && mel_override->size() != n) throw ContractError("forward_batch: mel override size");
  auto mel_of = [&](std::size_t i) -> const dsp::MelSpectrogram& {
    return mel_override ? (*mel_override)[i] : clips.at(batch[i].clip).mel;
  };
  const std::size_t h = mel_of(0).bands;
  std::size_t w_max = 0;
  bool ragged = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = mel_of(i);
    if (m.bands != h) throw InputError("clips in one batch have different mel band counts");
    if (i > 0 && m.frames != w_max) ragged = true;
    w_max = std::max(w_max, m.frames);
  }
  const auto floor_value = static_cast<T>(std::log(dsp::kLogFloor));
  nn::Tensor<T> mels({n, h, w_max}, floor_value);
  std::vector<std::size_t> memory;
  const std::size_t red = model.config().time_reduction();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = mel_of(i);
    for (std::size_t b = 0; b < h; ++b)
      for (std::size_t f = 0; f < m.frames; ++f) mels[(i * h + b) * w_max + f] = static_cast<T>(m.at(b, f));
    memory.push_back(std::max<std::size_t>(1, m.frames / red));
  }

  std::vector<text::TokenSeq> inputs;
  std::vector<int> labels;
  for (const auto& ex : batch) {
    if (ex.tokens.size() < 2) throw InputError("training caption needs <sos> and <eos>");
    inputs.emplace_back(ex.tokens.begin(), ex.tokens.end() - 1);
    labels.push_back(ex.y);
  }
  const auto tb = model::TokenBatch::from(inputs);
  const std::size_t len = tb.len;
  std::vector<int> targets(n * len, -1), groups(n * len, -1);
  bool any_ce = false;
  LossBreakdown lb;
  for (std::size_t i = 0; i < n; ++i) {
    const bool include = !(skip_negative_ce && labels[i] == 1);
    for (std::size_t p = 0; p + 1 < batch[i].tokens.size(); ++p) {
      targets[i * len + p] = batch[i].tokens[p + 1];
      if (include) groups[i * len + p] = static_cast<int>(i);
      if (labels[i] == 0) ++lb.tokens;
    }
    any_ce |= include;
  }

  Var z = model.encode(tape, tape.constant(std::move(mels)), mode);
  Var states = model.decode_states(tape, z, tb, mode,
                                   ragged ? std::span<const std::size_t>(memory) : std::span<const std::size_t>());
  std::optional<Var> ce, cl;
  BatchForward<T> out;
  if (any_ce) {
    Var logits = model.project_vocab(tape, states);
    ce = nn::sequence_cross_entropy(tape, logits, std::span<const int>(targets),
                                    std::span<const int>(groups), n, skip_negative_ce);
  }
  if (use_cl) {
    std::vector<std::size_t> last(n);
    for (std::size_t i = 0; i < n; ++i) last[i] = tb.lengths[i] - 1;
    Var logit = model.classify_logits(tape, states, std::span<const std::size_t>(last));
    cl = nn::binary_cross_entropy_with_logits(tape, logit, std::span<const int>(labels));
    for (T s : tape.value(logit).data()) out.p_mismatch.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(s))));
  }
  out.total = total_loss(tape, ce, cl, std::span<const int>(labels));

  std::size_t positives = 0;
  double ce_sum = 0.0, cl_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 0) {
      ++positives;
      if (ce) ce_sum += static_cast<double>(tape.value(*ce)[i]);
    }
    if (cl) cl_sum += static_cast<double>(tape.value(*cl)[i]);
  }
  lb.ce = positives ? ce_sum / static_cast<double>(positives) : 0.0;
  if (cl) lb.cl = cl_sum / static_cast<double>(n);
  lb.total = static_cast<double>(tape.value(out.total).item());
  out.loss = lb;
  return out;
}

template <typename T>
TrainSummary train(model::CaptionModel<T>& model, const std::vector<ClipRecord>& clips,
                   const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (clips.empty()) throw InputError("training set is empty");
  Rng rng(cfg.seed);
  Adam<T> adam(cfg.beta1, cfg.beta2, cfg.adam_eps);
  const auto params = model.parameters();
  const model::Mode mode{true, &rng};
  TrainSummary summary;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    auto examples = sample_positives(clips, rng);
    if (cfg.use_cl) {
      examples = make_negatives(clips, examples, cfg.negative_ratio, rng);
    } else {
      shuffle(examples, rng);
    }
    double epoch_total = 0.0, epoch_ce = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch) {
      const std::size_t stop = std::min(examples.size(), start + cfg.batch);
      std::span<const TrainingExample> batch(examples.data() + start, stop - start);
      std::vector<dsp::MelSpectrogram> augmented;
      if (cfg.spec_augment) {
        for (const auto& ex : batch) {
          const auto& mel = clips[ex.clip].mel;
          auto sa = dsp::SpecAugmentConfig::defaults_for(mel.frames);
          sa.max_freq_width = std::min(sa.max_freq_width, mel.bands);
          augmented.push_back(dsp::spec_augment(mel, sa, rng));
        }
      }
      for (auto* p : params) p->zero_grad();
      Tape<T> tape;
      auto fwd = forward_batch(tape, model, clips, batch, mode, cfg.use_cl, false,
                               cfg.spec_augment ? &augmented : nullptr);
      const std::size_t step = summary.steps + 1;
      if (!std::isfinite(fwd.loss.total)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                           std::to_string(epoch) + ")");
      }
      tape.backward(fwd.total);
      clip_grad_norm<T>(params, cfg.clip_norm);
      adam.step(params, lr);
      summary.steps = step;
      epoch_total += fwd.loss.total;
      epoch_ce += fwd.loss.ce;
      ++batches;
      if (hooks.on_step) hooks.on_step(StepRecord{step, epoch, lr, fwd.loss});
      if (hooks.max_steps && step >= hooks.max_steps) {
        summary.epoch_total.push_back(epoch_total / static_cast<double>(batches));
        summary.epoch_ce.push_back(epoch_ce / static_cast<double>(batches));
        return summary;
      }
    }
    summary.epoch_total.push_back(epoch_total / static_cast<double>(batches));
    summary.epoch_ce.push_back(epoch_ce / static_cast<double>(batches));
    if (hooks.on_epoch) hooks.on_epoch(epoch, summary.epoch_total.back());
  }
  return summary;
}

template <typename T>
std::vector<double> predict_mismatch(model::CaptionModel<T>& model, const std::vector<ClipRecord>& clips,
                                     const std::vector<TrainingExample>& examples, std::size_t batch) {
  std::vector<double> out;
  const model::Mode eval{};
  for (std::size_t start = 0; start < examples.size(); start += batch) {
    const std::size_t stop = std::min(examples.size(), start + batch);
    Tape<T> tape;
    auto fwd = forward_batch(tape, model, clips,
                             std::span<const TrainingExample>(examples.data() + start, stop - start), eval,
                             true, true);
    out.insert(out.end(), fwd.p_mismatch.begin(), fwd.p_mismatch.end());
  }
  return out;
}

template <typename T>
double evaluate_ce(model::CaptionModel<T>& model, const std::vector<ClipRecord>& clips,
                   const std::vector<TrainingExample>& examples, std::size_t batch) {
  std::vector<TrainingExample> matched;
  for (const auto& e : examples)
    if (e.y == 0) matched.push_back(e);
  if (matched.empty()) throw ContractError("evaluate_ce: no matched pairs");
  double sum = 0.0;
  const model::Mode eval{};
  for (std::size_t start = 0; start < matched.size(); start += batch) {
    const std::size_t stop = std::min(matched.size(), start + batch);
    Tape<T> tape;
    auto fwd = forward_batch(tape, model, clips,
                             std::span<const TrainingExample>(matched.data() + start, stop - start), eval,
                             false);
    sum += fwd.loss.ce * static_cast<double>(stop - start);
  }
  return sum / static_cast<double>(matched.size());
}

LossCsv::LossCsv(std::ostream& out) : out_(out) { out_ << "step,epoch,lr,ce,cl,total\n"; }

void LossCsv::write(const StepRecord& r) {
  out_ << r.step << ',' << r.epoch << ',' << std::setprecision(9) << r.lr << ','
       << std::setprecision(17) << r.loss.ce << ',';
  if (r.loss.cl) out_ << *r.loss.cl;
  out_ << ',' << r.loss.total << '\n';
  out_.flush();
}

#define CL4AC_INSTANTIATE_TRAINING(T)                                                              \
  template Var ce_loss<T>(Tape<T>&, Var, std::span<const int>, std::span<const std::uint8_t>);     \
  template Var cl_loss<T>(Tape<T>&, Var, std::span<const int>);                                    \
  template Var total_loss<T>(Tape<T>&, std::optional<Var>, std::optional<Var>, std::span<const int>); \
  template double clip_grad_norm<T>(std::span<Parameter<T>* const>, double);                       \
  template class Adam<T>;                                                                          \
  template BatchForward<T> forward_batch<T>(Tape<T>&, model::CaptionModel<T>&,                     \
                                            const std::vector<ClipRecord>&,                        \
                                            std::span<const TrainingExample>, const model::Mode&,  \
                                            bool, bool, const std::vector<dsp::MelSpectrogram>*);  \
  template TrainSummary train<T>(model::CaptionModel<T>&, const std::vector<ClipRecord>&,          \
                                 const TrainConfig&, const TrainHooks&);                           \
  template std::vector<double> predict_mismatch<T>(model::CaptionModel<T>&,                        \
                                                   const std::vector<ClipRecord>&,                 \
                                                   const std::vector<TrainingExample>&, std::size_t); \
  template double evaluate_ce<T>(model::CaptionModel<T>&, const std::vector<ClipRecord>&,          \
                                 const std::vector<TrainingExample>&, std::size_t);

CL4AC_INSTANTIATE_TRAINING(float)
CL4AC_INSTANTIATE_TRAINING(double)

}  // namespace cl4ac::training
