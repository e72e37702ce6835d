// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dsp/mel.hpp"
#include "model/caption_model.hpp"
#include "numerics/ops.hpp"
#include "numerics/rng.hpp"
#include "text/vocab.hpp"

namespace cl4ac::training {

using nn::Parameter;
using nn::Tape;
using nn::Var;

// One audio clip with its features and every reference caption.
struct ClipRecord {
  std::string id;
  dsp::MelSpectrogram mel;
  std::vector<text::TokenSeq> captions;
};

// y = 0 for a matched pair, 1 for a mismatched one.
struct TrainingExample {
  std::size_t clip = 0;
  text::TokenSeq tokens;
  int y = 0;
};

struct TrainConfig {
  std::size_t batch = 16;
  std::size_t epochs = 30;
  double lr = 5e-4;
  std::size_t warmup_epochs = 5;
  std::size_t decay_every = 10;
  double decay_factor = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 1;
  double negative_ratio = 1.0;
  bool use_cl = true;
  bool spec_augment = true;

  void validate() const;
};

// Fisher-Yates with the portable integer draw.
template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

// One caption per clip, drawn uniformly from the clip's captions; y = 0.
std::vector<TrainingExample> sample_positives(const std::vector<ClipRecord>& clips, Rng& rng);

// Returns base plus floor(ratio * |base|) negatives, shuffled. A negative
// keeps a positive's clip and takes a caption drawn uniformly from the other
// clips, skipping any caption identical to one of the clip's own captions.
// Throws InputError when the base covers fewer than two clips or no valid
// caption exists.
std::vector<TrainingExample> make_negatives(const std::vector<ClipRecord>& clips,
                                            const std::vector<TrainingExample>& base, double ratio,
                                            Rng& rng);

// Mean of -log softmax(logits)[target] over positions with mask != 0.
// logits is [M, V]. Throws ContractError when every position is masked.
template <typename T>
Var ce_loss(Tape<T>& tape, Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask);

// Mean binary log loss of mismatch probabilities p against labels y.
// p outside (0, 1) is a DomainError.
template <typename T>
Var cl_loss(Tape<T>& tape, Var p, std::span<const int> y);

// mean_b((1 - y_b) * ce_b + cl_b). CE of y = 1 examples gets no value and no
// gradient.
template <typename T>
Var total_loss(Tape<T>& tape, std::optional<Var> ce, std::optional<Var> cl, std::span<const int> y);

// Scalar forms of the three objectives.
double cl_loss_value(double p, int y);
double total_loss_value(double ce, double cl, int y);

// lr * epoch / warmup during warmup, then decayed by decay_factor every
// decay_every epochs. Epochs are 1-based.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

// Scales all trainable gradients so their global L2 norm is at most
// max_norm. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm);

template <typename T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates every trainable parameter from its gradient.
  void step(std::span<Parameter<T>* const> params, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LossBreakdown {
  double ce = 0.0;   // mean token CE over y = 0 examples (0 if none)
  std::optional<double> cl;  // mean CL, absent when CL is disabled
  double total = 0.0;
  std::size_t tokens = 0;
};

template <typename T>
struct BatchForward {
  Var total;
  LossBreakdown loss;
  std::vector<double> p_mismatch;  // empty when CL is disabled
};

// Stacks examples into one batch: inputs are tokens[:-1], targets
// tokens[1:]. With skip_negative_ce the CE branch is not built for y = 1
// examples at all.
template <typename T>
BatchForward<T> forward_batch(Tape<T>& tape, model::CaptionModel<T>& model,
                              const std::vector<ClipRecord>& clips,
                              std::span<const TrainingExample> batch, const model::Mode& mode,
                              bool use_cl, bool skip_negative_ce = false,
                              const std::vector<dsp::MelSpectrogram>* mel_override = nullptr);

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::size_t epoch, double mean_total)> on_epoch;
  // Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
};

struct TrainSummary {
  std::vector<double> epoch_total;
  std::vector<double> epoch_ce;
  std::size_t steps = 0;
};

// Runs cfg.epochs epochs. Throws NumericError naming the step when a loss
// is not finite.
template <typename T>
TrainSummary train(model::CaptionModel<T>& model, const std::vector<ClipRecord>& clips,
                   const TrainConfig& cfg, const TrainHooks& hooks = {});

// Eval-mode mismatch probability per example.
template <typename T>
std::vector<double> predict_mismatch(model::CaptionModel<T>& model, const std::vector<ClipRecord>& clips,
                                     const std::vector<TrainingExample>& examples,
                                     std::size_t batch = 16);

// Eval-mode mean token CE over the y = 0 examples.
template <typename T>
double evaluate_ce(model::CaptionModel<T>& model, const std::vector<ClipRecord>& clips,
                   const std::vector<TrainingExample>& examples, std::size_t batch = 16);

// Writes "step,epoch,lr,ce,cl,total" rows; cl is empty when absent.
class LossCsv {
 public:
  explicit LossCsv(std::ostream& out);
  void write(const StepRecord& r);

 private:
  std::ostream& out_;
};

}  // namespace cl4ac::training
