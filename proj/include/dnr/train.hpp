#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dnr/checkpoint.hpp"
#include "dnr/data.hpp"
#include "dnr/model.hpp"
#include "dnr/objective.hpp"
#include "dnr/optim.hpp"

namespace dnr {

struct TrainConfig {
  std::size_t crop = 180;
  std::size_t batch = 10;
  std::uint64_t iters1 = 200000;
  std::uint64_t iters2 = 90000;
  double lr1 = 0.005;
  double lr2 = 0.001;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 100;
  MixedDerivativeLossConfig stage2_loss;

  void validate() const;
};

/// Clean held-out images with noisy copies drawn once from a fixed seed.
template <class T>
struct ValidationSet {
  std::vector<Tensor<T>> clean;
  std::vector<Tensor<T>> noisy;
  std::vector<double> sigmas;

  static ValidationSet make(const std::vector<Tensor<float>>& clean, const NoiseSpec& noise, std::uint64_t seed);
  bool empty() const { return clean.empty(); }
};

struct LogEntry {
  int stage = 1;
  std::uint64_t iter = 0;  // 1-based within the stage
  double loss = 0.0;
  double val_psnr = 0.0;
  std::vector<double> sigmas;
};

/// "iter=<n> loss=<f> val_psnr=<f>", plus " sigma=<s1>,<s2>,..." when
/// with_sigmas is set.
std::string format_log_line(const LogEntry& entry, bool with_sigmas);

/// Two-stage training driver. Stage 1 minimises psnr_loss of the stage-1
/// output; stage 2 freezes stage 1 and minimises mixed_derivative_loss of
/// the final output error. Minibatch k of each stage depends only on
/// (seed, stage, k).
template <class T>
class Trainer {
 public:
  Trainer(TwoStageModel<T>& model, const std::vector<Tensor<float>>& corpus, NoiseSpec noise, TrainConfig config);

  void set_validation(ValidationSet<T> validation) { validation_ = std::move(validation); }

  /// One optimizer step on minibatch `index`; returns the mean batch loss.
  /// Throws NumericError (parameters untouched) if the loss is not finite.
  double step_stage1(std::uint64_t index, std::vector<double>* sigmas = nullptr);
  double step_stage2(std::uint64_t index, std::vector<double>* sigmas = nullptr);

  /// Mean loss of minibatch `index` without updating anything.
  double eval_stage1(std::uint64_t index);
  double eval_stage2(std::uint64_t index);

  /// Runs the remaining iterations of both stages, calling on_log every
  /// log_every iterations and at the last iteration of each stage.
  ///
  /// With a validation set, each stage ends holding the parameters of its best
  /// validation point (checked every log_every iterations and at the end); the
  /// live iterate is kept so that a resumed run with more iterations continues
  /// exactly where the uninterrupted run would.
  void run(const std::function<void(const LogEntry&)>& on_log);

  /// Best validation PSNR seen in `stage` (1 or 2), -inf before any check.
  double best_validation_psnr(int stage) const { return select_[stage - 1].best_val; }

  /// Mean PSNR of the validation set through stage 1 only (stage = 1) or the
  /// full model (stage = 2).
  double validation_psnr(int stage) const;

  std::uint64_t done1() const { return done1_; }
  std::uint64_t done2() const { return done2_; }
  const TrainConfig& config() const { return config_; }

  /// Model parameters, optimizer moments, progress counters and the
  /// best/live snapshots behind validation selection.
  Checkpoint make_checkpoint() const;
  /// Call after set_validation: the best score is recomputed on restore.
  void restore(const Checkpoint& ckpt);

 private:
  double run_batch(int stage, std::uint64_t index, bool update, std::vector<double>* sigmas);
  ParameterSet<T> stage_parameters(int stage) const;

  struct Selection {
    std::vector<Tensor<T>> best;  // parameters at the best validation point
    std::vector<Tensor<T>> live;  // the iterate, once the stage has ended on `best`
    double best_val = -std::numeric_limits<double>::infinity();
  };

  TwoStageModel<T>& model_;
  NoiseSpec noise_;
  TrainConfig config_;
  BatchStream stream1_, stream2_;
  Adam<T> adam1_, adam2_;
  ValidationSet<T> validation_;
  std::uint64_t done1_ = 0, done2_ = 0;
  Selection select_[2];
};

}  // namespace dnr
