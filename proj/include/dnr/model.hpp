#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dnr/layers.hpp"
#include "dnr/tensor.hpp"

namespace dnr {

enum class Stage2Preset { none, alexmini, vggmini };

std::string_view arch_name(Stage2Preset preset);
/// "3dr", "3dr+alexmini" or "3dr+vggmini".
Stage2Preset parse_arch(std::string_view name);

/// Model topology. to_string() is the canonical form stored in checkpoints,
/// e.g. "arch=3dr+alexmini branches=2 width=32 lambda1=0.5".
struct ModelConfig {
  Stage2Preset stage2 = Stage2Preset::alexmini;
  std::size_t branches = 2;
  std::size_t width = 32;
  double lambda1 = 0.5;

  void validate() const;
  /// Residual weights per branch: lambda1 for the first branch, the rest of
  /// the unit mass split evenly over the others.
  std::vector<double> branch_weights() const;
  std::string to_string() const;
  static ModelConfig parse(std::string_view text);
  bool operator==(const ModelConfig&) const = default;
};

/// One residual branch: 3D conv over (plane, y, x) with depth 3 and 5x5
/// spatial support spanning the color axis, then four 5x5 2D convs. Hidden
/// layers use tanh; the last layer is linear with 3 outputs.
/// Input (3, 5, H, W) -> residual (3, H, W).
template <class T>
class BranchNet {
 public:
  BranchNet(std::string prefix, std::size_t width);

  Tensor<T> infer(const Tensor<T>& preprocessed) const { return stack_.infer(preprocessed); }
  Tensor<T> forward(const Tensor<T>& preprocessed) { return stack_.forward(preprocessed); }
  Tensor<T> backward(const Tensor<T>& grad) { return stack_.backward(grad); }
  ParameterSet<T> parameters() { return stack_.parameters(); }
  void init_params(std::uint64_t seed) { stack_.init_params(seed); }
  void set_propagate_input_grad(bool on) { first_->set_propagate_input_grad(on); }

  Sequential<T>& stack() { return stack_; }

 private:
  Sequential<T> stack_;
  ConvLayer<T>* first_ = nullptr;
};

/// First stage: X_hat = sum_i w_i R_i(Y) + Y over the branch residuals of the
/// preprocessed noisy image Y.
template <class T>
class Stage1Model {
 public:
  explicit Stage1Model(const ModelConfig& config);

  /// sum_i weights[i] * residuals[i] + noisy.
  static Tensor<T> combine(std::span<const Tensor<T>> residuals, std::span<const double> weights,
                           const Tensor<T>& noisy);

  Tensor<T> infer(const Tensor<T>& noisy) const;
  Tensor<T> forward(const Tensor<T>& noisy);
  /// Gradient w.r.t. the noisy input (zero unless input gradients are on).
  Tensor<T> backward(const Tensor<T>& grad);
  ParameterSet<T> parameters();
  void init_params(std::uint64_t seed);
  void set_input_gradients(bool on);

  std::size_t branch_count() const { return branches_.size(); }
  BranchNet<T>& branch(std::size_t i) { return *branches_[i]; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<std::unique_ptr<BranchNet<T>>> branches_;
  std::vector<double> weights_;
  bool input_gradients_ = false;
  bool cached_ = false;
  Shape input_shape_;
};

/// Second stage: output = R(X_hat) + X_hat, where R is a deconv (x2) followed
/// by a conv stack with a single max-pool, cropped to the input size.
template <class T>
class Stage2Model {
 public:
  explicit Stage2Model(Stage2Preset preset);

  Tensor<T> infer(const Tensor<T>& x_hat) const;
  Tensor<T> forward(const Tensor<T>& x_hat);
  Tensor<T> backward(const Tensor<T>& grad);
  ParameterSet<T> parameters() { return stack_.parameters(); }
  /// Uniform fan-in init, except the final residual layer starts at zero so
  /// an untrained stage 2 is the identity.
  void init_params(std::uint64_t seed);

  Sequential<T>& stack() { return stack_; }
  ConvLayer<T>& final_layer() { return *final_; }

 private:
  static Tensor<T> fit_to(const Tensor<T>& r, const Shape& shape);
  static Tensor<T> unfit(const Tensor<T>& g, const Shape& full);

  Sequential<T> stack_;
  ConvLayer<T>* final_ = nullptr;
  bool cached_ = false;
  Shape residual_shape_;
};

template <class T>
class TwoStageModel {
 public:
  explicit TwoStageModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  Stage1Model<T>& stage1() { return stage1_; }
  const Stage1Model<T>& stage1() const { return stage1_; }
  bool has_stage2() const { return stage2_.has_value(); }
  Stage2Model<T>& stage2();
  const Stage2Model<T>& stage2() const;

  /// While frozen, backward() stops at the stage-1 output so stage-1
  /// parameters receive no gradient.
  void set_stage1_frozen(bool frozen) { frozen_ = frozen; }
  bool stage1_frozen() const { return frozen_; }

  Tensor<T> infer(const Tensor<T>& noisy) const;
  Tensor<T> forward(const Tensor<T>& noisy);
  Tensor<T> backward(const Tensor<T>& grad);
  /// Every parameter, stage 1 first.
  ParameterSet<T> parameters();
  ParameterSet<T> trainable_parameters();
  void init_params(std::uint64_t seed);
  void set_input_gradients(bool on);

  /// Parameters as named float tensors (checkpoint order).
  std::vector<std::pair<std::string, Tensor<float>>> export_tensors();
  /// Load parameters by name. Missing names or shape mismatches raise a
  /// ConfigError that quotes this model's config string.
  void import_tensors(const std::vector<std::pair<std::string, Tensor<float>>>& tensors);

 private:
  ModelConfig config_;
  Stage1Model<T> stage1_;
  std::optional<Stage2Model<T>> stage2_;
  bool frozen_ = false;
  Tensor<T> stage1_out_;
};

/// preprocess -> stage 1 -> optional stage 2, no clamping.
template <class T>
Tensor<T> denoise(const TwoStageModel<T>& model, const Tensor<T>& noisy);

/// Mean of the model outputs over the four 90-degree rotations of the input,
/// each rotated back before averaging.
template <class T>
Tensor<T> enhanced_denoise(const TwoStageModel<T>& model, const Tensor<T>& noisy);

}  // namespace dnr
