#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dnr/kernels.hpp"
#include "dnr/tensor.hpp"

namespace dnr {

/// A learnable tensor together with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { std::fill(grad.data().begin(), grad.data().end(), T{0}); }
};

/// Ordered view of named parameters. Names are unique.
template <class T>
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::vector<Parameter<T>*> items);

  void add(Parameter<T>* p);
  void append(const ParameterSet& other);
  Parameter<T>* find(std::string_view name) const;
  void zero_grad();
  std::size_t size() const { return items_.size(); }
  std::size_t element_count() const;

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  Parameter<T>& operator[](std::size_t i) const { return *items_[i]; }

 private:
  std::vector<Parameter<T>*> items_;
};

/// Differentiable layer. forward() caches what backward() needs; infer()
/// computes the same output without touching any state.
template <class T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string_view kind() const = 0;

  virtual Tensor<T> infer(const Tensor<T>& input) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& input) = 0;
  /// Returns the gradient w.r.t. the last forward input and accumulates
  /// parameter gradients.
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;

  virtual ParameterSet<T> parameters() { return {}; }
  /// Weights ~ U(-s, s) with s = sqrt(1 / fan_in); biases zero.
  virtual void init_params(std::uint64_t /*seed*/) {}

 protected:
  [[noreturn]] void fail_shape(const std::string& what, const Shape& got) const;
  void require_forward(bool cached) const;

 private:
  std::string name_;
};

/// Multi-channel n-d correlation. Input (C, s_1..s_n), weight (F, C, k_1..k_n),
/// bias (F), output (F, o_1..o_n).
template <class T>
class ConvLayer : public Layer<T> {
 public:
  ConvLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
            std::vector<std::size_t> kernel, std::vector<Padding> padding,
            std::vector<std::size_t> stride = {});

  /// Same-size 2D convolution with a square odd kernel.
  static std::unique_ptr<ConvLayer> same2d(std::string name, std::size_t in_channels,
                                           std::size_t out_channels, std::size_t k);

  std::string_view kind() const override { return kernel_.size() == 3 ? "conv3d" : "conv2d"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  ParameterSet<T> parameters() override { return ParameterSet<T>({&weight_, &bias_}); }
  void init_params(std::uint64_t seed) override;

  /// Skip the input gradient (first layer of a stack).
  void set_propagate_input_grad(bool on) { propagate_input_grad_ = on; }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  std::size_t fan_in() const;

 private:
  ConvGeometry geometry(const Shape& input) const;
  Tensor<T> run(const Tensor<T>& input, const ConvGeometry& g) const;

  std::size_t in_channels_, out_channels_;
  std::vector<std::size_t> kernel_, stride_;
  std::vector<Padding> padding_;
  Parameter<T> weight_, bias_;
  bool propagate_input_grad_ = true;

  bool cached_ = false;
  ConvGeometry geom_;
  Tensor<T> input_;
};

/// 2D transposed convolution (adjoint of a strided conv). Input (C_in, H, W),
/// weight (C_in, C_out, k, k), output (C_out, stride*H, stride*W). Padding
/// (k - stride) is split with the smaller half before.
template <class T>
class TransposedConvLayer : public Layer<T> {
 public:
  TransposedConvLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
                      std::size_t k, std::size_t stride);

  std::string_view kind() const override { return "deconv2d"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  ParameterSet<T> parameters() override { return ParameterSet<T>({&weight_, &bias_}); }
  void init_params(std::uint64_t seed) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  /// Geometry of the forward conv whose adjoint this layer computes, for an
  /// input of spatial size (h, w).
  ConvGeometry adjoint_geometry(std::size_t h, std::size_t w) const;

 private:
  Tensor<T> run(const Tensor<T>& input) const;

  std::size_t in_channels_, out_channels_, k_, stride_;
  Parameter<T> weight_, bias_;
  bool cached_ = false;
  Tensor<T> input_;
};

/// 2D max-pool over the last two axes of (C, H, W) with ceil-mode output
/// size ceil((H - k) / s) + 1; windows are clipped at the border. Backward
/// routes each gradient to the first maximum in scan order.
template <class T>
class MaxPoolLayer : public Layer<T> {
 public:
  MaxPoolLayer(std::string name, std::size_t window, std::size_t stride);

  std::string_view kind() const override { return "maxpool"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;

  static std::size_t output_extent(std::size_t n, std::size_t window, std::size_t stride);

 private:
  Tensor<T> run(const Tensor<T>& input, std::vector<std::size_t>* argmax) const;

  std::size_t window_, stride_;
  bool cached_ = false;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <class T>
class TanhLayer : public Layer<T> {
 public:
  explicit TanhLayer(std::string name) : Layer<T>(std::move(name)) {}

  std::string_view kind() const override { return "tanh"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;

 private:
  bool cached_ = false;
  Tensor<T> output_;
};

/// Adds a fixed constant to one slice along axis 1 of a (C, P, ...) input.
/// No parameters; the gradient passes through unchanged.
template <class T>
class PlaneOffsetLayer : public Layer<T> {
 public:
  PlaneOffsetLayer(std::string name, std::size_t plane, T offset)
      : Layer<T>(std::move(name)), plane_(plane), offset_(offset) {}

  std::string_view kind() const override { return "offset"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;

 private:
  std::size_t plane_;
  T offset_;
  bool cached_ = false;
  Shape input_shape_;
};

/// Merges the first two axes: (A, B, ...) -> (A*B, ...).
template <class T>
class MergeAxesLayer : public Layer<T> {
 public:
  explicit MergeAxesLayer(std::string name) : Layer<T>(std::move(name)) {}

  std::string_view kind() const override { return "merge"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;

 private:
  bool cached_ = false;
  Shape input_shape_;
};

/// Ordered stack of layers.
template <class T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  std::string_view kind() const override { return "sequential"; }
  Tensor<T> infer(const Tensor<T>& input) const override;
  Tensor<T> forward(const Tensor<T>& input) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  ParameterSet<T> parameters() override;
  void init_params(std::uint64_t seed) override;

  std::size_t depth() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Uniform(-s, s) fill, s = sqrt(1 / fan_in), deterministic per seed.
template <class T>
void init_uniform_fan_in(Tensor<T>& weight, std::size_t fan_in, std::uint64_t seed);

}  // namespace dnr
