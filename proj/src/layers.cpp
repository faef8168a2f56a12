#include "dnr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "dnr/rng.hpp"

namespace dnr {

// ---------------------------------------------------------------------------
// ParameterSet

template <class T>
ParameterSet<T>::ParameterSet(std::vector<Parameter<T>*> items) {
  for (auto* p : items) add(p);
}

template <class T>
void ParameterSet<T>::add(Parameter<T>* p) {
  if (find(p->name)) throw ConfigError("duplicate parameter name '" + p->name + "'");
  if (p->grad.shape() != p->value.shape()) {
    throw DimensionError("parameter '" + p->name + "': gradient shape differs from value shape");
  }
  items_.push_back(p);
}

template <class T>
void ParameterSet<T>::append(const ParameterSet& other) {
  for (auto* p : other) add(p);
}

template <class T>
Parameter<T>* ParameterSet<T>::find(std::string_view name) const {
  for (auto* p : items_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto* p : items_) p->zero_grad();
}

template <class T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (auto* p : items_) n += p->value.size();
  return n;
}

template <class T>
void init_uniform_fan_in(Tensor<T>& weight, std::size_t fan_in, std::uint64_t seed) {
  const double s = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Rng rng(seed);
  for (auto& v : weight.data()) v = static_cast<T>(rng.uniform(-s, s));
}

// ---------------------------------------------------------------------------
// Layer

template <class T>
void Layer<T>::fail_shape(const std::string& what, const Shape& got) const {
  throw DimensionError("layer '" + name_ + "' (" + std::string(kind()) + "): " + what + ", got input " +
                       shape_string(got));
}

template <class T>
void Layer<T>::require_forward(bool cached) const {
  if (!cached) throw StateError("layer '" + name_ + "': backward called before forward");
}

// ---------------------------------------------------------------------------
// ConvLayer

namespace {

Shape conv_weight_shape(std::size_t out, std::size_t in, const std::vector<std::size_t>& k) {
  Shape s{out, in};
  s.insert(s.end(), k.begin(), k.end());
  return s;
}

}  // namespace

template <class T>
ConvLayer<T>::ConvLayer(std::string name, std::size_t in_channels, std::size_t out_channels,
                        std::vector<std::size_t> kernel, std::vector<Padding> padding,
                        std::vector<std::size_t> stride)
    : Layer<T>(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(std::move(kernel)),
      stride_(std::move(stride)),
      padding_(std::move(padding)),
      weight_(this->name() + ".weight", conv_weight_shape(out_channels, in_channels, kernel_)),
      bias_(this->name() + ".bias", Shape{out_channels}) {
  if (stride_.empty()) stride_.assign(kernel_.size(), 1);
  if (kernel_.empty() || padding_.size() != kernel_.size() || stride_.size() != kernel_.size()) {
    throw ConfigError("layer '" + this->name() + "': kernel, padding and stride ranks differ");
  }
}

template <class T>
std::unique_ptr<ConvLayer<T>> ConvLayer<T>::same2d(std::string name, std::size_t in_channels,
                                                   std::size_t out_channels, std::size_t k) {
  const Padding p{k / 2, k / 2};
  return std::make_unique<ConvLayer<T>>(std::move(name), in_channels, out_channels,
                                        std::vector<std::size_t>{k, k}, std::vector<Padding>{p, p});
}

template <class T>
std::size_t ConvLayer<T>::fan_in() const {
  return in_channels_ * std::accumulate(kernel_.begin(), kernel_.end(), std::size_t{1}, std::multiplies<>());
}

template <class T>
void ConvLayer<T>::init_params(std::uint64_t seed) {
  init_uniform_fan_in(weight_.value, fan_in(), seed);
  std::fill(bias_.value.data().begin(), bias_.value.data().end(), T{0});
}

template <class T>
ConvGeometry ConvLayer<T>::geometry(const Shape& input) const {
  if (input.size() != kernel_.size() + 1 || input[0] != in_channels_) {
    this->fail_shape("expected (" + std::to_string(in_channels_) + ", " +
                         std::to_string(kernel_.size()) + " spatial axes)",
                     input);
  }
  try {
    return ConvGeometry::make(in_channels_, Shape(input.begin() + 1, input.end()), kernel_, stride_,
                              padding_);
  } catch (const DimensionError& e) {
    this->fail_shape(e.what(), input);
  }
}

template <class T>
Tensor<T> ConvLayer<T>::run(const Tensor<T>& input, const ConvGeometry& g) const {
  Shape out_shape{out_channels_};
  out_shape.insert(out_shape.end(), g.out_extent.begin(), g.out_extent.end());
  Tensor<T> out(out_shape);
  kernels::conv_forward(input.data().data(), weight_.value.data().data(), bias_.value.data().data(),
                        out_channels_, g, out.data().data());
  return out;
}

template <class T>
Tensor<T> ConvLayer<T>::infer(const Tensor<T>& input) const {
  return run(input, geometry(input.shape()));
}

template <class T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& input) {
  geom_ = geometry(input.shape());
  Tensor<T> out = run(input, geom_);
  input_ = input;
  cached_ = true;
  return out;
}

template <class T>
Tensor<T> ConvLayer<T>::backward(const Tensor<T>& grad_output) {
  this->require_forward(cached_);
  Shape expect{out_channels_};
  expect.insert(expect.end(), geom_.out_extent.begin(), geom_.out_extent.end());
  require_same_shape(grad_output.shape(), expect, ("backward of '" + this->name() + "'").c_str());
  Tensor<T> grad_input(input_.shape());
  kernels::conv_backward(input_.data().data(), grad_output.data().data(), weight_.value.data().data(), out_channels_,
                         geom_, weight_.grad.data().data(), bias_.grad.data().data(),
                         propagate_input_grad_ ? grad_input.data().data() : nullptr);
  return grad_input;
}

// ---------------------------------------------------------------------------
// TransposedConvLayer

template <class T>
TransposedConvLayer<T>::TransposedConvLayer(std::string name, std::size_t in_channels,
                                            std::size_t out_channels, std::size_t k, std::size_t stride)
    : Layer<T>(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      k_(k),
      stride_(stride),
      weight_(this->name() + ".weight", Shape{in_channels, out_channels, k, k}),
      bias_(this->name() + ".bias", Shape{out_channels}) {
  if (stride == 0 || k < stride) {
    throw ConfigError("layer '" + this->name() + "': transposed conv needs kernel >= stride > 0");
  }
}

template <class T>
void TransposedConvLayer<T>::init_params(std::uint64_t seed) {
  // Each output pixel receives in_channels * (k / stride)^2 taps.
  const std::size_t taps = std::max<std::size_t>(1, (k_ * k_) / (stride_ * stride_));
  init_uniform_fan_in(weight_.value, in_channels_ * taps, seed);
  std::fill(bias_.value.data().begin(), bias_.value.data().end(), T{0});
}

template <class T>
ConvGeometry TransposedConvLayer<T>::adjoint_geometry(std::size_t h, std::size_t w) const {
  const std::size_t total = k_ - stride_;
  const Padding p{total / 2, total - total / 2};
  return ConvGeometry::make(out_channels_, {stride_ * h, stride_ * w}, {k_, k_}, {stride_, stride_},
                            {p, p});
}

template <class T>
Tensor<T> TransposedConvLayer<T>::run(const Tensor<T>& input) const {
  if (input.rank() != 3 || input.extent(0) != in_channels_) {
    this->fail_shape("expected (" + std::to_string(in_channels_) + ",H,W)", input.shape());
  }
  const std::size_t h = input.extent(1), w = input.extent(2);
  const ConvGeometry g = adjoint_geometry(h, w);
  const std::size_t rows = g.patch_rows(), hw = h * w;
  std::vector<T> cols(rows * hw);
  kernels::gemm<T>(true, false, rows, hw, in_channels_, T{1}, weight_.value.data().data(),
                   input.data().data(), T{0}, cols.data());
  Tensor<T> out(Shape{out_channels_, stride_ * h, stride_ * w});
  kernels::col2im(cols.data(), g, out.data().data());
  const std::size_t plane = stride_ * h * stride_ * w;
  for (std::size_t c = 0; c < out_channels_; ++c) {
    T* row = out.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) row[i] += bias_.value[c];
  }
  return out;
}

template <class T>
Tensor<T> TransposedConvLayer<T>::infer(const Tensor<T>& input) const {
  return run(input);
}

template <class T>
Tensor<T> TransposedConvLayer<T>::forward(const Tensor<T>& input) {
  Tensor<T> out = run(input);
  input_ = input;
  cached_ = true;
  return out;
}

template <class T>
Tensor<T> TransposedConvLayer<T>::backward(const Tensor<T>& grad_output) {
  this->require_forward(cached_);
  const std::size_t h = input_.extent(1), w = input_.extent(2), hw = h * w;
  require_same_shape(grad_output.shape(), Shape{out_channels_, stride_ * h, stride_ * w},
                     ("backward of '" + this->name() + "'").c_str());
  const ConvGeometry g = adjoint_geometry(h, w);
  const std::size_t rows = g.patch_rows();
  std::vector<T> dcols(rows * hw);
  kernels::im2col(grad_output.data().data(), g, dcols.data());

  Tensor<T> grad_input(input_.shape());
  kernels::gemm<T>(false, false, in_channels_, hw, rows, T{1}, weight_.value.data().data(), dcols.data(),
                   T{0}, grad_input.data().data());
  kernels::gemm<T>(false, true, in_channels_, rows, hw, T{1}, input_.data().data(), dcols.data(), T{1},
                   weight_.grad.data().data());
  const std::size_t plane = grad_output.size() / out_channels_;
  for (std::size_t c = 0; c < out_channels_; ++c) {
    T acc{0};
    const T* row = grad_output.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += row[i];
    bias_.grad[c] += acc;
  }
  return grad_input;
}

// ---------------------------------------------------------------------------
// MaxPoolLayer

template <class T>
MaxPoolLayer<T>::MaxPoolLayer(std::string name, std::size_t window, std::size_t stride)
    : Layer<T>(std::move(name)), window_(window), stride_(stride) {
  if (window == 0 || stride == 0 || stride > window) {
    throw ConfigError("layer '" + this->name() + "': max-pool needs window >= stride > 0");
  }
}

template <class T>
std::size_t MaxPoolLayer<T>::output_extent(std::size_t n, std::size_t window, std::size_t stride) {
  if (n <= window) return 1;
  return (n - window + stride - 1) / stride + 1;
}

template <class T>
Tensor<T> MaxPoolLayer<T>::run(const Tensor<T>& input, std::vector<std::size_t>* argmax) const {
  if (input.rank() != 3) this->fail_shape("expected (C,H,W)", input.shape());
  const std::size_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  const std::size_t oh = output_extent(h, window_, stride_), ow = output_extent(w, window_, stride_);
  Tensor<T> out(Shape{c, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  const T* src = input.data().data();
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::size_t y0 = oy * stride_, y1 = std::min(h, y0 + window_);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t x0 = ox * stride_, x1 = std::min(w, x0 + window_);
        std::size_t best = (ch * h + y0) * w + x0;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) {
            const std::size_t i = (ch * h + y) * w + x;
            if (src[i] > src[best]) best = i;
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = src[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> MaxPoolLayer<T>::infer(const Tensor<T>& input) const {
  return run(input, nullptr);
}

template <class T>
Tensor<T> MaxPoolLayer<T>::forward(const Tensor<T>& input) {
  Tensor<T> out = run(input, &argmax_);
  input_shape_ = input.shape();
  cached_ = true;
  return out;
}

template <class T>
Tensor<T> MaxPoolLayer<T>::backward(const Tensor<T>& grad_output) {
  this->require_forward(cached_);
  if (grad_output.size() != argmax_.size()) {
    throw DimensionError("backward of '" + this->name() + "': gradient shape " +
                         shape_string(grad_output.shape()) + " does not match pooled output");
  }
  Tensor<T> grad_input(input_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) grad_input[argmax_[o]] += grad_output[o];
  return grad_input;
}

// ---------------------------------------------------------------------------
// TanhLayer / MergeAxesLayer

template <class T>
Tensor<T> TanhLayer<T>::infer(const Tensor<T>& input) const {
  Tensor<T> out(input.shape());
  kernels::tanh_forward(input.data().data(), out.data().data(), input.size());
  return out;
}

template <class T>
Tensor<T> TanhLayer<T>::forward(const Tensor<T>& input) {
  output_ = infer(input);
  cached_ = true;
  return output_;
}

template <class T>
Tensor<T> TanhLayer<T>::backward(const Tensor<T>& grad_output) {
  this->require_forward(cached_);
  require_same_shape(grad_output.shape(), output_.shape(), ("backward of '" + this->name() + "'").c_str());
  Tensor<T> grad_input(output_.shape());
  kernels::tanh_backward(output_.data().data(), grad_output.data().data(), grad_input.data().data(),
                         output_.size());
  return grad_input;
}

template <class T>
Tensor<T> PlaneOffsetLayer<T>::infer(const Tensor<T>& input) const {
  if (input.rank() < 2 || input.extent(1) <= plane_) {
    this->fail_shape("expected rank >= 2 with more than " + std::to_string(plane_) + " planes", input.shape());
  }
  Tensor<T> out = input;
  const std::size_t planes = input.extent(1);
  const std::size_t inner = input.size() / (input.extent(0) * planes);
  auto d = out.data();
  for (std::size_t c = 0; c < input.extent(0); ++c) {
    T* p = d.data() + (c * planes + plane_) * inner;
    for (std::size_t i = 0; i < inner; ++i) p[i] += offset_;
  }
  return out;
}

template <class T>
Tensor<T> PlaneOffsetLayer<T>::forward(const Tensor<T>& input) {
  Tensor<T> out = infer(input);
  input_shape_ = input.shape();
  cached_ = true;
  return out;
}

template <class T>
Tensor<T> PlaneOffsetLayer<T>::backward(const Tensor<T>& grad_output) {
  this->require_forward(cached_);
  if (grad_output.shape() != input_shape_) this->fail_shape("gradient shape mismatch", grad_output.shape());
  return grad_output;
}

template <class T>
Tensor<T> MergeAxesLayer<T>::infer(const Tensor<T>& input) const {
  if (input.rank() < 2) this->fail_shape("expected rank >= 2", input.shape());
  Shape s{input.extent(0) * input.extent(1)};
  s.insert(s.end(), input.shape().begin() + 2, input.shape().end());
  return input.reshape(std::move(s));
}

template <class T>
Tensor<T> MergeAxesLayer<T>::forward(const Tensor<T>& input) {
  input_shape_ = input.shape();
  cached_ = true;
  return infer(input);
}

template <class T>
Tensor<T> MergeAxesLayer<T>::backward(const Tensor<T>& grad_output) {
  this->require_forward(cached_);
  if (grad_output.size() != shape_size(input_shape_)) {
    throw DimensionError("backward of '" + this->name() + "': element count mismatch");
  }
  return grad_output.reshape(input_shape_);
}

// ---------------------------------------------------------------------------
// Sequential

template <class T>
Tensor<T> Sequential<T>::infer(const Tensor<T>& input) const {
  Tensor<T> x = input;
  for (const auto& l : layers_) x = l->infer(x);
  return x;
}

template <class T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& input) {
  Tensor<T> x = input;
  for (auto& l : layers_) x = l->forward(x);
  return x;
}

template <class T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_output) {
  Tensor<T> g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <class T>
ParameterSet<T> Sequential<T>::parameters() {
  ParameterSet<T> all;
  for (auto& l : layers_) all.append(l->parameters());
  return all;
}

template <class T>
void Sequential<T>::init_params(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->init_params(derive_seed(seed, {i}));
}

#define DNR_LAYERS(T)                                                          \
  template class ParameterSet<T>;                                              \
  template class Layer<T>;                                                     \
  template class ConvLayer<T>;                                                 \
  template class TransposedConvLayer<T>;                                       \
  template class MaxPoolLayer<T>;                                              \
  template class TanhLayer<T>;                                                 \
  template class PlaneOffsetLayer<T>;                                          \
  template class MergeAxesLayer<T>;                                            \
  template class Sequential<T>;                                                \
  template void init_uniform_fan_in(Tensor<T>&, std::size_t, std::uint64_t);

DNR_LAYERS(float)
DNR_LAYERS(double)

}  // namespace dnr
