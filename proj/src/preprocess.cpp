#include "dnr/preprocess.hpp"

#include <algorithm>

namespace dnr {

template <class T>
Tensor<T> HighPassBank::kernel(Stencil s) {
  const auto& c = coefficients[static_cast<std::size_t>(s)];
  return Tensor<T>(Shape{3, 3}, std::vector<T>(c.begin(), c.end()));
}

template <class T>
std::array<Tensor<T>, 4> apply_highpass_bank(const Tensor<T>& channel) {
  if (channel.rank() != 2) {
    throw DimensionError("apply_highpass_bank: expected a rank-2 channel, got " +
                         shape_string(channel.shape()));
  }
  return {correlate_same(channel, HighPassBank::kernel<T>(Stencil::d_yy)),
          correlate_same(channel, HighPassBank::kernel<T>(Stencil::d_y)),
          correlate_same(channel, HighPassBank::kernel<T>(Stencil::d_x)),
          correlate_same(channel, HighPassBank::kernel<T>(Stencil::d_xx))};
}

template <class T>
Tensor<T> build_input(const Tensor<T>& noisy_image) {
  if (noisy_image.rank() != 3 || noisy_image.extent(0) != 3) {
    throw ShapeError("build_input: expected a (3,H,W) image, got " + shape_string(noisy_image.shape()));
  }
  const std::size_t h = noisy_image.extent(1), w = noisy_image.extent(2), hw = h * w;
  Tensor<T> out(Shape{3, kInputPlanes, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    const Tensor<T> channel = slice(noisy_image, 0, c, 1).reshape({h, w});
    T* dst = out.data().data() + c * kInputPlanes * hw;
    std::copy(channel.data().begin(), channel.data().end(), dst);
    const auto responses = apply_highpass_bank(channel);
    for (std::size_t p = 0; p < responses.size(); ++p) {
      std::copy(responses[p].data().begin(), responses[p].data().end(), dst + (p + 1) * hw);
    }
  }
  return out;
}

template <class T>
Tensor<T> build_input_adjoint(const Tensor<T>& grad) {
  if (grad.rank() != 4 || grad.extent(0) != 3 || grad.extent(1) != kInputPlanes) {
    throw ShapeError("build_input_adjoint: expected (3,5,H,W), got " + shape_string(grad.shape()));
  }
  const std::size_t h = grad.extent(2), w = grad.extent(3), hw = h * w;
  Tensor<T> out(Shape{3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    const T* src = grad.data().data() + c * kInputPlanes * hw;
    T* dst = out.data().data() + c * hw;
    std::copy(src, src + hw, dst);
    for (std::size_t p = 0; p < HighPassBank::count; ++p) {
      const Tensor<T> plane(Shape{h, w}, std::vector<T>(src + (p + 1) * hw, src + (p + 2) * hw));
      const Tensor<T> back =
          correlate_same_adjoint(plane, HighPassBank::kernel<T>(static_cast<Stencil>(p)));
      for (std::size_t i = 0; i < hw; ++i) dst[i] += back[i];
    }
  }
  return out;
}

#define DNR_PREPROCESS(T)                                                      \
  template Tensor<T> HighPassBank::kernel<T>(Stencil);                         \
  template std::array<Tensor<T>, 4> apply_highpass_bank(const Tensor<T>&);     \
  template Tensor<T> build_input(const Tensor<T>&);                            \
  template Tensor<T> build_input_adjoint(const Tensor<T>&);

DNR_PREPROCESS(float)
DNR_PREPROCESS(double)

}  // namespace dnr
