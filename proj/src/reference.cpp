#include <cmath>

#include "dnr/kernels.hpp"

namespace dnr::reference {

namespace {

// Input offset of tap `kflat` for output position `oflat`, or -1 in padding.
long tap_offset(const ConvGeometry& g, std::size_t oflat, std::size_t kflat) {
  const std::size_t n = g.spatial_rank();
  long off = 0;
  long scale = 1;
  for (std::size_t ax = n; ax-- > 0;) {
    const std::size_t o = oflat % g.out_extent[ax];
    const std::size_t k = kflat % g.kernel[ax];
    oflat /= g.out_extent[ax];
    kflat /= g.kernel[ax];
    const long c = static_cast<long>(o * g.stride[ax] + k) - static_cast<long>(g.padding[ax].before);
    if (c < 0 || c >= static_cast<long>(g.in_extent[ax])) return -1;
    off += c * scale;
    scale *= static_cast<long>(g.in_extent[ax]);
  }
  return off;
}

}  // namespace

template <class T>
void conv_forward(const T* input, const T* weight, const T* bias, std::size_t filters,
                  const ConvGeometry& g, T* output) {
  const std::size_t ks = g.kernel_size(), ins = g.in_size(), outs = g.out_size();
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t o = 0; o < outs; ++o) {
      T acc{0};
      for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t k = 0; k < ks; ++k) {
          const long i = tap_offset(g, o, k);
          if (i >= 0) acc += weight[(f * g.channels + c) * ks + k] * input[c * ins + static_cast<std::size_t>(i)];
        }
      }
      output[f * outs + o] = acc + (bias ? bias[f] : T{0});
    }
  }
}

template <class T>
void conv_backward(const T* input, const T* grad_output, const T* weight, std::size_t filters,
                   const ConvGeometry& g, T* weight_grad, T* bias_grad, T* input_grad) {
  const std::size_t ks = g.kernel_size(), ins = g.in_size(), outs = g.out_size();
  if (input_grad) {
    for (std::size_t i = 0; i < g.channels * ins; ++i) input_grad[i] = T{0};
  }
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t o = 0; o < outs; ++o) {
      const T go = grad_output[f * outs + o];
      if (bias_grad) bias_grad[f] += go;
      for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t k = 0; k < ks; ++k) {
          const long i = tap_offset(g, o, k);
          if (i < 0) continue;
          const std::size_t w = (f * g.channels + c) * ks + k;
          const std::size_t x = c * ins + static_cast<std::size_t>(i);
          if (weight_grad) weight_grad[w] += go * input[x];
          if (input_grad) input_grad[x] += go * weight[w];
        }
      }
    }
  }
}

template <class T>
void tanh_forward(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

#define DNR_REFERENCE(T)                                                                           \
  template void conv_forward(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*); \
  template void conv_backward(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*, \
                              T*, T*);                                                             \
  template void tanh_forward(const T*, T*, std::size_t);

DNR_REFERENCE(float)
DNR_REFERENCE(double)

}  // namespace dnr::reference
