#include "dnr/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace dnr {

ConvGeometry ConvGeometry::make(std::size_t channels, std::vector<std::size_t> in_extent,
                                std::vector<std::size_t> kernel, std::vector<std::size_t> stride,
                                std::vector<Padding> padding) {
  const std::size_t n = in_extent.size();
  if (n == 0) throw DimensionError("conv geometry: need at least one spatial axis");
  if (n > 8) throw DimensionError("conv geometry: at most 8 spatial axes, got " + std::to_string(n));
  if (kernel.size() != n || stride.size() != n || padding.size() != n) {
    throw DimensionError("conv geometry: kernel/stride/padding rank must equal spatial rank " +
                         std::to_string(n));
  }
  ConvGeometry g;
  g.channels = channels;
  g.out_extent.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t padded = in_extent[i] + padding[i].before + padding[i].after;
    if (stride[i] == 0) throw DimensionError("conv geometry: stride must be positive");
    if (kernel[i] == 0 || kernel[i] > padded) {
      throw DimensionError("conv geometry: kernel extent " + std::to_string(kernel[i]) +
                           " exceeds padded input extent " + std::to_string(padded) + " on axis " +
                           std::to_string(i));
    }
    g.out_extent[i] = (padded - kernel[i]) / stride[i] + 1;
  }
  g.in_extent = std::move(in_extent);
  g.kernel = std::move(kernel);
  g.stride = std::move(stride);
  g.padding = std::move(padding);
  return g;
}

std::size_t ConvGeometry::in_size() const {
  return std::accumulate(in_extent.begin(), in_extent.end(), std::size_t{1}, std::multiplies<>());
}
std::size_t ConvGeometry::out_size() const {
  return std::accumulate(out_extent.begin(), out_extent.end(), std::size_t{1}, std::multiplies<>());
}
std::size_t ConvGeometry::kernel_size() const {
  return std::accumulate(kernel.begin(), kernel.end(), std::size_t{1}, std::multiplies<>());
}

namespace kernels {

namespace {

// For one patch row (channel c, kernel tap kflat) visit the output rows
// [row_begin, row_end) (a row being a run along the last spatial axis),
// calling run(out_flat, in_flat, count, in_step) for the stretch of taps that
// land inside the input and pad(out_flat, count) for the rest. out_flat is
// relative to the first visited row.
template <class Run, class Pad>
void for_each_tap(const ConvGeometry& g, std::size_t kflat, std::size_t row_begin, std::size_t row_end, Run&& run,
                  Pad&& pad) {
  constexpr std::size_t kMaxRank = 8;
  const std::size_t n = g.spatial_rank();
  long koff[kMaxRank];
  std::size_t in_stride[kMaxRank], oi[kMaxRank] = {};
  for (std::size_t ax = n; ax-- > 0;) {
    koff[ax] = static_cast<long>(kflat % g.kernel[ax]) - static_cast<long>(g.padding[ax].before);
    kflat /= g.kernel[ax];
  }
  in_stride[n - 1] = 1;
  for (std::size_t ax = n - 1; ax-- > 0;) in_stride[ax] = in_stride[ax + 1] * g.in_extent[ax + 1];

  const std::size_t last = n - 1;
  const std::size_t ow = g.out_extent[last];
  const long sw = static_cast<long>(g.stride[last]);
  const long iw = static_cast<long>(g.in_extent[last]);
  for (std::size_t ax = last, r = row_begin; ax-- > 0;) {
    oi[ax] = r % g.out_extent[ax];
    r /= g.out_extent[ax];
  }

  // Output columns x with 0 <= x*sw + koff < iw form one interval.
  const long kl = koff[last];
  long x0 = kl >= 0 ? 0 : (-kl + sw - 1) / sw;
  long x1 = iw - kl <= 0 ? 0 : (iw - kl + sw - 1) / sw;
  x1 = std::min<long>(x1, static_cast<long>(ow));
  x0 = std::min(x0, x1);

  for (std::size_t o = row_begin; o < row_end; ++o) {
    bool valid = true;
    std::size_t base = 0;
    for (std::size_t ax = 0; ax < last; ++ax) {
      const long c = static_cast<long>(oi[ax] * g.stride[ax]) + koff[ax];
      if (c < 0 || c >= static_cast<long>(g.in_extent[ax])) {
        valid = false;
        break;
      }
      base += static_cast<std::size_t>(c) * in_stride[ax];
    }
    const std::size_t obase = (o - row_begin) * ow;
    if (!valid || x1 == x0) {
      pad(obase, ow);
    } else {
      if (x0 > 0) pad(obase, static_cast<std::size_t>(x0));
      run(obase + static_cast<std::size_t>(x0), base + static_cast<std::size_t>(x0 * sw + kl),
          static_cast<std::size_t>(x1 - x0), static_cast<std::size_t>(sw));
      if (static_cast<std::size_t>(x1) < ow) pad(obase + static_cast<std::size_t>(x1), ow - static_cast<std::size_t>(x1));
    }
    for (std::size_t ax = last; ax-- > 0;) {
      if (++oi[ax] < g.out_extent[ax]) break;
      oi[ax] = 0;
    }
  }
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Block = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstBlock = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

std::size_t output_rows(const ConvGeometry& g) { return g.out_size() / g.out_extent.back(); }

// Output rows per chunk so the unfolded patch block stays around L2 size.
// The split depends only on the geometry, which keeps results independent of
// the thread count.
template <class T>
std::size_t chunk_rows(const ConvGeometry& g) {
  constexpr std::size_t kChunkBytes = std::size_t{1} << 19;
  const std::size_t cols = std::max<std::size_t>(1, kChunkBytes / (sizeof(T) * g.patch_rows()));
  return std::max<std::size_t>(1, cols / g.out_extent.back());
}

template <class T>
void im2col_rows(const T* input, const ConvGeometry& g, std::size_t row_begin, std::size_t row_end, T* cols) {
  const std::size_t ks = g.kernel_size();
  const std::size_t rows = g.channels * ks;
  const std::size_t ncols = (row_end - row_begin) * g.out_extent.back();
  const std::size_t in_size = g.in_size();
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = input + (r / ks) * in_size;
    T* dst = cols + r * ncols;
    for_each_tap(
        g, r % ks, row_begin, row_end,
        [&](std::size_t o, std::size_t i, std::size_t count, std::size_t step) {
          if (step == 1) {
            std::copy(src + i, src + i + count, dst + o);
          } else {
            for (std::size_t j = 0; j < count; ++j) dst[o + j] = src[i + j * step];
          }
        },
        [&](std::size_t o, std::size_t count) { std::fill(dst + o, dst + o + count, T{0}); });
  }
}

template <class T>
void col2im_rows(const T* cols, const ConvGeometry& g, std::size_t row_begin, std::size_t row_end, T* input_grad) {
  const std::size_t ks = g.kernel_size();
  const std::size_t ncols = (row_end - row_begin) * g.out_extent.back();
  const std::size_t in_size = g.in_size();
  // Channels write disjoint slices; taps within a channel run serially so
  // accumulation order is fixed.
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dst = input_grad + c * in_size;
    for (std::size_t k = 0; k < ks; ++k) {
      const T* src = cols + (c * ks + k) * ncols;
      for_each_tap(
          g, k, row_begin, row_end,
          [&](std::size_t o, std::size_t i, std::size_t count, std::size_t step) {
            for (std::size_t j = 0; j < count; ++j) dst[i + j * step] += src[o + j];
          },
          [](std::size_t, std::size_t) {});
    }
  }
}

}  // namespace

template <class T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  im2col_rows(input, g, 0, output_rows(g), cols);
}

template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* input_grad) {
  col2im_rows(cols, g, 0, output_rows(g), input_grad);
}

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  using Map = Eigen::Map<const RowMat<T>>;
  Eigen::Map<RowMat<T>> C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             K = static_cast<Eigen::Index>(k);
  if (beta == T{0}) {
    C.setZero();
  } else if (beta != T{1}) {
    C *= beta;
  }
  if (!trans_a && !trans_b) {
    C.noalias() += alpha * (Map(a, M, K) * Map(b, K, N));
  } else if (trans_a && !trans_b) {
    C.noalias() += alpha * (Map(a, K, M).transpose() * Map(b, K, N));
  } else if (!trans_a && trans_b) {
    C.noalias() += alpha * (Map(a, M, K) * Map(b, N, K).transpose());
  } else {
    C.noalias() += alpha * (Map(a, K, M).transpose() * Map(b, N, K).transpose());
  }
}

template <class T>
void conv_forward(const T* input, const T* weight, const T* bias, std::size_t filters,
                  const ConvGeometry& g, T* output) {
  const std::size_t n = g.out_size(), ow = g.out_extent.back(), rows = g.patch_rows();
  const std::size_t total = output_rows(g), step = chunk_rows<T>(g);
  const auto F = static_cast<Eigen::Index>(filters), R = static_cast<Eigen::Index>(rows);
  const Eigen::Map<const RowMat<T>> w(weight, F, R);
  std::vector<T> buf(rows * std::min(step, total) * ow);
  for (std::size_t r0 = 0; r0 < total; r0 += step) {
    const std::size_t r1 = std::min(total, r0 + step);
    const auto nc = static_cast<Eigen::Index>((r1 - r0) * ow);
    im2col_rows(input, g, r0, r1, buf.data());
    Block<T> out(output + r0 * ow, F, nc, Eigen::OuterStride<>(static_cast<Eigen::Index>(n)));
    out.noalias() = w * Eigen::Map<const RowMat<T>>(buf.data(), R, nc);
  }
  if (bias) {
#pragma omp parallel for schedule(static)
    for (std::size_t f = 0; f < filters; ++f) {
      T* row = output + f * n;
      for (std::size_t i = 0; i < n; ++i) row[i] += bias[f];
    }
  }
}

template <class T>
void conv_backward(const T* input, const T* grad_output, const T* weight, std::size_t filters,
                   const ConvGeometry& g, T* weight_grad, T* bias_grad, T* input_grad) {
  const std::size_t n = g.out_size(), ow = g.out_extent.back(), rows = g.patch_rows();
  const std::size_t total = output_rows(g), step = chunk_rows<T>(g);
  const auto F = static_cast<Eigen::Index>(filters), R = static_cast<Eigen::Index>(rows);
  if (bias_grad) {
    for (std::size_t f = 0; f < filters; ++f) {
      T acc{0};
      const T* row = grad_output + f * n;
      for (std::size_t i = 0; i < n; ++i) acc += row[i];
      bias_grad[f] += acc;
    }
  }
  if (!weight_grad && !input_grad) return;
  if (input_grad) std::fill(input_grad, input_grad + g.channels * g.in_size(), T{0});
  const Eigen::Map<const RowMat<T>> w(weight, F, R);
  std::vector<T> buf(rows * std::min(step, total) * ow);
  // The unfolded input is rebuilt per chunk instead of being kept from the
  // forward pass; the buffer then takes the chunk's column gradient.
  for (std::size_t r0 = 0; r0 < total; r0 += step) {
    const std::size_t r1 = std::min(total, r0 + step);
    const auto nc = static_cast<Eigen::Index>((r1 - r0) * ow);
    const ConstBlock<T> go(grad_output + r0 * ow, F, nc, Eigen::OuterStride<>(static_cast<Eigen::Index>(n)));
    Eigen::Map<RowMat<T>> cols(buf.data(), R, nc);
    if (weight_grad) {
      im2col_rows(input, g, r0, r1, buf.data());
      Eigen::Map<RowMat<T>>(weight_grad, F, R).noalias() += go * cols.transpose();
    }
    if (input_grad) {
      cols.noalias() = w.transpose() * go;
      col2im_rows(buf.data(), g, r0, r1, input_grad);
    }
  }
}

template <class T>
void tanh_forward(const T* x, T* y, std::size_t n) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto len = static_cast<Eigen::Index>(n);
  Eigen::Map<Arr>(y, len) = Eigen::Map<const Arr>(x, len).tanh();
}

template <class T>
void tanh_backward(const T* y, const T* grad_out, T* grad_in, std::size_t n) {
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) grad_in[i] = grad_out[i] * (T{1} - y[i] * y[i]);
}

#define DNR_KERNELS(T)                                                                             \
  template void im2col(const T*, const ConvGeometry&, T*);                                         \
  template void col2im(const T*, const ConvGeometry&, T*);                                         \
  template void gemm(bool, bool, std::size_t, std::size_t, std::size_t, T, const T*, const T*, T, \
                     T*);                                                                          \
  template void conv_forward(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*);  \
  template void conv_backward(const T*, const T*, const T*, std::size_t, const ConvGeometry&, T*,  \
                              T*, T*);                                                             \
  template void tanh_forward(const T*, T*, std::size_t);                                           \
  template void tanh_backward(const T*, const T*, T*, std::size_t);

DNR_KERNELS(float)
DNR_KERNELS(double)

}  // namespace kernels
}  // namespace dnr
