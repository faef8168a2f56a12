#include "dnr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dnr {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

namespace {

Shape row_major_strides(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

void check_axis(std::size_t axis, std::size_t rank, const char* what) {
  if (axis >= rank) {
    throw DimensionError(std::string(what) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
}

// Advance a multi-index odometer-style. Returns false after the last index.
bool next_index(std::vector<std::size_t>& idx, const Shape& extent) {
  for (std::size_t i = idx.size(); i-- > 0;) {
    if (++idx[i] < extent[i]) return true;
    idx[i] = 0;
  }
  return false;
}

}  // namespace

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape_));
  }
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("element count " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

template <class T>
std::size_t Tensor<T>::extent(std::size_t axis) const {
  check_axis(axis, rank(), "extent");
  return shape_[axis];
}

template <class T>
Shape Tensor<T>::strides() const {
  return row_major_strides(shape_);
}

template <class T>
std::size_t Tensor<T>::offset(std::span<const std::size_t> index) const {
  if (index.size() != rank()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " for tensor " +
                         shape_string(shape_));
  }
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw DimensionError("index out of range on axis " + std::to_string(i));
    off = off * shape_[i] + index[i];
  }
  return off;
}

template <class T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

template <class T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

template <class T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor " + shape_string(shape_));
  return data_[0];
}

template <class T>
Tensor<T> Tensor<T>::reshape(Shape shape) const& {
  return Tensor(std::move(shape), data_);
}

template <class T>
Tensor<T> Tensor<T>::reshape(Shape shape) && {
  return Tensor(std::move(shape), std::move(data_));
}

template <class T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> paired_axes) {
  std::vector<bool> a_paired(a.rank(), false), b_paired(b.rank(), false);
  Shape pair_extent;
  for (const auto& p : paired_axes) {
    check_axis(p.a, a.rank(), "contract");
    check_axis(p.b, b.rank(), "contract");
    if (a_paired[p.a] || b_paired[p.b]) throw DimensionError("contract: axis paired twice");
    if (a.extent(p.a) != b.extent(p.b)) {
      throw DimensionError("contract: extent mismatch between axis " + std::to_string(p.a) +
                           " of a (" + std::to_string(a.extent(p.a)) + ") and axis " +
                           std::to_string(p.b) + " of b (" + std::to_string(b.extent(p.b)) + ")");
    }
    a_paired[p.a] = b_paired[p.b] = true;
    pair_extent.push_back(a.extent(p.a));
  }
  std::vector<std::size_t> a_free, b_free;
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (!a_paired[i]) {
      a_free.push_back(i);
      out_shape.push_back(a.extent(i));
    }
  }
  for (std::size_t i = 0; i < b.rank(); ++i) {
    if (!b_paired[i]) {
      b_free.push_back(i);
      out_shape.push_back(b.extent(i));
    }
  }

  const Shape as = a.strides(), bs = b.strides();
  Tensor<T> out(out_shape);
  std::vector<std::size_t> oi(out_shape.size(), 0);
  std::size_t flat = 0;
  do {
    std::size_t a_base = 0, b_base = 0;
    for (std::size_t k = 0; k < a_free.size(); ++k) a_base += oi[k] * as[a_free[k]];
    for (std::size_t k = 0; k < b_free.size(); ++k) b_base += oi[a_free.size() + k] * bs[b_free[k]];
    T acc{0};
    std::vector<std::size_t> pi(pair_extent.size(), 0);
    do {
      std::size_t ao = a_base, bo = b_base;
      for (std::size_t k = 0; k < pi.size(); ++k) {
        ao += pi[k] * as[paired_axes[k].a];
        bo += pi[k] * bs[paired_axes[k].b];
      }
      acc += a[ao] * b[bo];
    } while (next_index(pi, pair_extent));
    out[flat++] = acc;
  } while (next_index(oi, out_shape));
  return out;
}

template <class T>
Tensor<T> pad(const Tensor<T>& input, std::size_t axis, std::size_t before, std::size_t after,
              PadMode mode) {
  check_axis(axis, input.rank(), "pad");
  const std::size_t n = input.extent(axis);
  if (mode == PadMode::reflect) {
    if (n < 2) throw UnsupportedModeError("pad: reflect mode needs extent >= 2 on axis " + std::to_string(axis));
    if (before > n - 1 || after > n - 1) {
      throw UnsupportedModeError("pad: reflect width exceeds extent - 1 on axis " + std::to_string(axis));
    }
  }
  if (before == 0 && after == 0) return input;
  Shape out_shape = input.shape();
  out_shape[axis] = n + before + after;
  Tensor<T> out(out_shape);

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= input.extent(i);
  for (std::size_t i = axis + 1; i < input.rank(); ++i) inner *= input.extent(i);
  const std::size_t m = out_shape[axis];
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < m; ++j) {
      const long src = static_cast<long>(j) - static_cast<long>(before);
      long s = src;
      if (src < 0 || src >= static_cast<long>(n)) {
        if (mode == PadMode::zero) continue;
        s = src < 0 ? -src : 2 * static_cast<long>(n) - 2 - src;
      }
      const T* from = input.data().data() + (o * n + static_cast<std::size_t>(s)) * inner;
      std::copy(from, from + inner, out.data().data() + (o * m + j) * inner);
    }
  }
  return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& input, std::size_t axis, std::size_t start, std::size_t count) {
  check_axis(axis, input.rank(), "slice");
  if (count == 0 || start + count > input.extent(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(start + count) +
                         ") outside extent " + std::to_string(input.extent(axis)));
  }
  Shape out_shape = input.shape();
  out_shape[axis] = count;
  Tensor<T> out(out_shape);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= input.extent(i);
  for (std::size_t i = axis + 1; i < input.rank(); ++i) inner *= input.extent(i);
  const std::size_t n = input.extent(axis);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* from = input.data().data() + (o * n + start) * inner;
    std::copy(from, from + count * inner, out.data().data() + o * count * inner);
  }
  return out;
}

template <class T>
Tensor<T> conv_nd(const Tensor<T>& input, const Tensor<T>& kernel,
                  std::span<const std::size_t> spatial_axes, std::span<const Padding> padding,
                  std::span<const std::size_t> stride) {
  const std::size_t nk = spatial_axes.size();
  if (kernel.rank() != nk) {
    throw DimensionError("conv_nd: kernel rank " + std::to_string(kernel.rank()) + " but " +
                         std::to_string(nk) + " convolved axes");
  }
  if (padding.size() != nk || stride.size() != nk) {
    throw DimensionError("conv_nd: padding/stride must have one entry per convolved axis");
  }
  std::vector<bool> seen(input.rank(), false);
  Tensor<T> padded = input;
  for (std::size_t k = 0; k < nk; ++k) {
    check_axis(spatial_axes[k], input.rank(), "conv_nd");
    if (seen[spatial_axes[k]]) throw DimensionError("conv_nd: axis listed twice");
    seen[spatial_axes[k]] = true;
    if (stride[k] == 0) throw DimensionError("conv_nd: stride must be positive");
    padded = pad(padded, spatial_axes[k], padding[k].before, padding[k].after, PadMode::zero);
    if (kernel.extent(k) > padded.extent(spatial_axes[k])) {
      throw DimensionError("conv_nd: kernel extent " + std::to_string(kernel.extent(k)) +
                           " exceeds padded input extent " +
                           std::to_string(padded.extent(spatial_axes[k])) + " on axis " +
                           std::to_string(spatial_axes[k]));
    }
  }

  Shape out_shape = padded.shape();
  for (std::size_t k = 0; k < nk; ++k) {
    const std::size_t ax = spatial_axes[k];
    out_shape[ax] = (padded.extent(ax) - kernel.extent(k)) / stride[k] + 1;
  }
  Tensor<T> out(out_shape);

  // Offsets of every kernel element relative to the patch origin, in kernel
  // row-major order so the summation order is fixed.
  const Shape ps = padded.strides();
  std::vector<std::size_t> kernel_offsets(kernel.size());
  {
    std::vector<std::size_t> ki(nk, 0);
    std::size_t f = 0;
    do {
      std::size_t off = 0;
      for (std::size_t k = 0; k < nk; ++k) off += ki[k] * ps[spatial_axes[k]];
      kernel_offsets[f++] = off;
    } while (nk > 0 && next_index(ki, kernel.shape()));
  }

  std::vector<std::size_t> axis_stride(padded.rank(), 1);
  for (std::size_t k = 0; k < nk; ++k) axis_stride[spatial_axes[k]] = stride[k];

  const std::size_t total = out.size();
  const T* src = padded.data().data();
  const T* kw = kernel.data().data();
  const std::size_t ksize = kernel.size();
  const std::size_t rank = out_shape.size();
#pragma omp parallel for schedule(static)
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat, base = 0;
    for (std::size_t ax = rank; ax-- > 0;) {
      const std::size_t i = rem % out_shape[ax];
      rem /= out_shape[ax];
      base += i * axis_stride[ax] * ps[ax];
    }
    T acc{0};
    for (std::size_t f = 0; f < ksize; ++f) acc += src[base + kernel_offsets[f]] * kw[f];
    out[flat] = acc;
  }
  return out;
}

template <class T>
Tensor<T> correlate_same(const Tensor<T>& input, const Tensor<T>& kernel) {
  const std::size_t nk = kernel.rank();
  if (nk > input.rank()) throw DimensionError("correlate_same: kernel rank exceeds input rank");
  std::vector<std::size_t> axes(nk);
  std::vector<Padding> pads(nk);
  std::vector<std::size_t> strides(nk, 1);
  for (std::size_t k = 0; k < nk; ++k) {
    axes[k] = input.rank() - nk + k;
    const std::size_t e = kernel.extent(k);
    if (e % 2 == 0) throw DimensionError("correlate_same: kernel extents must be odd");
    pads[k] = {e / 2, e / 2};
  }
  return conv_nd<T>(input, kernel, axes, pads, strides);
}

template <class T>
Tensor<T> correlate_same_adjoint(const Tensor<T>& grad, const Tensor<T>& kernel) {
  // Correlation with the point-reflected kernel is the adjoint of zero-padded
  // same-size correlation.
  std::vector<T> flipped(kernel.values().rbegin(), kernel.values().rend());
  return correlate_same(grad, Tensor<T>(kernel.shape(), std::move(flipped)));
}

template <class T>
Tensor<T> rotate90(const Tensor<T>& image, int quarter_turns) {
  if (image.rank() < 2) throw DimensionError("rotate90: need at least two axes");
  return rotate90(image, quarter_turns, image.rank() - 2, image.rank() - 1);
}

template <class T>
Tensor<T> rotate90(const Tensor<T>& image, int quarter_turns, std::size_t axis_y, std::size_t axis_x) {
  check_axis(axis_y, image.rank(), "rotate90");
  check_axis(axis_x, image.rank(), "rotate90");
  if (axis_y == axis_x) throw DimensionError("rotate90: spatial axes must differ");
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return image;
  const std::size_t h = image.extent(axis_y), w = image.extent(axis_x);
  Shape out_shape = image.shape();
  if (k % 2 == 1) std::swap(out_shape[axis_y], out_shape[axis_x]);
  Tensor<T> out(out_shape);
  const Shape is = image.strides();
  std::vector<std::size_t> idx(out_shape.size(), 0);
  std::size_t flat = 0;
  do {
    const std::size_t i = idx[axis_y], j = idx[axis_x];
    std::size_t sy = 0, sx = 0;
    switch (k) {
      case 1: sy = j; sx = w - 1 - i; break;
      case 2: sy = h - 1 - i; sx = w - 1 - j; break;
      default: sy = h - 1 - j; sx = i; break;
    }
    std::size_t off = 0;
    for (std::size_t ax = 0; ax < idx.size(); ++ax) {
      const std::size_t v = ax == axis_y ? sy : ax == axis_x ? sx : idx[ax];
      off += v * is[ax];
    }
    out[flat++] = image[off];
  } while (next_index(idx, out_shape));
  return out;
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "subtract");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <class T>
Tensor<T> operator*(T s, const Tensor<T>& a) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

template <class T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  require_same_shape(x.shape(), y.shape(), "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

#define DNR_INSTANTIATE(T)                                                                          \
  template class Tensor<T>;                                                                         \
  template Tensor<T> contract(const Tensor<T>&, const Tensor<T>&, std::span<const AxisPair>);       \
  template Tensor<T> conv_nd(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>,      \
                             std::span<const Padding>, std::span<const std::size_t>);               \
  template Tensor<T> correlate_same(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> correlate_same_adjoint(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> pad(const Tensor<T>&, std::size_t, std::size_t, std::size_t, PadMode);         \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                \
  template Tensor<T> rotate90(const Tensor<T>&, int);                                               \
  template Tensor<T> rotate90(const Tensor<T>&, int, std::size_t, std::size_t);                     \
  template Tensor<T> operator+(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> operator-(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> operator*(T, const Tensor<T>&);                                                \
  template void axpy(T, const Tensor<T>&, Tensor<T>&);                                              \
  template bool all_finite(const Tensor<T>&);                                                       \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                      \
  template T dot(const Tensor<T>&, const Tensor<T>&);

DNR_INSTANTIATE(float)
DNR_INSTANTIATE(double)

}  // namespace dnr
