#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dnr/error.hpp"

namespace dnr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major n-rank array. The shape of a value never changes;
/// reshape() returns a new tensor over the same element sequence.
template <class T>
class Tensor {
 public:
  using value_type = T;

  /// Rank-0 tensor holding a single zero.
  Tensor() : data_(1, T{0}) {}
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  Shape strides() const;

  std::span<const T> data() const& noexcept { return data_; }
  std::span<T> data() & noexcept { return data_; }
  // A span into a temporary would dangle.
  std::span<const T> data() const&& = delete;
  const std::vector<T>& values() const& noexcept { return data_; }
  std::vector<T> values() && noexcept { return std::move(data_); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Bounds-checked multi-index access.
  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;
  std::size_t offset(std::span<const std::size_t> index) const;

  T item() const;

  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

struct AxisPair {
  std::size_t a;
  std::size_t b;
};

struct Padding {
  std::size_t before = 0;
  std::size_t after = 0;
};

enum class PadMode { zero, reflect };

/// Sum over the paired axes of the tensor product a ⊗ b. The result keeps
/// the unpaired axes of a followed by the unpaired axes of b.
template <class T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const AxisPair> paired_axes);

/// n-dimensional correlation (no kernel flip). Axes of `input` not listed in
/// `spatial_axes` are carried through unchanged. Each output element is the
/// full contraction of the kernel with the matching input patch; kernel
/// indices are summed in row-major order, last axis innermost.
template <class T>
Tensor<T> conv_nd(const Tensor<T>& input, const Tensor<T>& kernel,
                  std::span<const std::size_t> spatial_axes,
                  std::span<const Padding> padding,
                  std::span<const std::size_t> stride);

/// Same-size correlation with zero padding over the last `kernel.rank()` axes
/// (odd kernel extents). Shorthand used by the filter banks and losses.
template <class T>
Tensor<T> correlate_same(const Tensor<T>& input, const Tensor<T>& kernel);

/// Exact adjoint of correlate_same for the same kernel.
template <class T>
Tensor<T> correlate_same_adjoint(const Tensor<T>& grad, const Tensor<T>& kernel);

template <class T>
Tensor<T> pad(const Tensor<T>& input, std::size_t axis, std::size_t before, std::size_t after,
              PadMode mode = PadMode::zero);

/// Contiguous sub-range [start, start+count) along one axis.
template <class T>
Tensor<T> slice(const Tensor<T>& input, std::size_t axis, std::size_t start, std::size_t count);

/// Counter-clockwise rotation by quarter_turns * 90 degrees in the plane of
/// (axis_y, axis_x). Defaults to the last two axes.
template <class T>
Tensor<T> rotate90(const Tensor<T>& image, int quarter_turns);
template <class T>
Tensor<T> rotate90(const Tensor<T>& image, int quarter_turns, std::size_t axis_y,
                   std::size_t axis_x);

// Elementwise helpers. Shapes must match exactly.
template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> operator*(T s, const Tensor<T>& a);
template <class T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y);

template <class T>
bool all_finite(const Tensor<T>& t);
template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace dnr
