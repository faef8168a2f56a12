#pragma once

#include <array>

#include "dnr/tensor.hpp"

namespace dnr {

/// Derivative stencil identifiers in plane order after the identity plane.
enum class Stencil { d_yy = 0, d_y = 1, d_x = 2, d_xx = 3 };

/// The four fixed 3x3 high-pass kernels, correlation convention, rows = y.
///   d_yy: second difference along y      d_y: forward difference along y
///   d_x:  forward difference along x      d_xx: second difference along x
struct HighPassBank {
  static constexpr std::size_t count = 4;
  static constexpr std::array<std::array<double, 9>, count> coefficients{{
      {0, 0.5, 0, 0, -1, 0, 0, 0.5, 0},
      {0, 0, 0, 0, -1, 0, 0, 1, 0},
      {0, 0, 0, 0, -1, 1, 0, 0, 0},
      {0, 0, 0, 0.5, -1, 0.5, 0, 0, 0},
  }};

  template <class T>
  static Tensor<T> kernel(Stencil s);
};

/// Planes per color channel in the network input: the channel itself
/// followed by its four filter responses.
inline constexpr std::size_t kInputPlanes = 1 + HighPassBank::count;

/// Responses of the four stencils on a rank-2 (H, W) channel, same size,
/// zero padded. Order: d_yy, d_y, d_x, d_xx.
template <class T>
std::array<Tensor<T>, 4> apply_highpass_bank(const Tensor<T>& channel);

/// (3, H, W) image -> (3, 5, H, W) stack; plane order
/// (identity, d_yy, d_y, d_x, d_xx).
template <class T>
Tensor<T> build_input(const Tensor<T>& noisy_image);

/// Adjoint of build_input: maps a gradient on the (3, 5, H, W) stack back to
/// the (3, H, W) image.
template <class T>
Tensor<T> build_input_adjoint(const Tensor<T>& grad);

}  // namespace dnr
