#pragma once

#include <cstddef>
#include <vector>

#include "dnr/tensor.hpp"

namespace dnr {

/// Geometry of a multi-channel n-d correlation: input (channels, in_extent...)
/// against kernels of shape (channels, kernel...) producing (out_extent...).
struct ConvGeometry {
  std::size_t channels = 1;
  std::vector<std::size_t> in_extent;
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<Padding> padding;
  std::vector<std::size_t> out_extent;

  static ConvGeometry make(std::size_t channels, std::vector<std::size_t> in_extent,
                           std::vector<std::size_t> kernel, std::vector<std::size_t> stride,
                           std::vector<Padding> padding);

  std::size_t spatial_rank() const { return in_extent.size(); }
  std::size_t in_size() const;
  std::size_t out_size() const;
  std::size_t kernel_size() const;
  /// Rows of the unfolded patch matrix: channels * prod(kernel).
  std::size_t patch_rows() const { return channels * kernel_size(); }
};

/// OpenMP-parallel building blocks for the layers. Every routine has a serial
/// counterpart in dnr::reference with the same contract.
namespace kernels {

/// Unfold input (channels, in_extent...) into a (patch_rows x out_size)
/// row-major matrix; out-of-range taps read as zero.
template <class T>
void im2col(const T* input, const ConvGeometry& g, T* cols);

/// Adjoint of im2col: scatter-add cols back into input layout. `input_grad`
/// is accumulated into, not overwritten.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* input_grad);

/// C = alpha * op(A) * op(B) + beta * C, all row-major.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, const T* b, T beta, T* c);

/// Multi-filter correlation: weight (filters, channels, kernel...),
/// bias (filters) -> output (filters, out_extent...). The input is unfolded a
/// block of output rows at a time so the patch matrix stays cache-resident.
template <class T>
void conv_forward(const T* input, const T* weight, const T* bias, std::size_t filters,
                  const ConvGeometry& g, T* output);

/// Gradients of conv_forward. weight_grad/bias_grad are accumulated;
/// input_grad (if non-null) is overwritten. Either gradient pointer may be
/// null to skip it.
template <class T>
void conv_backward(const T* input, const T* grad_output, const T* weight, std::size_t filters,
                   const ConvGeometry& g, T* weight_grad, T* bias_grad, T* input_grad);

template <class T>
void tanh_forward(const T* x, T* y, std::size_t n);
/// grad_in = grad_out * (1 - y^2)
template <class T>
void tanh_backward(const T* y, const T* grad_out, T* grad_in, std::size_t n);

}  // namespace kernels

/// Straightforward serial loops, kept for testing and benchmarking the
/// kernels above.
namespace reference {

template <class T>
void conv_forward(const T* input, const T* weight, const T* bias, std::size_t filters,
                  const ConvGeometry& g, T* output);

template <class T>
void conv_backward(const T* input, const T* grad_output, const T* weight, std::size_t filters,
                   const ConvGeometry& g, T* weight_grad, T* bias_grad, T* input_grad);

template <class T>
void tanh_forward(const T* x, T* y, std::size_t n);

}  // namespace reference

}  // namespace dnr
