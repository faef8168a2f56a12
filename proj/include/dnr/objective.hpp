#pragma once

#include <array>
#include <limits>
#include <utility>
#include <vector>

#include "dnr/tensor.hpp"

namespace dnr {

/// Multi-index (order along x, order along y) of a discrete derivative.
struct MultiIndex {
  int x = 0;
  int y = 0;
  bool operator==(const MultiIndex&) const = default;
};

struct MixedDerivativeLossConfig {
  /// Highest total derivative order |alpha| included.
  int order = 2;
  std::vector<MultiIndex> excluded{{1, 1}};
  /// Floor inside the logarithm.
  double epsilon = 1e-8;
  /// Report the maximisation form sum(-20 log10(...)) instead of the
  /// minimisation form used for training.
  bool maximize_form = false;

  /// Multi-indices with |alpha| <= order that have a discrete stencil and are
  /// not excluded, in the order (0,0), (1,0), (0,1), (2,0), (0,2).
  std::vector<MultiIndex> included() const;
};

template <class T>
struct LossValue {
  double value = 0.0;
  Tensor<T> gradient;
};

/// sum over alpha of 20 log10(max(lambda * ||D^alpha * e||_2, eps)) with
/// lambda = 1 / (2 H W); e has shape (C, H, W) and each stencil is applied per
/// channel with zero padding. Terms sitting at the floor contribute no
/// gradient.
template <class T>
LossValue<T> mixed_derivative_loss(const Tensor<T>& prediction_error,
                                   const MixedDerivativeLossConfig& config = {});

/// 10 log10(MSE + eps^2). Lower is better; equals -PSNR for MAX = 1 up to eps.
template <class T>
LossValue<T> psnr_loss(const Tensor<T>& prediction, const Tensor<T>& target, double epsilon = 1e-8);

/// 10 log10(max_value^2 / MSE); +infinity for identical inputs.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_value = 1.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all valid window positions. (3, H, W) inputs are converted
/// to gray as the mean of the channels; (H, W) inputs are used directly.
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& options = {});

struct MetricReport {
  std::vector<double> psnr;
  std::vector<double> ssim;

  void add(double p, double s) {
    psnr.push_back(p);
    ssim.push_back(s);
  }
  std::size_t count() const { return psnr.size(); }
  double mean_psnr() const;
  double mean_ssim() const;
};

}  // namespace dnr
