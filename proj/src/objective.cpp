#include "dnr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dnr/error.hpp"
#include "dnr/preprocess.hpp"

namespace dnr {

std::vector<MultiIndex> MixedDerivativeLossConfig::included() const {
  if (order < 0) throw ConfigError("mixed derivative loss: order must be >= 0");
  if (order > 2) throw ConfigError("mixed derivative loss: no stencils above order 2");
  if (!(epsilon > 0.0)) throw ConfigError("mixed derivative loss: epsilon must be > 0");
  const MultiIndex all[] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  std::vector<MultiIndex> out;
  for (const auto& a : all) {
    if (a.x + a.y > order) continue;
    if (std::find(excluded.begin(), excluded.end(), a) != excluded.end()) continue;
    if (a == MultiIndex{1, 1}) throw ConfigError("mixed derivative loss: no stencil for alpha=(1,1)");
    out.push_back(a);
  }
  return out;
}

namespace {

constexpr double kDbPerLn = 20.0 / std::numbers::ln10;

template <class T>
Tensor<T> stencil_for(const MultiIndex& a) {
  if (a == MultiIndex{1, 0}) return HighPassBank::kernel<T>(Stencil::d_x);
  if (a == MultiIndex{0, 1}) return HighPassBank::kernel<T>(Stencil::d_y);
  if (a == MultiIndex{2, 0}) return HighPassBank::kernel<T>(Stencil::d_xx);
  return HighPassBank::kernel<T>(Stencil::d_yy);
}

template <class T>
double sum_squares(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

template <class T>
void require_image(const Tensor<T>& t, const char* what) {
  if (t.rank() != 3) throw DimensionError(std::string(what) + ": expected (C,H,W), got " + shape_string(t.shape()));
}

}  // namespace

template <class T>
LossValue<T> mixed_derivative_loss(const Tensor<T>& e, const MixedDerivativeLossConfig& config) {
  require_image(e, "mixed_derivative_loss");
  const auto terms = config.included();
  const double pixels = static_cast<double>(e.extent(1) * e.extent(2));
  const double lambda = 1.0 / (2.0 * pixels);
  const double sign = config.maximize_form ? -1.0 : 1.0;

  LossValue<T> out{0.0, Tensor<T>(e.shape())};
  for (const auto& a : terms) {
    const bool identity = a == MultiIndex{0, 0};
    const Tensor<T> d = identity ? e : correlate_same(e, stencil_for<T>(a));
    const double sq = sum_squares(d);
    const double norm = std::sqrt(sq);
    const double scaled = lambda * norm;
    if (!(scaled > config.epsilon)) {
      out.value += sign * 20.0 * std::log10(config.epsilon);
      continue;
    }
    out.value += sign * 20.0 * std::log10(scaled);
    // d/de 20 log10(lambda ||D e||) = (20 / ln 10) D^T(D e) / ||D e||^2
    const Tensor<T> back = identity ? d : correlate_same_adjoint(d, stencil_for<T>(a));
    const double coef = sign * kDbPerLn / sq;
    for (std::size_t i = 0; i < back.size(); ++i) {
      out.gradient[i] = static_cast<T>(out.gradient[i] + coef * back[i]);
    }
  }
  return out;
}

template <class T>
LossValue<T> psnr_loss(const Tensor<T>& prediction, const Tensor<T>& target, double epsilon) {
  require_same_shape(prediction.shape(), target.shape(), "psnr_loss");
  const double n = static_cast<double>(prediction.size());
  double se = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
    se += d * d;
  }
  const double denom = se / n + epsilon * epsilon;
  LossValue<T> out{10.0 * std::log10(denom), Tensor<T>(prediction.shape())};
  const double coef = (10.0 / std::numbers::ln10) * 2.0 / (n * denom);
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    out.gradient[i] = static_cast<T>(coef * (static_cast<double>(prediction[i]) - static_cast<double>(target[i])));
  }
  return out;
}

template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_value) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / (se / static_cast<double>(a.size())));
}

namespace {

template <class T>
std::vector<double> to_gray(const Tensor<T>& t, std::size_t& h, std::size_t& w) {
  if (t.rank() == 2) {
    h = t.extent(0);
    w = t.extent(1);
    return std::vector<double>(t.data().begin(), t.data().end());
  }
  if (t.rank() != 3) throw DimensionError("ssim: expected (C,H,W) or (H,W), got " + shape_string(t.shape()));
  const std::size_t c = t.extent(0);
  h = t.extent(1);
  w = t.extent(2);
  std::vector<double> g(h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) g[i] += static_cast<double>(t[ch * h * w + i]);
  }
  for (auto& v : g) v /= static_cast<double>(c);
  return g;
}

}  // namespace

template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& opt) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  std::size_t h = 0, w = 0;
  const std::vector<double> x = to_gray(a, h, w);
  const std::vector<double> y = to_gray(b, h, w);
  const std::size_t k = opt.window;
  if (h < k || w < k) {
    throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");
  }

  std::vector<double> win(k * k);
  {
    const double c = static_cast<double>(k - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double dy = static_cast<double>(i) - c, dx = static_cast<double>(j) - c;
        win[i * k + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * opt.sigma * opt.sigma));
        total += win[i * k + j];
      }
    }
    for (auto& v : win) v /= total;
  }

  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  double total = 0.0;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    double row_total = 0.0;
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < k; ++i) {
        const double* xr = x.data() + (oy + i) * w + ox;
        const double* yr = y.data() + (oy + i) * w + ox;
        const double* wr = win.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) {
          mx += wr[j] * xr[j];
          my += wr[j] * yr[j];
          sxx += wr[j] * xr[j] * xr[j];
          syy += wr[j] * yr[j] * yr[j];
          sxy += wr[j] * xr[j] * yr[j];
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      row_total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total += row_total;
  }
  return total / static_cast<double>(oh * ow);
}

double MetricReport::mean_psnr() const {
  return psnr.empty() ? 0.0 : std::accumulate(psnr.begin(), psnr.end(), 0.0) / static_cast<double>(psnr.size());
}

double MetricReport::mean_ssim() const {
  return ssim.empty() ? 0.0 : std::accumulate(ssim.begin(), ssim.end(), 0.0) / static_cast<double>(ssim.size());
}

#define DNR_OBJECTIVE(T)                                                                     \
  template LossValue<T> mixed_derivative_loss(const Tensor<T>&, const MixedDerivativeLossConfig&); \
  template LossValue<T> psnr_loss(const Tensor<T>&, const Tensor<T>&, double);               \
  template double psnr(const Tensor<T>&, const Tensor<T>&, double);                          \
  template double ssim(const Tensor<T>&, const Tensor<T>&, const SsimOptions&);

DNR_OBJECTIVE(float)
DNR_OBJECTIVE(double)

}  // namespace dnr
