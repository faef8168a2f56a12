#pragma once
// Test-only oracles. These are written independently of the library code
// paths they check (plain index arithmetic, no shared helpers).

#include <cmath>
#include <functional>
#include <vector>

#include "dnr/rng.hpp"
#include "dnr/tensor.hpp"

namespace oracle {

using dnr::Shape;
using dnr::Tensor;

inline std::vector<std::size_t> unravel(std::size_t flat, const Shape& shape) {
  std::vector<std::size_t> idx(shape.size());
  for (std::size_t ax = shape.size(); ax-- > 0;) {
    idx[ax] = flat % shape[ax];
    flat /= shape[ax];
  }
  return idx;
}

inline std::size_t ravel(const std::vector<std::size_t>& idx, const Shape& shape) {
  std::size_t flat = 0;
  for (std::size_t ax = 0; ax < shape.size(); ++ax) flat = flat * shape[ax] + idx[ax];
  return flat;
}

inline std::size_t count(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

template <class T>
Tensor<T> random(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  dnr::Rng rng(seed);
  std::vector<T> v(count(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(shape, std::move(v));
}

/// Brute-force contraction: loop over every (free_a, free_b, paired) tuple.
inline Tensor<double> contract(const Tensor<double>& a, const Tensor<double>& b,
                               const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<bool> pa(a.rank(), false), pb(b.rank(), false);
  Shape paired_shape;
  for (auto [x, y] : pairs) {
    pa[x] = pb[y] = true;
    paired_shape.push_back(a.extent(x));
  }
  Shape out_shape;
  std::vector<std::size_t> free_a, free_b;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (!pa[i]) free_a.push_back(i), out_shape.push_back(a.extent(i));
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (!pb[i]) free_b.push_back(i), out_shape.push_back(b.extent(i));
  Tensor<double> out(out_shape);
  for (std::size_t o = 0; o < count(out_shape); ++o) {
    const auto oi = unravel(o, out_shape);
    double sum = 0.0;
    for (std::size_t p = 0; p < count(paired_shape); ++p) {
      const auto pi = unravel(p, paired_shape);
      std::vector<std::size_t> ia(a.rank()), ib(b.rank());
      for (std::size_t k = 0; k < free_a.size(); ++k) ia[free_a[k]] = oi[k];
      for (std::size_t k = 0; k < free_b.size(); ++k) ib[free_b[k]] = oi[free_a.size() + k];
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        ia[pairs[k].first] = pi[k];
        ib[pairs[k].second] = pi[k];
      }
      sum += a[ravel(ia, a.shape())] * b[ravel(ib, b.shape())];
    }
    out[o] = sum;
  }
  return out;
}

/// Brute-force n-d correlation. Non-spatial axes are carried through.
/// Kernel taps are visited in row-major order.
inline Tensor<double> conv(const Tensor<double>& in, const Tensor<double>& k,
                           const std::vector<std::size_t>& axes,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pad,
                           const std::vector<std::size_t>& stride) {
  Shape out_shape = in.shape();
  for (std::size_t j = 0; j < axes.size(); ++j) {
    const std::size_t padded = in.extent(axes[j]) + pad[j].first + pad[j].second;
    out_shape[axes[j]] = (padded - k.extent(j)) / stride[j] + 1;
  }
  Tensor<double> out(out_shape);
  for (std::size_t o = 0; o < count(out_shape); ++o) {
    const auto oi = unravel(o, out_shape);
    double sum = 0.0;
    for (std::size_t t = 0; t < k.size(); ++t) {
      const auto ti = unravel(t, k.shape());
      auto ii = oi;
      bool inside = true;
      for (std::size_t j = 0; j < axes.size(); ++j) {
        const long c = static_cast<long>(oi[axes[j]] * stride[j] + ti[j]) - static_cast<long>(pad[j].first);
        if (c < 0 || c >= static_cast<long>(in.extent(axes[j]))) {
          inside = false;
          break;
        }
        ii[axes[j]] = static_cast<std::size_t>(c);
      }
      if (inside) sum += in[ravel(ii, in.shape())] * k[t];
    }
    out[o] = sum;
  }
  return out;
}

/// Central differences of a scalar function over every element of x.
inline Tensor<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f, Tensor<double> x,
                                       double h = 1e-6) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    const double step = h * std::max(1.0, std::abs(orig));
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_rel_error(const Tensor<double>& a, const Tensor<double>& n) {
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), floor}));
  }
  return worst;
}

inline double inner(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace oracle
