#include <doctest.h>

#include <cmath>

#include "dnr/error.hpp"
#include "dnr/objective.hpp"
#include "support.hpp"

using namespace dnr;
using T2 = Tensor<double>;

namespace {

// Table stencils, rows = y.
const std::vector<double> kStencils[4] = {
    {0, 0, 0, 0, -1, 1, 0, 0, 0},        // alpha = (1,0): d/dx
    {0, 0, 0, 0, -1, 0, 0, 1, 0},        // alpha = (0,1): d/dy
    {0, 0, 0, 0.5, -1, 0.5, 0, 0, 0},    // alpha = (2,0)
    {0, 0.5, 0, 0, -1, 0, 0, 0.5, 0},    // alpha = (0,2)
};

// Filter each channel with zero padding and take the 2-norm over everything.
double filtered_norm(const T2& e, const std::vector<double>& stencil) {
  const std::size_t c = e.extent(0), h = e.extent(1), w = e.extent(2);
  const T2 k(Shape{3, 3}, stencil);
  double sq = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T2 r = oracle::conv(slice(e, 0, ch, 1).reshape({h, w}), k, {0, 1}, {{1, 1}, {1, 1}}, {1, 1});
    for (double v : r.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

double brute_mixed_loss(const T2& e, double eps) {
  const double lambda = 1.0 / (2.0 * static_cast<double>(e.extent(1) * e.extent(2)));
  double sq = 0.0;
  for (double v : e.data()) sq += v * v;
  double loss = 20.0 * std::log10(std::max(lambda * std::sqrt(sq), eps));
  for (const auto& s : kStencils) loss += 20.0 * std::log10(std::max(lambda * filtered_norm(e, s), eps));
  return loss;
}

}  // namespace

TEST_CASE("mixed loss: included multi-indices") {
  const MixedDerivativeLossConfig cfg;
  const std::vector<MultiIndex> want{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}};
  const auto got = cfg.included();
  CHECK(got.size() == want.size());
  for (const auto& a : want) CHECK(std::find(got.begin(), got.end(), a) != got.end());

  MixedDerivativeLossConfig bad;
  bad.order = -1;
  CHECK_THROWS_AS(bad.included(), ConfigError);
  bad = {};
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.included(), ConfigError);
  bad = {};
  bad.excluded.clear();  // (1,1) has no stencil
  CHECK_THROWS_AS(bad.included(), ConfigError);
}

TEST_CASE("mixed loss: zero error floor") {
  const MixedDerivativeLossConfig cfg;
  const auto r = mixed_derivative_loss(T2(Shape{3, 6, 6}), cfg);
  CHECK(r.value == doctest::Approx(5 * 20 * std::log10(1e-8)).epsilon(1e-14));
  for (double g : r.gradient.data()) CHECK(g == 0.0);
}

TEST_CASE("mixed loss: constant error matches the brute-force evaluation") {
  for (double c : {0.3, -1.7}) {
    const T2 e(Shape{3, 8, 8}, c);
    const auto r = mixed_derivative_loss(e, {});
    CHECK(r.value == doctest::Approx(brute_mixed_loss(e, 1e-8)).epsilon(1e-12));
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const T2 e = oracle::random<double>({3, 7, 9}, seed);
    CHECK(mixed_derivative_loss(e, {}).value == doctest::Approx(brute_mixed_loss(e, 1e-8)).epsilon(1e-12));
  }
}

TEST_CASE("mixed loss: gradient against finite differences") {
  const MixedDerivativeLossConfig cfg;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const T2 e = oracle::random<double>({3, 8, 8}, seed);
    const auto r = mixed_derivative_loss(e, cfg);
    const T2 fd = oracle::numeric_gradient([&](const T2& x) { return mixed_derivative_loss(x, cfg).value; }, e);
    CHECK(oracle::max_rel_error(r.gradient, fd) < 1e-5);
  }
}

TEST_CASE("mixed loss: maximize form flips the sign") {
  const T2 e = oracle::random<double>({3, 5, 5}, 4);
  MixedDerivativeLossConfig flipped;
  flipped.maximize_form = true;
  const auto a = mixed_derivative_loss(e, {});
  const auto b = mixed_derivative_loss(e, flipped);
  CHECK(b.value == doctest::Approx(-a.value));
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(b.gradient[i] == doctest::Approx(-a.gradient[i]));
}

TEST_CASE("mixed loss with only the identity term is an affine image of the PSNR loss") {
  MixedDerivativeLossConfig cfg;
  cfg.order = 0;
  const T2 zero(Shape{3, 6, 7});
  const double n = 3.0 * 6 * 7, lambda = 1.0 / (2.0 * 6 * 7);
  // 20 log10(lambda ||e||) = 10 log10(MSE) + 10 log10(n) + 20 log10(lambda)
  const double offset = 10.0 * std::log10(n) + 20.0 * std::log10(lambda);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const T2 pred = oracle::random<double>({3, 6, 7}, seed);
    const double mixed = mixed_derivative_loss(pred - zero, cfg).value;
    const double plain = psnr_loss(pred, zero, 1e-12).value;
    CHECK(mixed - plain == doctest::Approx(offset).epsilon(1e-10));
  }
}

TEST_CASE("psnr loss") {
  const T2 a = oracle::random<double>({3, 4, 4}, 1);
  CHECK(psnr_loss(a, a).value == doctest::Approx(20.0 * std::log10(1e-8)));
  const T2 b = a + T2(a.shape(), 0.1);
  CHECK(psnr_loss(b, a, 0.0).value == doctest::Approx(-20.0).epsilon(1e-12));
  CHECK(psnr(b, a) == doctest::Approx(20.0).epsilon(1e-12));

  const T2 t = oracle::random<double>({3, 8, 8}, 2);
  const T2 p = oracle::random<double>({3, 8, 8}, 3);
  const auto r = psnr_loss(p, t);
  const T2 fd = oracle::numeric_gradient([&](const T2& x) { return psnr_loss(x, t).value; }, p);
  CHECK(oracle::max_rel_error(r.gradient, fd) < 1e-6);
  // Closed form of the gradient.
  double mse = 0;
  for (std::size_t i = 0; i < p.size(); ++i) mse += (p[i] - t[i]) * (p[i] - t[i]);
  mse /= static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double want = 2.0 * (p[i] - t[i]) / (static_cast<double>(p.size()) * (mse + 1e-16)) * 10.0 / std::log(10.0);
    CHECK(r.gradient[i] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK_THROWS_AS(psnr_loss(p, T2(Shape{3, 8, 7})), DimensionError);
}

TEST_CASE("psnr metric") {
  const T2 a = oracle::random<double>({3, 9, 9}, 5, 0, 1);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, a) > 0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const T2 b = oracle::random<double>({3, 9, 9}, 100 + seed, 0, 1);
    CHECK(psnr(a, b) == psnr(b, a));
  }
  double last = std::numeric_limits<double>::infinity();
  for (double amp : {0.05, 0.1, 0.2}) {
    const T2 noisy = a + amp * oracle::random<double>(a.shape(), 7);
    const double p = psnr(noisy, a);
    CHECK(p < last);
    last = p;
  }
  CHECK_THROWS_AS(psnr(a, T2(Shape{3, 9, 8})), DimensionError);
}

TEST_CASE("psnr of pure Gaussian noise") {
  Rng rng(11);
  const double sigma = 0.08;
  T2 clean(Shape{256, 256}, 0.5), noisy(Shape{256, 256});
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = 0.5 + sigma * rng.normal();
  CHECK(std::abs(psnr(noisy, clean) - 20.0 * std::log10(1.0 / sigma)) < 0.1);
}

TEST_CASE("ssim") {
  const T2 a = oracle::random<double>({3, 16, 16}, 1, 0, 1);
  CHECK(ssim(a, a) == 1.0);

  const double c1 = 0.01 * 0.01;
  const double want = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  const double got = ssim(T2(Shape{3, 12, 12}, 0.2), T2(Shape{3, 12, 12}, 0.8));
  CHECK(std::abs(got - want) <= 1e-9);
  CHECK(got == doctest::Approx(0.4707).epsilon(1e-4));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const T2 b = oracle::random<double>({3, 16, 16}, 50 + seed, 0, 1);
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(s == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ssim(T2(Shape{3, 10, 20}), T2(Shape{3, 10, 20})), DimensionError);
}

TEST_CASE("metric report aggregates with the arithmetic mean") {
  MetricReport r;
  r.add(30.0, 0.9);
  r.add(20.0, 0.5);
  CHECK(r.count() == 2);
  CHECK(r.mean_psnr() == 25.0);
  CHECK(r.mean_ssim() == doctest::Approx(0.7));
}
