#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "dnr/layers.hpp"

namespace dnr {

/// Scalar loss of a module output together with d loss / d output.
using LossFn = std::function<std::pair<double, Tensor<double>>(const Tensor<double>&)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  /// Central-difference step, scaled by max(1, |value|).
  double step = 1e-6;
  bool check_input = true;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<parameter>[index]" or "input[index]"
  bool passed = false;
  std::string failure;
  std::size_t checked = 0;
};

namespace detail {

// |a - n| / max(|a|, |n|, floor); the floor is 1e-3 of the largest analytic
// magnitude in the tensor so entries that vanish analytically are judged
// against the tensor's scale rather than against zero.
inline void compare_gradients(const Tensor<double>& analytic, const Tensor<double>& numeric,
                              const std::string& name, GradCheckReport& report) {
  double scale = 0.0;
  for (double a : analytic.data()) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-3 * scale, 1e-12);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    if (!std::isfinite(a) || !std::isfinite(n)) {
      if (report.failure.empty()) report.failure = "non-finite gradient in " + name;
      continue;
    }
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    ++report.checked;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = name + "[" + std::to_string(i) + "]";
    }
  }
}

}  // namespace detail

/// Compares analytic gradients of `module` (anything with forward(),
/// backward() and parameters()) against central finite differences of
/// loss(module.forward(input)) for every parameter element and, optionally,
/// every input element.
template <class Module>
GradCheckReport gradient_check(Module& module, const LossFn& loss, const Tensor<double>& input,
                               GradCheckOptions options = {}) {
  GradCheckReport report;
  ParameterSet<double> params = module.parameters();
  params.zero_grad();

  const Tensor<double> out = module.forward(input);
  const auto [value, grad_out] = loss(out);
  if (!std::isfinite(value)) {
    report.failure = "non-finite loss";
    return report;
  }
  const Tensor<double> grad_in = module.backward(grad_out);

  auto eval = [&](const Tensor<double>& x) { return loss(module.infer(x)).first; };

  for (auto* p : params) {
    Tensor<double> numeric(p->value.shape());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      const double h = options.step * std::max(1.0, std::abs(orig));
      p->value[i] = orig + h;
      const double up = eval(input);
      p->value[i] = orig - h;
      const double down = eval(input);
      p->value[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    detail::compare_gradients(p->grad, numeric, p->name, report);
  }

  if (options.check_input) {
    Tensor<double> x = input;
    Tensor<double> numeric(input.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      const double h = options.step * std::max(1.0, std::abs(orig));
      x[i] = orig + h;
      const double up = eval(x);
      x[i] = orig - h;
      const double down = eval(x);
      x[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    detail::compare_gradients(grad_in, numeric, "input", report);
  }

  report.passed = report.failure.empty() && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace dnr
