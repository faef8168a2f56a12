#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dnr/layers.hpp"

namespace dnr {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are keyed by parameter name, so the update
/// does not depend on the order parameters are listed in.
template <class T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update of every parameter from its accumulated gradient; gradients
  /// are zeroed afterwards.
  void step(ParameterSet<T>& params);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  const std::map<std::string, Moments>& moments() const { return state_; }
  /// Restore state (e.g. from a checkpoint).
  void restore(std::int64_t t, std::map<std::string, Moments> state);

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace dnr
