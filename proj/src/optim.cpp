#include "dnr/optim.hpp"

#include <cmath>

namespace dnr {

template <class T>
void Adam<T>::step(ParameterSet<T>& params) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto* p : params) {
    auto it = state_.find(p->name);
    if (it == state_.end()) {
      it = state_.emplace(p->name, Moments{Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())}).first;
    }
    auto& [m, v] = it->second;
    require_same_shape(m.shape(), p->value.shape(), ("adam state of '" + p->name + "'").c_str());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      p->value[i] = static_cast<T>(p->value[i] - config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
    }
    p->zero_grad();
  }
}

template <class T>
void Adam<T>::restore(std::int64_t t, std::map<std::string, Moments> state) {
  t_ = t;
  state_ = std::move(state);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dnr
