#include "frebis/adam.hpp"

#include <cmath>

#include "frebis/errors.hpp"

namespace frebis {

template <class T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <class T>
void Adam<T>::apply(std::size_t i, std::span<const T> g, double lr, double c1, double c2) {
  auto w = params_[i].mutable_values();
  auto& m = m_[i];
  auto& v = v_[i];
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
    const double mk = b1 * m[k] + (1.0 - b1) * gk;
    const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
    m[k] = static_cast<T>(mk);
    v[k] = static_cast<T>(vk);
    const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + config_.eps);
    w[k] = static_cast<T>(w[k] - update);
  }
}

template <class T>
void Adam<T>::step(double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) apply(i, params_[i].grad(), lr, c1, c2);
}

template <class T>
void Adam<T>::step(std::span<const std::vector<T>> grads, double lr) {
  if (grads.size() != params_.size()) throw ShapeError("Adam: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != params_[i].numel()) {
      throw ShapeError("Adam: gradient " + std::to_string(i) + " has wrong size");
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) apply(i, grads[i], lr, c1, c2);
}

template <class T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace frebis
