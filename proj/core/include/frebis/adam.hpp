#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "frebis/tensor.hpp"

namespace frebis {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter, in the order the
/// parameters were registered.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {});

  /// One update from the gradients currently held by the parameters, using
  /// `lr` for this step. Parameters without a gradient are treated as g = 0.
  void step(double lr);
  void step() { step(config_.lr); }

  /// Explicit-gradient form; grads[i] must match params[i] in size.
  void step(std::span<const std::vector<T>> grads, double lr);

  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return steps_; }
  void set_step_count(std::int64_t steps) { steps_ = steps; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  void apply(std::size_t i, std::span<const T> g, double lr, double c1, double c2);

  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t steps_ = 0;
};

}  // namespace frebis
