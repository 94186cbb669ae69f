#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "frebis/rng.hpp"
#include "frebis/tensor.hpp"

namespace frebis {

enum class Activation { softplus, relu };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct MlpConfig {
  int layers = 6;  // number of affine layers
  int hidden_width = 256;
  int output_width = 256;
  Activation activation = Activation::softplus;
  double sharpness = 100.0;  // softplus only
  std::size_t input_dim = 0;

  void validate() const;
  /// Weights plus biases.
  std::size_t parameter_count() const;
};

template <class T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

/// Plain fully connected stack: activation after every layer but the last,
/// whose output is linear.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  /// Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
  Mlp(MlpConfig config, Rng& rng);

  /// x is B x input_dim.
  Tensor<T> forward(const Tensor<T>& x) const;

  const MlpConfig& config() const { return config_; }
  std::size_t layer_count() const { return weights_.size(); }
  /// Layer l weight is fan_in x fan_out (applied as x * W).
  Tensor<T>& weight(std::size_t l) { return weights_.at(l); }
  Tensor<T>& bias(std::size_t l) { return biases_.at(l); }
  const Tensor<T>& weight(std::size_t l) const { return weights_.at(l); }
  const Tensor<T>& bias(std::size_t l) const { return biases_.at(l); }

  /// Appends "<prefix>.layer<l>.weight" / ".bias" in layer order.
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

 private:
  MlpConfig config_;
  std::vector<Tensor<T>> weights_;
  std::vector<Tensor<T>> biases_;
};

}  // namespace frebis
