#include "frebis/mlp.hpp"

#include <cmath>

#include "frebis/errors.hpp"

namespace frebis {

const char* activation_name(Activation a) { return a == Activation::softplus ? "softplus" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "softplus") return Activation::softplus;
  if (name == "relu") return Activation::relu;
  throw ValidationError("unknown activation '" + name + "'");
}

void MlpConfig::validate() const {
  if (layers < 1) throw ValidationError("MLP layer count must be >= 1");
  if (hidden_width < 1 || output_width < 1) throw ValidationError("MLP widths must be >= 1");
  if (input_dim < 1) throw ValidationError("MLP input dimension must be >= 1");
  if (activation == Activation::softplus && !(sharpness > 0)) {
    throw ValidationError("softplus sharpness must be positive");
  }
}

std::size_t MlpConfig::parameter_count() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (int l = 0; l < layers; ++l) {
    const std::size_t out = l + 1 == layers ? output_width : hidden_width;
    total += in * out + out;
    in = out;
  }
  return total;
}

template <class T>
Mlp<T>::Mlp(MlpConfig config, Rng& rng) : config_(config) {
  config_.validate();
  std::size_t in = config_.input_dim;
  for (int l = 0; l < config_.layers; ++l) {
    const std::size_t out = l + 1 == config_.layers ? static_cast<std::size_t>(config_.output_width)
                                                    : static_cast<std::size_t>(config_.hidden_width);
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<T> w(in * out);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    weights_.push_back(Tensor<T>::parameter({in, out}, std::move(w)));
    biases_.push_back(Tensor<T>::parameter({1, out}, std::vector<T>(out, T(0))));
    in = out;
  }
}

template <class T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) const {
  if (x.cols() != config_.input_dim) {
    throw ShapeError("MLP expects input width " + std::to_string(config_.input_dim) + ", got " +
                     std::to_string(x.cols()));
  }
  Tensor<T> h = x;
  const T s = static_cast<T>(config_.sharpness);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = add(matmul(h, weights_[l]), biases_[l]);
    if (l + 1 < weights_.size()) {
      h = config_.activation == Activation::softplus ? softplus(h, s) : relu(h);
    }
  }
  return h;
}

template <class T>
void Mlp<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.emplace_back(prefix + ".layer" + std::to_string(l) + ".weight", weights_[l]);
    out.emplace_back(prefix + ".layer" + std::to_string(l) + ".bias", biases_[l]);
  }
}

template class Mlp<float>;
template class Mlp<double>;

}  // namespace frebis
