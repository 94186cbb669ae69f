#pragma once

#include <array>

#include "frebis/encoding.hpp"
#include "frebis/mlp.hpp"

namespace frebis {

/// Batched feature matrix: for each of B points, F = [f_low, f_mid, f_high].
/// Column b of every point's F is row p of columns[b] (each B x width).
template <class T>
struct FeatureBatch {
  std::array<Tensor<T>, 3> columns;

  Tensor<T>& operator[](Band b) { return columns[static_cast<std::size_t>(b)]; }
  const Tensor<T>& operator[](Band b) const { return columns[static_cast<std::size_t>(b)]; }
  std::size_t points() const { return columns[0].rows(); }
  std::size_t width() const { return columns[0].cols(); }
};

/// Per-band layer counts let depth variants such as (4, 5, 6) be expressed.
struct EncoderConfig {
  std::array<int, 3> layers{6, 6, 6};
  int hidden_width = 256;
  int feature_width = 256;
  Activation activation = Activation::softplus;
  double sharpness = 100.0;

  MlpConfig band_config(Band b, std::size_t input_dim) const;
};

/// Three independent encoders, one per frequency band.
template <class T>
class EncoderTriple {
 public:
  EncoderTriple() = default;
  EncoderTriple(const EncoderConfig& config, const BandSpec& bands, Rng& rng);

  Mlp<T>& encoder(Band b) { return mlps_[static_cast<std::size_t>(b)]; }
  const Mlp<T>& encoder(Band b) const { return mlps_[static_cast<std::size_t>(b)]; }

  /// Parameter names: enc_low.*, enc_mid.*, enc_high.*
  void collect(std::vector<NamedTensor<T>>& out) const;

 private:
  std::array<Mlp<T>, 3> mlps_;
};

/// F for every point of the batch; the banded inputs come from encode_batch.
template <class T>
FeatureBatch<T> encode_features(const EncoderTriple<T>& enc, const std::array<Tensor<T>, 3>& banded);

}  // namespace frebis
