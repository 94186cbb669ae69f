#include "frebis/encoders.hpp"

#include "frebis/errors.hpp"

namespace frebis {

MlpConfig EncoderConfig::band_config(Band b, std::size_t input_dim) const {
  MlpConfig c;
  c.layers = layers[static_cast<std::size_t>(b)];
  c.hidden_width = hidden_width;
  c.output_width = feature_width;
  c.activation = activation;
  c.sharpness = sharpness;
  c.input_dim = input_dim;
  return c;
}

template <class T>
EncoderTriple<T>::EncoderTriple(const EncoderConfig& config, const BandSpec& bands, Rng& rng) {
  const auto dims = banded_dims(bands);
  for (Band b : kBands) {
    const auto i = static_cast<std::size_t>(b);
    mlps_[i] = Mlp<T>(config.band_config(b, dims[i]), rng);
  }
}

template <class T>
void EncoderTriple<T>::collect(std::vector<NamedTensor<T>>& out) const {
  for (Band b : kBands) mlps_[static_cast<std::size_t>(b)].collect(std::string("enc_") + band_name(b), out);
}

template <class T>
FeatureBatch<T> encode_features(const EncoderTriple<T>& enc, const std::array<Tensor<T>, 3>& banded) {
  FeatureBatch<T> f;
  for (Band b : kBands) {
    const auto i = static_cast<std::size_t>(b);
    if (banded[i].cols() != enc.encoder(b).config().input_dim) {
      throw ShapeError(std::string("encoder ") + band_name(b) + " input dimension mismatch");
    }
    f.columns[i] = enc.encoder(b).forward(banded[i]);
  }
  return f;
}

template class EncoderTriple<float>;
template class EncoderTriple<double>;
template FeatureBatch<float> encode_features(const EncoderTriple<float>&, const std::array<Tensor<float>, 3>&);
template FeatureBatch<double> encode_features(const EncoderTriple<double>&, const std::array<Tensor<double>, 3>&);

}  // namespace frebis
