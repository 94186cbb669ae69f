#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frebis/checkpoint.hpp"
#include "frebis/encoders.hpp"
#include "frebis/weighting.hpp"

namespace frebis {

/// Which side of the surface is dense.
///  inside_dense:  sigma = alpha * Psi_beta(-d)   (high density where d < 0)
///  paper_literal: sigma = alpha * Psi_beta(d)    (branches as printed)
/// Psi_beta is the CDF of a zero-mean Laplace distribution with scale beta.
enum class DensityConvention { inside_dense, paper_literal };

enum class WeightingMode { redundancy, average };

/// stratified: three band encoders feeding the weighting module.
/// single: one encoder over the full encoding (matched-capacity baseline).
enum class Architecture { stratified, single };

/// How the normal fed to the color network is obtained.
///  detached: central differences evaluated without recording history.
///  differentiable: the same six passes, recorded so the loss flows through.
enum class NormalMode { detached, differentiable };

/// Which encoder columns reach the decoder when a single band is isolated.
///  unweighted: F diag(e_band), weighting bypassed.
///  weighted:   F diag(w) diag(e_band).
enum class PerBandMode { unweighted, weighted };

const char* convention_name(DensityConvention c);
DensityConvention parse_convention(const std::string& s);
const char* weighting_name(WeightingMode m);
WeightingMode parse_weighting(const std::string& s);
const char* architecture_name(Architecture a);
Architecture parse_architecture(const std::string& s);
const char* normal_mode_name(NormalMode m);
NormalMode parse_normal_mode(const std::string& s);

struct DensityParams {
  double alpha = 10.0;
  double beta = 0.1;
};

/// Scalar SDF -> density transform.
double sdf_to_density(double d, const DensityParams& p, DensityConvention convention);

struct ModelConfig {
  Precision precision = Precision::f32;
  Architecture architecture = Architecture::stratified;
  BandSpec bands;
  EncoderConfig encoder;
  WeightingMode weighting = WeightingMode::redundancy;
  double tau = kDefaultTemperature;

  // single-encoder baseline; width 0 means "match the stratified model's
  // parameter count"
  int single_layers = 8;
  int single_hidden_width = 0;

  int decoder_layers = 2;
  int decoder_width = 256;
  int appearance_width = 256;
  double decoder_output_bias = 0.3;
  double decoder_output_weight_scale = 0.01;

  int color_layers = 4;
  int color_width = 256;
  Activation color_activation = Activation::relu;

  double alpha_init = 10.0;
  double beta_init = 0.1;
  DensityConvention convention = DensityConvention::inside_dense;
  double gradient_eps = 1e-3;
  NormalMode normal_mode = NormalMode::detached;

  void validate() const;
  nlohmann::json to_json() const;
  /// Reads keys present in `j` over the defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j);
};

struct FieldQuery {
  std::optional<Band> isolate_band;
  PerBandMode per_band_mode = PerBandMode::unweighted;
};

template <class T>
struct FieldOutput {
  Tensor<T> sdf;         // B x 1
  Tensor<T> appearance;  // B x appearance_width
  FeatureBatch<T> features;                  // raw encoder output (stratified only)
  std::optional<WeightingResult<T>> weighting;  // redundancy mode only
};

/// Batched SDF evaluator: points (B x 3, row-major) -> B x 1.
template <class T>
using SdfFunction = std::function<Tensor<T>(std::span<const T> points)>;

/// Central differences per axis, (d(x + eps e_i) - d(x - eps e_i)) / (2 eps),
/// from one batched evaluation of the 6B perturbed points. The result is
/// differentiable through `sdf` when recording is on. Returns B x 3.
template <class T>
Tensor<T> spatial_gradient(const SdfFunction<T>& sdf, std::span<const T> points, T eps);

/// Differentiable density: sdf is B x 1; log_alpha and log_beta are scalars.
template <class T>
Tensor<T> density(const Tensor<T>& sdf, const Tensor<T>& log_alpha, const Tensor<T>& log_beta,
                  DensityConvention convention);

/// Full parameter bundle: encoders, decoder, density scalars, color network.
template <class T>
class FieldModel {
 public:
  FieldModel() = default;
  FieldModel(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }

  /// Encoders -> weighting -> decoder for a batch of points.
  FieldOutput<T> evaluate(std::span<const T> points, const FieldQuery& query = {}) const;
  Tensor<T> sdf(std::span<const T> points, const FieldQuery& query = {}) const;
  SdfFunction<T> sdf_function(const FieldQuery& query = {}) const;

  /// Decoder alone on an already weighted feature batch (width columns
  /// concatenated low, mid, high). Returns (sdf, appearance).
  std::pair<Tensor<T>, Tensor<T>> decode(const FeatureBatch<T>& weighted) const;

  Tensor<T> density(const Tensor<T>& sdf) const;
  Tensor<T> spatial_gradient(std::span<const T> points) const;

  /// Sigmoid-bounded RGB from appearance (B x A), position, unit view
  /// direction and unnormalized normal (each B x 3).
  Tensor<T> color(const Tensor<T>& appearance, const Tensor<T>& points, const Tensor<T>& view_dirs,
                  const Tensor<T>& normals) const;

  DensityParams density_params() const;
  Tensor<T>& log_alpha() { return log_alpha_; }
  Tensor<T>& log_beta() { return log_beta_; }

  const EncoderTriple<T>& encoders() const { return encoders_; }
  const Mlp<T>& single_encoder() const { return single_; }
  Mlp<T>& decoder() { return decoder_; }
  const Mlp<T>& decoder() const { return decoder_; }
  Mlp<T>& color_network() { return color_; }
  const Mlp<T>& color_network() const { return color_; }

  /// Every trainable tensor with its checkpoint name, in a fixed order.
  std::vector<NamedTensor<T>> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;

  void save(Checkpoint& ckpt) const;
  /// Copies values from a checkpoint; names and shapes must match.
  void load(const Checkpoint& ckpt);

 private:
  ModelConfig config_;
  EncoderTriple<T> encoders_;
  Mlp<T> single_;
  Mlp<T> decoder_;
  Mlp<T> color_;
  Tensor<T> log_alpha_;
  Tensor<T> log_beta_;
};

/// Hidden width for the single-encoder baseline whose encoder + decoder
/// parameter count is closest to the stratified configuration's.
int matched_single_width(const ModelConfig& config);

}  // namespace frebis
