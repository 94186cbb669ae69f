#include "frebis/field.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "frebis/errors.hpp"
#include "json_util.hpp"

namespace frebis {

using detail::check_keys;
using detail::read_opt;

const char* convention_name(DensityConvention c) {
  return c == DensityConvention::inside_dense ? "inside_dense" : "paper_literal";
}
DensityConvention parse_convention(const std::string& s) {
  if (s == "inside_dense") return DensityConvention::inside_dense;
  if (s == "paper_literal") return DensityConvention::paper_literal;
  throw ValidationError("unknown density convention '" + s + "'");
}
const char* weighting_name(WeightingMode m) { return m == WeightingMode::redundancy ? "redundancy" : "average"; }
WeightingMode parse_weighting(const std::string& s) {
  if (s == "redundancy") return WeightingMode::redundancy;
  if (s == "average") return WeightingMode::average;
  throw ValidationError("unknown weighting mode '" + s + "'");
}
const char* architecture_name(Architecture a) { return a == Architecture::stratified ? "stratified" : "single"; }
Architecture parse_architecture(const std::string& s) {
  if (s == "stratified") return Architecture::stratified;
  if (s == "single") return Architecture::single;
  throw ValidationError("unknown architecture '" + s + "'");
}
const char* normal_mode_name(NormalMode m) { return m == NormalMode::detached ? "detached" : "differentiable"; }
NormalMode parse_normal_mode(const std::string& s) {
  if (s == "detached") return NormalMode::detached;
  if (s == "differentiable") return NormalMode::differentiable;
  throw ValidationError("unknown normal mode '" + s + "'");
}

namespace {

// Laplace(0, beta) CDF.
double laplace_cdf(double s, double beta) {
  return s <= 0 ? 0.5 * std::exp(s / beta) : 1.0 - 0.5 * std::exp(-s / beta);
}

}  // namespace

double sdf_to_density(double d, const DensityParams& p, DensityConvention convention) {
  const double s = convention == DensityConvention::inside_dense ? -d : d;
  return p.alpha * laplace_cdf(s, p.beta);
}

// ---- config -------------------------------------------------------------------

void ModelConfig::validate() const {
  bands.validate();
  if (encoder.hidden_width < 1 || encoder.feature_width < 1) throw ValidationError("encoder widths must be >= 1");
  for (int l : encoder.layers) {
    if (l < 1) throw ValidationError("encoder layer count must be >= 1");
  }
  if (!(tau > 0)) throw ValidationError("tau must be positive");
  if (single_layers < 1 || single_hidden_width < 0) throw ValidationError("invalid single-encoder shape");
  if (decoder_layers < 1 || decoder_width < 1 || appearance_width < 1) throw ValidationError("invalid decoder shape");
  if (color_layers < 1 || color_width < 1) throw ValidationError("invalid color network shape");
  if (!(alpha_init > 0) || !(beta_init > 0)) throw ValidationError("alpha and beta must be positive");
  if (!(gradient_eps > 0)) throw ValidationError("gradient_eps must be positive");
  if (!(decoder_output_weight_scale >= 0)) throw ValidationError("decoder_output_weight_scale must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {
      {"precision", precision_name(precision)},
      {"architecture", architecture_name(architecture)},
      {"bands",
       {{"total_levels", bands.total_levels},
        {"assignment", bands.counts},
        {"include_raw_coords", bands.include_raw_coords}}},
      {"encoder",
       {{"layers", encoder.layers},
        {"hidden_width", encoder.hidden_width},
        {"feature_width", encoder.feature_width},
        {"activation", activation_name(encoder.activation)},
        {"softplus_sharpness", encoder.sharpness}}},
      {"weighting", weighting_name(weighting)},
      {"tau", tau},
      {"single_encoder", {{"layers", single_layers}, {"hidden_width", single_hidden_width}}},
      {"decoder",
       {{"layers", decoder_layers},
        {"width", decoder_width},
        {"appearance_width", appearance_width},
        {"output_bias", decoder_output_bias},
        {"output_weight_scale", decoder_output_weight_scale}}},
      {"color", {{"layers", color_layers}, {"width", color_width}, {"activation", activation_name(color_activation)}}},
      {"density", {{"alpha_init", alpha_init}, {"beta_init", beta_init}, {"convention", convention_name(convention)}}},
      {"gradient_eps", gradient_eps},
      {"normal_mode", normal_mode_name(normal_mode)},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  const std::string where = "model";
  check_keys(j,
             {"precision", "architecture", "bands", "encoder", "weighting", "tau", "single_encoder", "decoder",
              "color", "density", "gradient_eps", "normal_mode"},
             where);
  ModelConfig c;
  std::string s;
  if (j.contains("precision")) c.precision = parse_precision(j["precision"].get<std::string>());
  if (j.contains("architecture")) c.architecture = parse_architecture(j["architecture"].get<std::string>());
  if (j.contains("bands")) {
    const auto& b = j["bands"];
    check_keys(b, {"total_levels", "assignment", "include_raw_coords"}, where + ".bands");
    read_opt(b, "total_levels", c.bands.total_levels, where + ".bands");
    read_opt(b, "include_raw_coords", c.bands.include_raw_coords, where + ".bands");
    if (b.contains("assignment")) {
      read_opt(b, "assignment", c.bands.counts, where + ".bands");
    } else if (b.contains("total_levels")) {
      // even split with any remainder going to the lower bands
      const int L = c.bands.total_levels;
      c.bands.counts = {L / 3 + (L % 3 > 0), L / 3 + (L % 3 > 1), L / 3};
    }
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    const std::string w = where + ".encoder";
    check_keys(e, {"layers", "hidden_width", "feature_width", "activation", "softplus_sharpness"}, w);
    if (e.contains("layers")) {
      if (e["layers"].is_number_integer()) {
        c.encoder.layers.fill(e["layers"].get<int>());
      } else {
        read_opt(e, "layers", c.encoder.layers, w);
      }
    }
    read_opt(e, "hidden_width", c.encoder.hidden_width, w);
    read_opt(e, "feature_width", c.encoder.feature_width, w);
    read_opt(e, "softplus_sharpness", c.encoder.sharpness, w);
    if (e.contains("activation")) c.encoder.activation = parse_activation(e["activation"].get<std::string>());
  }
  if (j.contains("weighting")) c.weighting = parse_weighting(j["weighting"].get<std::string>());
  read_opt(j, "tau", c.tau, where);
  if (j.contains("single_encoder")) {
    const auto& e = j["single_encoder"];
    check_keys(e, {"layers", "hidden_width"}, where + ".single_encoder");
    read_opt(e, "layers", c.single_layers, where + ".single_encoder");
    read_opt(e, "hidden_width", c.single_hidden_width, where + ".single_encoder");
  }
  if (j.contains("decoder")) {
    const auto& d = j["decoder"];
    const std::string w = where + ".decoder";
    check_keys(d, {"layers", "width", "appearance_width", "output_bias", "output_weight_scale"}, w);
    read_opt(d, "layers", c.decoder_layers, w);
    read_opt(d, "width", c.decoder_width, w);
    read_opt(d, "appearance_width", c.appearance_width, w);
    read_opt(d, "output_bias", c.decoder_output_bias, w);
    read_opt(d, "output_weight_scale", c.decoder_output_weight_scale, w);
  }
  if (j.contains("color")) {
    const auto& d = j["color"];
    const std::string w = where + ".color";
    check_keys(d, {"layers", "width", "activation"}, w);
    read_opt(d, "layers", c.color_layers, w);
    read_opt(d, "width", c.color_width, w);
    if (d.contains("activation")) c.color_activation = parse_activation(d["activation"].get<std::string>());
  }
  if (j.contains("density")) {
    const auto& d = j["density"];
    const std::string w = where + ".density";
    check_keys(d, {"alpha_init", "beta_init", "convention"}, w);
    read_opt(d, "alpha_init", c.alpha_init, w);
    read_opt(d, "beta_init", c.beta_init, w);
    if (d.contains("convention")) c.convention = parse_convention(d["convention"].get<std::string>());
  }
  read_opt(j, "gradient_eps", c.gradient_eps, where);
  if (j.contains("normal_mode")) c.normal_mode = parse_normal_mode(j["normal_mode"].get<std::string>());
  c.validate();
  return c;
}

// ---- free functions -------------------------------------------------------------

template <class T>
Tensor<T> spatial_gradient(const SdfFunction<T>& sdf, std::span<const T> points, T eps) {
  if (!(eps > T(0))) throw ValidationError("finite-difference step must be positive");
  if (points.size() % 3 != 0) throw ShapeError("spatial_gradient: points must be B x 3");
  const std::size_t n = points.size() / 3;
  // Blocks of B rows: +x, -x, +y, -y, +z, -z.
  std::vector<T> shifted(6 * points.size());
  for (std::size_t axis = 0; axis < 3; ++axis) {
    for (int sign = 0; sign < 2; ++sign) {
      T* block = shifted.data() + (2 * axis + static_cast<std::size_t>(sign)) * 3 * n;
      std::copy(points.begin(), points.end(), block);
      const T delta = sign == 0 ? eps : -eps;
      for (std::size_t p = 0; p < n; ++p) block[3 * p + axis] += delta;
    }
  }
  const auto values = sdf(shifted);
  if (values.rows() != 6 * n || values.cols() != 1) throw ShapeError("SDF evaluator must return B x 1");
  std::vector<Tensor<T>> axes;
  axes.reserve(3);
  const T inv = T(1) / (T(2) * eps);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    axes.push_back(scale(sub(slice_rows(values, 2 * axis * n, n), slice_rows(values, (2 * axis + 1) * n, n)), inv));
  }
  return concat_cols<T>(axes);
}

template <class T>
Tensor<T> density(const Tensor<T>& sdf, const Tensor<T>& log_alpha, const Tensor<T>& log_beta,
                  DensityConvention convention) {
  const T alpha = std::exp(log_alpha.item());
  const T beta = std::exp(log_beta.item());
  const T sign = convention == DensityConvention::inside_dense ? T(-1) : T(1);
  const auto d = sdf.values();
  std::vector<T> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const T s = sign * d[i];
    const T half = T(0.5) * std::exp(-std::abs(s) / beta);
    out[i] = alpha * (s <= T(0) ? half : T(1) - half);
    if (!std::isfinite(out[i])) throw NumericError("non-finite density");
  }
  return Tensor<T>::make_result(
      sdf.shape(), std::move(out), {sdf, log_alpha, log_beta},
      [alpha, beta, sign](const detail::Node<T>& self, std::span<Tensor<T>> parents) {
        const auto d = parents[0].values();
        T g_log_alpha = 0;
        T g_log_beta = 0;
        std::span<T> gd = parents[0].requires_grad() ? parents[0].grad_buffer() : std::span<T>();
        for (std::size_t i = 0; i < d.size(); ++i) {
          const T g = self.grad[i];
          const T s = sign * d[i];
          const T pdf = std::exp(-std::abs(s) / beta) / (T(2) * beta);
          if (!gd.empty()) gd[i] += g * alpha * pdf * sign;
          g_log_alpha += g * self.value[i];      // d sigma / d log(alpha) = sigma
          g_log_beta += g * (-alpha * s * pdf);  // d sigma / d log(beta) = -alpha s pdf(s)
        }
        if (parents[1].requires_grad()) parents[1].grad_buffer()[0] += g_log_alpha;
        if (parents[2].requires_grad()) parents[2].grad_buffer()[0] += g_log_beta;
      });
}

int matched_single_width(const ModelConfig& config) {
  const auto dims = banded_dims(config.bands);
  std::size_t target = 0;
  for (Band b : kBands) target += config.encoder.band_config(b, dims[static_cast<std::size_t>(b)]).parameter_count();
  MlpConfig dec;
  dec.layers = config.decoder_layers;
  dec.hidden_width = config.decoder_width;
  dec.output_width = 1 + config.appearance_width;
  dec.input_dim = 3 * static_cast<std::size_t>(config.encoder.feature_width);
  target += dec.parameter_count();

  dec.input_dim = static_cast<std::size_t>(config.encoder.feature_width);
  const std::size_t dec_single = dec.parameter_count();
  MlpConfig enc;
  enc.layers = config.single_layers;
  enc.output_width = config.encoder.feature_width;
  enc.input_dim = static_cast<std::size_t>(6 * config.bands.total_levels) + (config.bands.include_raw_coords ? 3 : 0);
  int best = 1;
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (int h = 1; h <= 8192; ++h) {
    enc.hidden_width = h;
    const std::size_t total = enc.parameter_count() + dec_single;
    const std::size_t gap = total > target ? total - target : target - total;
    if (gap < best_gap) {
      best_gap = gap;
      best = h;
    }
    if (total > target) break;
  }
  return best;
}

// ---- FieldModel -----------------------------------------------------------------

namespace {

BandSpec full_band_spec(const BandSpec& bands) {
  BandSpec all = bands;
  all.counts = {0, bands.total_levels, 0};
  return all;
}

}  // namespace

template <class T>
FieldModel<T>::FieldModel(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  std::size_t decoder_in = 0;
  if (config_.architecture == Architecture::stratified) {
    encoders_ = EncoderTriple<T>(config_.encoder, config_.bands, rng);
    decoder_in = 3 * static_cast<std::size_t>(config_.encoder.feature_width);
  } else {
    MlpConfig enc = config_.encoder.band_config(Band::mid, banded_dims(full_band_spec(config_.bands))[1]);
    enc.layers = config_.single_layers;
    enc.hidden_width = config_.single_hidden_width > 0 ? config_.single_hidden_width : matched_single_width(config_);
    config_.single_hidden_width = enc.hidden_width;
    single_ = Mlp<T>(enc, rng);
    decoder_in = static_cast<std::size_t>(config_.encoder.feature_width);
  }

  MlpConfig dec;
  dec.layers = config_.decoder_layers;
  dec.hidden_width = config_.decoder_width;
  dec.output_width = 1 + config_.appearance_width;
  dec.activation = config_.encoder.activation;
  dec.sharpness = config_.encoder.sharpness;
  dec.input_dim = decoder_in;
  decoder_ = Mlp<T>(dec, rng);
  // Small output weights plus a positive SDF bias: the initial field is close
  // to a constant positive value.
  const std::size_t last = decoder_.layer_count() - 1;
  for (auto& w : decoder_.weight(last).mutable_values()) w = static_cast<T>(w * config_.decoder_output_weight_scale);
  decoder_.bias(last).mutable_values()[0] = static_cast<T>(config_.decoder_output_bias);

  MlpConfig col;
  col.layers = config_.color_layers;
  col.hidden_width = config_.color_width;
  col.output_width = 3;
  col.activation = config_.color_activation;
  col.sharpness = config_.encoder.sharpness;
  col.input_dim = static_cast<std::size_t>(config_.appearance_width) + 9;
  color_ = Mlp<T>(col, rng);

  log_alpha_ = Tensor<T>::parameter({}, {static_cast<T>(std::log(config_.alpha_init))});
  log_beta_ = Tensor<T>::parameter({}, {static_cast<T>(std::log(config_.beta_init))});
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> FieldModel<T>::decode(const FeatureBatch<T>& weighted) const {
  if (config_.architecture != Architecture::stratified) {
    throw std::logic_error("decode(FeatureBatch) is only defined for the stratified architecture");
  }
  const std::vector<Tensor<T>> cols(weighted.columns.begin(), weighted.columns.end());
  const auto out = decoder_.forward(concat_cols<T>(cols));
  const auto a = static_cast<std::size_t>(config_.appearance_width);
  return {slice_cols(out, 0, 1), slice_cols(out, 1, a)};
}

template <class T>
FieldOutput<T> FieldModel<T>::evaluate(std::span<const T> points, const FieldQuery& query) const {
  FieldOutput<T> out;
  const auto a = static_cast<std::size_t>(config_.appearance_width);
  if (config_.architecture == Architecture::single) {
    if (query.isolate_band) throw ValidationError("band isolation needs the stratified architecture");
    const auto banded = encode_batch<T>(points, full_band_spec(config_.bands));
    const auto h = decoder_.forward(single_.forward(banded[1]));
    out.sdf = slice_cols(h, 0, 1);
    out.appearance = slice_cols(h, 1, a);
    return out;
  }
  const auto banded = encode_batch<T>(points, config_.bands);
  out.features = encode_features(encoders_, banded);

  FeatureBatch<T> weighted;
  if (query.isolate_band && query.per_band_mode == PerBandMode::unweighted) {
    weighted = out.features;
  } else if (config_.weighting == WeightingMode::redundancy) {
    out.weighting = redundancy_weighting(out.features, static_cast<T>(config_.tau));
    weighted = out.weighting->weighted;
  } else {
    weighted = average_weighting(out.features);
  }
  if (query.isolate_band) {
    for (Band b : kBands) {
      if (b != *query.isolate_band) weighted[b] = Tensor<T>::zeros(weighted[b].shape());
    }
  }
  std::tie(out.sdf, out.appearance) = decode(weighted);
  return out;
}

template <class T>
Tensor<T> FieldModel<T>::sdf(std::span<const T> points, const FieldQuery& query) const {
  return evaluate(points, query).sdf;
}

template <class T>
SdfFunction<T> FieldModel<T>::sdf_function(const FieldQuery& query) const {
  return [this, query](std::span<const T> pts) { return sdf(pts, query); };
}

template <class T>
Tensor<T> FieldModel<T>::density(const Tensor<T>& sdf) const {
  return frebis::density(sdf, log_alpha_, log_beta_, config_.convention);
}

template <class T>
Tensor<T> FieldModel<T>::spatial_gradient(std::span<const T> points) const {
  return frebis::spatial_gradient<T>(sdf_function(), points, static_cast<T>(config_.gradient_eps));
}

template <class T>
Tensor<T> FieldModel<T>::color(const Tensor<T>& appearance, const Tensor<T>& points, const Tensor<T>& view_dirs,
                               const Tensor<T>& normals) const {
  const auto norm = sqrt(clamp_min(row_sum(square(normals)), static_cast<T>(1e-16)));
  const std::vector<Tensor<T>> parts{appearance, points, view_dirs, div(normals, norm)};
  return sigmoid(color_.forward(concat_cols<T>(parts)));
}

template <class T>
DensityParams FieldModel<T>::density_params() const {
  return {std::exp(static_cast<double>(log_alpha_.item())), std::exp(static_cast<double>(log_beta_.item()))};
}

template <class T>
std::vector<NamedTensor<T>> FieldModel<T>::named_parameters() const {
  std::vector<NamedTensor<T>> out;
  if (config_.architecture == Architecture::stratified) {
    encoders_.collect(out);
  } else {
    single_.collect("enc_single", out);
  }
  decoder_.collect("decoder", out);
  out.emplace_back("density.log_alpha", log_alpha_);
  out.emplace_back("density.log_beta", log_beta_);
  color_.collect("color", out);
  return out;
}

template <class T>
std::vector<Tensor<T>> FieldModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <class T>
std::size_t FieldModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

template <class T>
void FieldModel<T>::save(Checkpoint& ckpt) const {
  for (const auto& [name, t] : named_parameters()) ckpt.entries.push_back(make_entry(name, t));
}

template <class T>
void FieldModel<T>::load(const Checkpoint& ckpt) {
  for (auto& [name, t] : named_parameters()) {
    const auto& e = ckpt.find(name);
    if (e.shape != t.shape()) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_string(e.shape) + ", model expects " +
                    shape_string(t.shape()));
    }
    auto dst = Tensor<T>(t).mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
  }
}

template class FieldModel<float>;
template class FieldModel<double>;
template Tensor<float> spatial_gradient(const SdfFunction<float>&, std::span<const float>, float);
template Tensor<double> spatial_gradient(const SdfFunction<double>&, std::span<const double>, double);
template Tensor<float> density(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, DensityConvention);
template Tensor<double> density(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                DensityConvention);

}  // namespace frebis
