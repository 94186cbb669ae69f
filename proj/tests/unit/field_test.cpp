#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "frebis/errors.hpp"
#include "frebis/field.hpp"
#include "gradcheck.hpp"

namespace frebis {
namespace {

using TD = Tensor<double>;

ModelConfig tiny_config() {
  ModelConfig c;
  c.precision = Precision::f64;
  c.encoder.layers = {2, 2, 2};
  c.encoder.hidden_width = 8;
  c.encoder.feature_width = 6;
  c.decoder_width = 8;
  c.appearance_width = 4;
  c.color_layers = 2;
  c.color_width = 8;
  c.single_layers = 3;
  return c;
}

std::vector<double> random_points(Rng& rng, std::size_t n, double r = 0.8) {
  std::vector<double> p(3 * n);
  for (auto& v : p) v = rng.uniform(-r, r);
  return p;
}

TEST(Density, HalfAlphaAtSurface) {
  for (auto conv : {DensityConvention::inside_dense, DensityConvention::paper_literal}) {
    EXPECT_DOUBLE_EQ(sdf_to_density(0.0, {10.0, 0.1}, conv), 5.0);
  }
}

TEST(Density, KnownValueOutside) {
  EXPECT_NEAR(sdf_to_density(0.1, {1.0, 0.1}, DensityConvention::inside_dense), 0.5 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(sdf_to_density(0.1, {1.0, 0.1}, DensityConvention::inside_dense), 0.18394, 1e-5);
  EXPECT_NEAR(sdf_to_density(-0.1, {1.0, 0.1}, DensityConvention::paper_literal), 0.18394, 1e-5);
}

TEST(Density, LimitsAndMonotonicity) {
  const DensityParams p{3.0, 0.05};
  EXPECT_NEAR(sdf_to_density(-10, p, DensityConvention::inside_dense), 3.0, 1e-12);
  EXPECT_NEAR(sdf_to_density(10, p, DensityConvention::inside_dense), 0.0, 1e-12);
  double prev = sdf_to_density(-2, p, DensityConvention::inside_dense);
  for (double d = -2; d <= 2; d += 0.01) {
    const double s = sdf_to_density(d, p, DensityConvention::inside_dense);
    EXPECT_LE(s, prev + 1e-15);
    prev = s;
  }
}

TEST(Density, TensorOpMatchesScalar) {
  const auto la = TD::parameter({}, {std::log(2.0)});
  const auto lb = TD::parameter({}, {std::log(0.2)});
  const std::vector<double> d{-0.5, -0.01, 0.0, 0.02, 0.7};
  const auto s = density(TD::from({5, 1}, d), la, lb, DensityConvention::inside_dense);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_NEAR(s.at(i, 0), sdf_to_density(d[i], {2.0, 0.2}, DensityConvention::inside_dense), 1e-14);
  }
}

TEST(Density, GradientMatchesFiniteDifferences) {
  for (auto conv : {DensityConvention::inside_dense, DensityConvention::paper_literal}) {
    auto la = TD::parameter({}, {std::log(3.0)});
    auto lb = TD::parameter({}, {std::log(0.15)});
    auto d = TD::parameter({6, 1}, {-0.4, -0.1, -0.02, 0.03, 0.2, 0.5});
    const auto w = TD::from({6, 1}, {0.3, -1.2, 0.7, 1.1, -0.4, 0.9});
    const auto loss = [&] { return sum(mul(density(d, la, lb, conv), w)); };
    EXPECT_LT(testing::check_gradient(loss, d, 1e-6).max_rel_error, 1e-6);
    EXPECT_LT(testing::check_gradient(loss, la, 1e-6).max_rel_error, 1e-6);
    EXPECT_LT(testing::check_gradient(loss, lb, 1e-6).max_rel_error, 1e-6);
  }
}

SdfFunction<double> analytic_sphere(double r) {
  return [r](std::span<const double> pts) {
    std::vector<double> out(pts.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::sqrt(pts[3 * i] * pts[3 * i] + pts[3 * i + 1] * pts[3 * i + 1] + pts[3 * i + 2] * pts[3 * i + 2]) - r;
    }
    return TD::from({out.size(), 1}, out);
  };
}

TEST(SpatialGradient, AnalyticSphere) {
  Rng rng(21);
  auto pts = random_points(rng, 50, 1.0);
  const auto g = spatial_gradient<double>(analytic_sphere(0.5), pts, 1e-3);
  for (std::size_t i = 0; i < 50; ++i) {
    const double n = std::sqrt(pts[3 * i] * pts[3 * i] + pts[3 * i + 1] * pts[3 * i + 1] + pts[3 * i + 2] * pts[3 * i + 2]);
    if (n < 0.1) continue;
    for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(g.at(i, a), pts[3 * i + a] / n, 1e-4);
  }
}

TEST(SpatialGradient, ExactOnLinearField) {
  const SdfFunction<double> lin = [](std::span<const double> p) {
    std::vector<double> out(p.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.3 * p[3 * i] - 2.0 * p[3 * i + 1] + 0.5 * p[3 * i + 2] + 1.0;
    return TD::from({out.size(), 1}, out);
  };
  const std::vector<double> pts{0.1, 0.2, 0.3, -0.5, 0.4, 0.9};
  const auto g = spatial_gradient<double>(lin, pts, 1e-3);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(g.at(i, 0), 0.3, 1e-9);
    EXPECT_NEAR(g.at(i, 1), -2.0, 1e-9);
    EXPECT_NEAR(g.at(i, 2), 0.5, 1e-9);
  }
}

TEST(SpatialGradient, ConstantFieldIsZero) {
  const SdfFunction<double> c = [](std::span<const double> p) { return TD::full({p.size() / 3, 1}, 0.7); };
  const std::vector<double> pts{0.1, 0.2, 0.3};
  const auto g = spatial_gradient<double>(c, pts, 1e-3);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(g.at(0, a), 0.0);
}

TEST(SpatialGradient, SecondOrderConvergence) {
  const SdfFunction<double> f = [](std::span<const double> p) {
    std::vector<double> out(p.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(3 * p[3 * i]) * std::cos(2 * p[3 * i + 1]);
    return TD::from({out.size(), 1}, out);
  };
  const std::vector<double> pts{0.3, -0.2, 0.1};
  const double exact = 3 * std::cos(0.9) * std::cos(-0.4);
  const double e1 = std::abs(spatial_gradient<double>(f, pts, 1e-2).at(0, 0) - exact);
  const double e2 = std::abs(spatial_gradient<double>(f, pts, 5e-3).at(0, 0) - exact);
  EXPECT_NEAR(e1 / e2, 4.0, 0.1);
}

TEST(SpatialGradient, RejectsNonPositiveStep) {
  const std::vector<double> pts{0, 0, 0};
  EXPECT_THROW(spatial_gradient<double>(analytic_sphere(1), pts, 0.0), ValidationError);
}

TEST(FieldModel, InitialSdfIsNearConstantBias) {
  Rng rng(31);
  const FieldModel<double> m(tiny_config(), rng);
  auto pts = random_points(rng, 20);
  const auto s = m.sdf(pts);
  ASSERT_EQ(s.shape(), (Shape{20, 1}));
  for (double v : s.values()) EXPECT_NEAR(v, 0.3, 0.05);
}

TEST(FieldModel, ZeroOutputWeightsGiveExactBias) {
  Rng rng(32);
  FieldModel<double> m(tiny_config(), rng);
  auto& dec = m.decoder();
  for (auto& w : dec.weight(dec.layer_count() - 1).mutable_values()) w = 0;
  auto pts = random_points(rng, 5);
  const auto s = m.sdf(pts);
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(FieldModel, DecodeConcatenatesLowMidHigh) {
  Rng rng(33);
  const FieldModel<double> m(tiny_config(), rng);
  FeatureBatch<double> f;
  std::vector<double> joined;
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.uniform(-1, 1);
    f.columns[b] = TD::from({1, 6}, v);
    joined.insert(joined.end(), v.begin(), v.end());
  }
  const auto direct = m.decoder().forward(TD::from({1, 18}, joined));
  const auto [sdf, app] = m.decode(f);
  EXPECT_DOUBLE_EQ(sdf.item(), direct.at(0, 0));
  ASSERT_EQ(app.shape(), (Shape{1, 4}));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(app.at(0, k), direct.at(0, k + 1));
}

TEST(FieldModel, IsolatedBandZeroesOtherColumns) {
  Rng rng(34);
  const FieldModel<double> m(tiny_config(), rng);
  auto pts = random_points(rng, 4);
  const auto full = m.evaluate(pts);
  for (Band keep : kBands) {
    FeatureBatch<double> manual = full.features;
    for (Band b : kBands) {
      if (b != keep) manual[b] = TD::zeros(manual[b].shape());
    }
    const auto expect = m.decode(manual).first;
    FieldQuery q;
    q.isolate_band = keep;
    const auto got = m.sdf(pts, q);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got.at(i, 0), expect.at(i, 0), 1e-14);

    q.per_band_mode = PerBandMode::weighted;
    FeatureBatch<double> wmanual = full.weighting->weighted;
    for (Band b : kBands) {
      if (b != keep) wmanual[b] = TD::zeros(wmanual[b].shape());
    }
    const auto wexpect = m.decode(wmanual).first;
    const auto wgot = m.sdf(pts, q);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(wgot.at(i, 0), wexpect.at(i, 0), 1e-14);
  }
}

// Output scale 1 and random biases keep every feature column well away from
// the norm guard, where the weighting is legitimately ill-conditioned.
FieldModel<double> gradcheck_model(Rng& rng) {
  auto cfg = tiny_config();
  cfg.decoder_output_weight_scale = 1.0;
  FieldModel<double> m(cfg, rng);
  for (auto& [name, t] : m.named_parameters()) {
    if (name.find(".bias") == std::string::npos) continue;
    for (auto& v : Tensor<double>(t).mutable_values()) v = rng.uniform(-0.5, 0.5);
  }
  return m;
}

TEST(FieldModel, SdfGradientMatchesFiniteDifferences) {
  Rng rng(35);
  const auto m = gradcheck_model(rng);
  auto pts = random_points(rng, 3);
  const auto loss = [&] { return sum(m.sdf(pts)); };
  for (const auto& [name, t] : m.named_parameters()) {
    if (name.rfind("color", 0) == 0 || name.rfind("density", 0) == 0) continue;
    const auto r = testing::check_gradient(loss, t, 1e-6, 1e-5);
    EXPECT_LT(r.max_rel_error, 1e-4) << name << " abs " << r.max_abs_error;
  }
}

TEST(FieldModel, DifferentiableSpatialGradient) {
  Rng rng(36);
  const auto m = gradcheck_model(rng);
  auto pts = random_points(rng, 2);
  const auto loss = [&] { return sum(square(m.spatial_gradient(pts))); };
  const auto params = m.named_parameters();
  const auto r = testing::check_gradient(loss, params.front().second, 1e-6, 1e-2);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(FieldModel, ColorIsHalfWithZeroOutputLayer) {
  Rng rng(37);
  FieldModel<double> m(tiny_config(), rng);
  auto& c = m.color_network();
  for (auto& w : c.weight(c.layer_count() - 1).mutable_values()) w = 0;
  const auto app = TD::full({2, 4}, 0.3);
  const auto x = TD::from_rows({{0.1, 0.2, 0.3}, {0.0, 0.0, 0.5}});
  const auto v = TD::from_rows({{0, 0, 1}, {1, 0, 0}});
  const auto n = TD::from_rows({{0, 2, 0}, {0, 0, 0}});
  const auto rgb = m.color(app, x, v, n);
  ASSERT_EQ(rgb.shape(), (Shape{2, 3}));
  for (double val : rgb.values()) EXPECT_DOUBLE_EQ(val, 0.5);
}

TEST(FieldModel, ColorNormalizesNormals) {
  Rng rng(38);
  const FieldModel<double> m(tiny_config(), rng);
  const auto app = TD::full({1, 4}, 0.3);
  const auto x = TD::from_rows({{0.1, 0.2, 0.3}});
  const auto v = TD::from_rows({{0, 0, 1}});
  const auto a = m.color(app, x, v, TD::from_rows({{0, 1, 0}}));
  const auto b = m.color(app, x, v, TD::from_rows({{0, 7.5, 0}}));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a.at(0, k), b.at(0, k), 1e-14);
}

TEST(FieldModel, SaveLoadRoundTrip) {
  Rng rng(39);
  const FieldModel<double> a(tiny_config(), rng);
  Checkpoint ck;
  a.save(ck);
  Rng other(40);
  FieldModel<double> b(tiny_config(), other);
  b.load(ck);
  auto pts = random_points(rng, 5);
  const auto sa = a.sdf(pts);
  const auto sb = b.sdf(pts);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(sa.at(i, 0), sb.at(i, 0));
}

TEST(FieldModel, LoadRejectsShapeMismatch) {
  Rng rng(41);
  const FieldModel<double> a(tiny_config(), rng);
  Checkpoint ck;
  a.save(ck);
  auto cfg = tiny_config();
  cfg.encoder.hidden_width = 9;
  FieldModel<double> b(cfg, rng);
  EXPECT_THROW(b.load(ck), IoError);
}

TEST(FieldModel, ParameterNames) {
  Rng rng(42);
  const FieldModel<double> m(tiny_config(), rng);
  const auto names = m.named_parameters();
  EXPECT_EQ(names.front().first, "enc_low.layer0.weight");
  bool alpha = false;
  for (const auto& [n, t] : names) alpha |= n == "density.log_alpha";
  EXPECT_TRUE(alpha);
  EXPECT_EQ(names.back().first, "color.layer1.bias");
}

TEST(FieldModel, DensityScalarsStartAtConfiguredValues) {
  Rng rng(43);
  const FieldModel<double> m(tiny_config(), rng);
  EXPECT_NEAR(m.density_params().alpha, 10.0, 1e-12);
  EXPECT_NEAR(m.density_params().beta, 0.1, 1e-12);
}

std::size_t encoder_decoder_params(const FieldModel<double>& m) {
  std::size_t n = 0;
  for (const auto& [name, t] : m.named_parameters()) {
    if (name.rfind("enc", 0) == 0 || name.rfind("decoder", 0) == 0) n += t.numel();
  }
  return n;
}

TEST(SingleEncoder, MatchesStratifiedParameterCount) {
  Rng rng(44);
  auto cfg = tiny_config();
  const FieldModel<double> strat(cfg, rng);
  cfg.architecture = Architecture::single;
  const FieldModel<double> single(cfg, rng);
  EXPECT_EQ(single.named_parameters().front().first, "enc_single.layer0.weight");
  const double a = static_cast<double>(encoder_decoder_params(strat));
  const double b = static_cast<double>(encoder_decoder_params(single));
  EXPECT_LT(std::abs(a - b) / a, 0.05);
  auto pts = random_points(rng, 3);
  EXPECT_EQ(single.sdf(pts).shape(), (Shape{3, 1}));
}

TEST(SingleEncoder, DefaultWidthIsWiderThanBandEncoders) {
  ModelConfig cfg;
  cfg.architecture = Architecture::single;
  const int h = matched_single_width(cfg);
  EXPECT_GT(h, 256);
  EXPECT_LT(h, 512);
}

TEST(ModelConfig, JsonRoundTrip) {
  auto c = tiny_config();
  c.weighting = WeightingMode::average;
  c.convention = DensityConvention::paper_literal;
  c.bands.counts = {1, 2, 3};
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(ModelConfig, UnknownKeyRejected) {
  auto j = ModelConfig{}.to_json();
  j["encoder"]["depth"] = 3;
  EXPECT_THROW(ModelConfig::from_json(j), ValidationError);
  auto k = ModelConfig{}.to_json();
  k["colour"] = 1;
  EXPECT_THROW(ModelConfig::from_json(k), ValidationError);
}

TEST(ModelConfig, InvalidValuesRejected) {
  auto j = ModelConfig{}.to_json();
  j["tau"] = 0.0;
  EXPECT_THROW(ModelConfig::from_json(j), ValidationError);
  auto k = ModelConfig{}.to_json();
  k["density"]["convention"] = "outside";
  EXPECT_THROW(ModelConfig::from_json(k), ValidationError);
}

}  // namespace
}  // namespace frebis
