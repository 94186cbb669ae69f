#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "frebis/errors.hpp"
#include "frebis/scenes.hpp"

namespace frebis {
namespace {

namespace fs = std::filesystem;

AnalyticScene unit_sphere() {
  AnalyticScene s;
  s.name = "unit";
  Primitive p;
  p.size = {1, 1, 1};
  s.primitives.push_back(p);
  s.bounding_radius = 1.5;
  return s;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("frebis_scenes_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(SphereTrace, CentralRayHitsPole) {
  const auto s = unit_sphere();
  const Ray ray{{0, 0, 3}, {0, 0, -1}, 0, 10};
  const auto hit = sphere_trace(s, ray);
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR((*hit)[0], 0, 1e-4);
  EXPECT_NEAR((*hit)[1], 0, 1e-4);
  EXPECT_NEAR((*hit)[2], 1, 1e-4);
  EXPECT_LT(std::abs(s.sdf(*hit)), 1e-5);
}

TEST(SphereTrace, GrazingRayMisses) {
  const Ray ray{{1.001, 0, 3}, {0, 0, -1}, 0, 10};
  EXPECT_FALSE(sphere_trace(unit_sphere(), ray).has_value());
}

TEST(SphereTrace, HitPointsLieOnSurface) {
  const auto s = builtin_scene("freq-mix");
  const auto cam = look_at({0.3, -2.5, 1.2}, {0, 0, 0}, {0, 0, 1}, 0.75, 24, 24);
  int hits = 0;
  for (int j = 0; j < 24; ++j) {
    for (int i = 0; i < 24; ++i) {
      const auto hit = sphere_trace(s, pixel_ray(cam, i, j, s.bounding_radius));
      if (!hit) continue;
      ++hits;
      EXPECT_LT(std::abs(s.sdf(*hit)), 1e-5);
    }
  }
  EXPECT_GT(hits, 20);
}

TEST(Scenes, LipschitzBoundHolds) {
  Rng rng(4);
  for (const auto& name : builtin_scene_names()) {
    const auto s = builtin_scene(name);
    for (int n = 0; n < 2000; ++n) {
      const Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const Vec3 y{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const double dist = std::sqrt((x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]) +
                                    (x[2] - y[2]) * (x[2] - y[2]));
      EXPECT_LE(std::abs(s.sdf(x) - s.sdf(y)), s.lipschitz_bound() * dist + 1e-12) << name;
    }
  }
}

TEST(Scenes, ScaledPrimitiveStaysExact) {
  Primitive p;
  p.kind = Primitive::Kind::box;
  p.size = {0.2, 0.3, 0.4};
  p.scale = 2.0;
  EXPECT_NEAR(p.sdf({1.0, 0, 0}), 0.6, 1e-12);
  EXPECT_NEAR(p.sdf({0, 0, 0}), -0.4, 1e-12);
}

TEST(Scenes, UnknownNameListsAlternatives) {
  try {
    builtin_scene("cube");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const auto& name : builtin_scene_names()) EXPECT_NE(msg.find(name), std::string::npos) << msg;
  }
}

TEST(GroundTruth, EmptySceneIsBackground) {
  AnalyticScene s;
  s.background = {0.1, 0.2, 0.3};
  const auto img = render_ground_truth(s, look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 0.7, 16, 12), 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_FLOAT_EQ(img.data[i], (i % 3 == 0) ? 0.1F : (i % 3 == 1) ? 0.2F : 0.3F);
}

TEST(GroundTruth, DeterministicAcrossThreadCounts) {
  const auto s = builtin_scene("torus-checker");
  const auto cam = look_at({2, 1.5, 1.5}, {0, 0, 0}, {0, 0, 1}, 0.75, 40, 32);
  EXPECT_EQ(render_ground_truth(s, cam, 1).data, render_ground_truth(s, cam, 3).data);
}

TEST(GroundTruth, CheckerPeriodAroundPole) {
  // Seen from above, the azimuthal checker of frequency f alternates 2f
  // times around any circle of constant polar angle.
  AnalyticScene s;
  Primitive p;
  p.size = {0.5, 0.5, 0.5};
  p.color.kind = ColorField::Kind::checker;
  p.color.frequency = 4;
  p.color.primary = {0.9, 0.3, 0.1};
  p.color.secondary = {0.1, 0.3, 0.9};
  s.primitives.push_back(p);
  s.light_direction = {0, 0, 1};
  const int n = 96;
  const auto cam = look_at({0, 0, 3}, {0, 0, 0}, {0, 1, 0}, 0.75, n, n);
  const auto img = render_ground_truth(s, cam, 2);
  std::vector<std::pair<double, bool>> ring;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double dx = i + 0.5 - n / 2.0, dy = j + 0.5 - n / 2.0;
      const double r = std::hypot(dx, dy);
      if (r < 6 || r > 14) continue;
      const float* px = img.pixel(i, j);
      ring.emplace_back(std::atan2(dy, dx), px[0] > px[2]);
    }
  }
  std::sort(ring.begin(), ring.end());
  int transitions = 0;
  for (std::size_t k = 0; k < ring.size(); ++k) transitions += ring[k].second != ring[(k + 1) % ring.size()].second;
  EXPECT_EQ(transitions, 8);
}

TEST(Dataset, SplitAndCameras) {
  Rng rng(5);
  DatasetOptions opt;
  opt.width = opt.height = 16;
  const auto d = make_dataset(builtin_scene("sphere"), opt, rng);
  EXPECT_EQ(d.views.size(), 20u);
  EXPECT_EQ(d.split(false).size(), 18u);
  EXPECT_EQ(d.split(true).size(), 2u);
  for (const auto& v : d.views) {
    const auto ray = pixel_ray(v.camera, 8, 8, d.bounding_radius);
    EXPECT_TRUE(ray.hit()) << v.name;
    const auto c = v.camera.center();
    EXPECT_NEAR(std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]), 3.0, 1e-12);
    EXPECT_EQ(v.image.width, 16);
  }
}

TEST(Dataset, SeedReproducible) {
  DatasetOptions opt;
  opt.width = opt.height = 12;
  opt.views = 6;
  Rng a(9), b(9), c(10);
  const auto da = make_dataset(builtin_scene("sphere"), opt, a);
  const auto db = make_dataset(builtin_scene("sphere"), opt, b);
  const auto dc = make_dataset(builtin_scene("sphere"), opt, c);
  for (std::size_t i = 0; i < da.views.size(); ++i) {
    EXPECT_EQ(da.views[i].camera.rotation, db.views[i].camera.rotation);
    EXPECT_EQ(da.views[i].image.data, db.views[i].image.data);
  }
  EXPECT_NE(da.views[0].camera.translation, dc.views[0].camera.translation);
}

TEST(Dataset, RoundTripIsLossless) {
  Rng rng(1);
  DatasetOptions opt;
  opt.width = 20;
  opt.height = 14;
  opt.views = 5;
  const auto d = make_dataset(builtin_scene("freq-mix"), opt, rng);
  const auto dir = scratch("roundtrip");
  write_dataset(dir, d);
  EXPECT_TRUE(fs::exists(dir / "images" / "0000.png"));
  const auto r = read_dataset(dir);
  EXPECT_EQ(r.scene, "freq-mix");
  EXPECT_EQ(r.bounding_radius, d.bounding_radius);
  EXPECT_EQ(r.background, d.background);
  ASSERT_EQ(r.views.size(), d.views.size());
  for (std::size_t i = 0; i < d.views.size(); ++i) {
    const auto& a = d.views[i];
    const auto& b = r.views[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.holdout, b.holdout);
    EXPECT_EQ(a.image.data, b.image.data);
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(a.camera.rotation[k], b.camera.rotation[k], 1e-12);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.camera.translation[k], b.camera.translation[k], 1e-12);
    EXPECT_NEAR(a.camera.fx, b.camera.fx, 1e-12);
    EXPECT_NEAR(a.camera.cy, b.camera.cy, 1e-12);
  }
  fs::remove_all(dir);
}

nlohmann::json load_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void save_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

TEST(Dataset, MissingCameraEntryNamesImage) {
  Rng rng(2);
  DatasetOptions opt;
  opt.width = opt.height = 8;
  opt.views = 4;
  const auto dir = scratch("missing");
  write_dataset(dir, make_dataset(builtin_scene("sphere"), opt, rng));
  auto j = load_json(dir / "cameras.json");
  j.erase("0002.png");
  save_json(dir / "cameras.json", j);
  try {
    read_dataset(dir);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("0002.png"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Dataset, UnknownVersionRejected) {
  Rng rng(3);
  DatasetOptions opt;
  opt.width = opt.height = 8;
  opt.views = 2;
  const auto dir = scratch("version");
  write_dataset(dir, make_dataset(builtin_scene("sphere"), opt, rng));
  auto j = load_json(dir / "cameras.json");
  j["format_version"] = 99;
  save_json(dir / "cameras.json", j);
  EXPECT_THROW(read_dataset(dir), FormatVersionError);
  fs::remove_all(dir);
}

TEST(Dataset, MissingDirectoryRejected) {
  EXPECT_THROW(read_dataset(scratch("absent")), IoError);
}

}  // namespace
}  // namespace frebis
