#include "frebis/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>

#include "frebis/errors.hpp"
#include "frebis/parallel.hpp"

namespace frebis {

namespace {

constexpr double kPi = std::numbers::pi;

double length3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

bool checker_parity(double a, double b) {
  const auto ia = static_cast<long long>(std::floor(a));
  const auto ib = static_cast<long long>(std::floor(b));
  return ((ia + ib) % 2 + 2) % 2 == 0;
}

}  // namespace

double Primitive::sdf(const Vec3& p) const {
  const Vec3 q{(p[0] - center[0]) / scale, (p[1] - center[1]) / scale, (p[2] - center[2]) / scale};
  double d = 0;
  switch (kind) {
    case Kind::sphere:
      d = length3(q) - size[0];
      break;
    case Kind::box: {
      const Vec3 e{std::abs(q[0]) - size[0], std::abs(q[1]) - size[1], std::abs(q[2]) - size[2]};
      const Vec3 outside{std::max(e[0], 0.0), std::max(e[1], 0.0), std::max(e[2], 0.0)};
      d = length3(outside) + std::min(std::max({e[0], e[1], e[2]}), 0.0);
      break;
    }
    case Kind::torus: {
      const double ring = std::hypot(q[0], q[1]) - size[0];
      d = std::hypot(ring, q[2]) - size[1];
      break;
    }
  }
  return d * scale;
}

Rgb Primitive::color_at(const Vec3& p) const {
  if (color.kind == ColorField::Kind::constant) return color.primary;
  const Vec3 q{(p[0] - center[0]) / scale, (p[1] - center[1]) / scale, (p[2] - center[2]) / scale};
  bool first = true;
  if (color.kind == ColorField::Kind::stripes) {
    first = static_cast<long long>(std::floor(color.frequency * length3(q) * scale)) % 2 == 0;
  } else {
    // Angular coordinates of the primitive, each in [-pi, pi] or [0, pi].
    double a = std::atan2(q[1], q[0]);
    double b = 0;
    if (kind == Kind::torus) {
      b = std::atan2(q[2], std::hypot(q[0], q[1]) - size[0]);
    } else {
      b = std::acos(std::clamp(q[2] / std::max(length3(q), 1e-12), -1.0, 1.0));
    }
    first = checker_parity(color.frequency * a / kPi, color.frequency * b / kPi);
  }
  return first ? color.primary : color.secondary;
}

double AnalyticScene::sdf(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : primitives) d = std::min(d, prim.sdf(p));
  return d;
}

Rgb AnalyticScene::surface_color(const Vec3& p) const {
  if (primitives.empty()) return background;
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const double d = primitives[i].sdf(p);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return primitives[best].color_at(p);
}

Vec3 AnalyticScene::normal(const Vec3& p) const {
  const double h = 1e-6;
  Vec3 n{};
  for (int a = 0; a < 3; ++a) {
    Vec3 hi = p, lo = p;
    hi[a] += h;
    lo[a] -= h;
    n[a] = sdf(hi) - sdf(lo);
  }
  const double len = length3(n);
  if (len > 0) {
    for (auto& v : n) v /= len;
  }
  return n;
}

AnalyticScene builtin_scene(const std::string& name) {
  AnalyticScene s;
  s.name = name;
  if (name == "sphere") {
    Primitive p;
    p.kind = Primitive::Kind::sphere;
    p.size = {0.5, 0, 0};
    p.color.primary = {0.85, 0.35, 0.2};
    s.primitives.push_back(p);
  } else if (name == "freq-mix") {
    Primitive ball;
    ball.kind = Primitive::Kind::sphere;
    ball.center = {-0.35, 0, 0};
    ball.size = {0.35, 0, 0};
    ball.color.primary = {0.25, 0.55, 0.85};
    Primitive ring;
    ring.kind = Primitive::Kind::torus;
    ring.center = {0.4, 0, 0};
    ring.size = {0.3, 0.1, 0};
    ring.color.kind = ColorField::Kind::checker;
    ring.color.frequency = 8;
    ring.color.primary = {0.95, 0.8, 0.2};
    ring.color.secondary = {0.15, 0.1, 0.1};
    s.primitives = {ball, ring};
  } else if (name == "torus-checker") {
    Primitive ring;
    ring.kind = Primitive::Kind::torus;
    ring.size = {0.55, 0.2, 0};
    ring.color.kind = ColorField::Kind::checker;
    ring.color.frequency = 6;
    ring.color.primary = {0.9, 0.9, 0.85};
    ring.color.secondary = {0.7, 0.1, 0.15};
    s.primitives = {ring};
  } else {
    std::string list;
    for (const auto& n : builtin_scene_names()) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown scene '" + name + "' (available: " + list + ")");
  }
  return s;
}

std::vector<std::string> builtin_scene_names() { return {"sphere", "freq-mix", "torus-checker"}; }

std::optional<Vec3> sphere_trace(const AnalyticScene& scene, const Ray& ray) {
  if (!ray.hit() || scene.primitives.empty()) return std::nullopt;
  double t = ray.t_near;
  for (int step = 0; step < 256; ++step) {
    const Vec3 p{ray.origin[0] + t * ray.direction[0], ray.origin[1] + t * ray.direction[1],
                 ray.origin[2] + t * ray.direction[2]};
    const double d = scene.sdf(p);
    if (std::abs(d) < 1e-5) return p;
    t += d;
    if (t > ray.t_far) return std::nullopt;
  }
  return std::nullopt;
}

Image render_ground_truth(const AnalyticScene& scene, const Camera& cam, int threads) {
  cam.validate();
  Image img(cam.width, cam.height, scene.background);
  parallel_for(static_cast<std::size_t>(cam.height), threads, [&](std::size_t row) {
    const int j = static_cast<int>(row);
    for (int i = 0; i < cam.width; ++i) {
      const auto hit = sphere_trace(scene, pixel_ray(cam, i, j, scene.bounding_radius));
      if (!hit) continue;
      const auto n = scene.normal(*hit);
      const auto& l = scene.light_direction;
      const double shade = std::max(n[0] * l[0] + n[1] * l[1] + n[2] * l[2], 0.2);
      const auto c = scene.surface_color(*hit);
      float* px = img.pixel(i, j);
      for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<float>(c[ch] * shade);
    }
  });
  return img;
}

std::vector<const DatasetView*> PosedDataset::split(bool holdout) const {
  std::vector<const DatasetView*> out;
  for (const auto& v : views) {
    if (v.holdout == holdout) out.push_back(&v);
  }
  return out;
}

PosedDataset make_dataset(const AnalyticScene& scene, const DatasetOptions& options, Rng& rng) {
  if (options.views < 2) throw ValidationError("a dataset needs at least 2 views");
  if (options.width < 1 || options.height < 1) throw ValidationError("image size must be positive");
  if (!(options.camera_distance > scene.bounding_radius)) {
    throw ValidationError("cameras must sit outside the bounding sphere");
  }
  const int n = options.views;
  // Elevation strata are assigned to azimuth strata through a shuffled order.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[rng.index(static_cast<std::uint64_t>(i) + 1)]);
  }
  const int holdout = std::clamp(static_cast<int>(std::lround(options.holdout_fraction * n)), 0, n - 1);
  std::set<int> holdout_idx;
  for (int k = 0; k < holdout; ++k) holdout_idx.insert(static_cast<int>((k + 0.5) * n / holdout));

  PosedDataset data;
  data.scene = scene.name;
  data.bounding_radius = scene.bounding_radius;
  data.background = scene.background;
  const double z_lo = -0.35, z_hi = 0.85;  // range of sin(elevation)
  for (int i = 0; i < n; ++i) {
    const double az = 2 * kPi * (i + rng.uniform()) / n;
    const double z = z_lo + (z_hi - z_lo) * (order[static_cast<std::size_t>(i)] + rng.uniform()) / n;
    const double c = std::sqrt(1 - z * z);
    const Vec3 eye{options.camera_distance * c * std::cos(az), options.camera_distance * c * std::sin(az),
                   options.camera_distance * z};
    DatasetView v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d.png", i);
    v.name = buf;
    v.camera = look_at(eye, {0, 0, 0}, {0, 0, 1}, options.fov_y, options.width, options.height);
    v.image = quantize8(render_ground_truth(scene, v.camera, options.threads));
    v.holdout = holdout_idx.count(i) > 0;
    data.views.push_back(std::move(v));
  }
  return data;
}

namespace {

const std::set<std::string> kReservedKeys{"format_version", "bounding_radius", "background_rgb", "scene"};

}  // namespace

nlohmann::json camera_to_json(const Camera& c) {
  std::vector<double> m(12);
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) m[static_cast<std::size_t>(4 * r + k)] = c.rotation[static_cast<std::size_t>(3 * r + k)];
    m[static_cast<std::size_t>(4 * r + 3)] = c.translation[static_cast<std::size_t>(r)];
  }
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"W", c.width}, {"H", c.height}, {"camera_to_world", m}};
}

Camera camera_from_json(const nlohmann::json& j, const std::string& name) {
  try {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("W").get<int>();
    c.height = j.at("H").get<int>();
    const auto m = j.at("camera_to_world").get<std::vector<double>>();
    if (m.size() != 12) throw IoError("camera_to_world for " + name + " must hold 12 numbers");
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) c.rotation[static_cast<std::size_t>(3 * r + k)] = m[static_cast<std::size_t>(4 * r + k)];
      c.translation[static_cast<std::size_t>(r)] = m[static_cast<std::size_t>(4 * r + 3)];
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed camera entry for " + name + ": " + e.what());
  } catch (const ValidationError& e) {
    throw IoError("invalid camera for " + name + ": " + e.what());
  }
}

void write_dataset(const std::filesystem::path& dir, const PosedDataset& data) {
  std::filesystem::create_directories(dir / "images");
  nlohmann::json j;
  j["format_version"] = kDatasetFormatVersion;
  j["bounding_radius"] = data.bounding_radius;
  j["background_rgb"] = data.background;
  j["scene"] = data.scene;
  for (const auto& v : data.views) {
    if (kReservedKeys.count(v.name)) throw ValidationError("image name '" + v.name + "' is reserved");
    write_png(dir / "images" / v.name, v.image);
    auto cam = camera_to_json(v.camera);
    cam["split"] = v.holdout ? "holdout" : "train";
    j[v.name] = std::move(cam);
  }
  std::ofstream out(dir / "cameras.json");
  if (!out) throw IoError("cannot write " + (dir / "cameras.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + (dir / "cameras.json").string());
}

PosedDataset read_dataset(const std::filesystem::path& dir) {
  const auto cam_path = dir / "cameras.json";
  std::ifstream in(cam_path);
  if (!in) throw IoError("missing " + cam_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + cam_path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("format_version")) throw IoError(cam_path.string() + ": missing format_version");
  const int version = j["format_version"].get<int>();
  if (version != kDatasetFormatVersion) {
    throw FormatVersionError("unsupported dataset format version " + std::to_string(version));
  }
  PosedDataset data;
  try {
    data.bounding_radius = j.at("bounding_radius").get<double>();
    data.background = j.at("background_rgb").get<Rgb>();
    data.scene = j.value("scene", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(cam_path.string() + ": " + e.what());
  }

  std::set<std::string> files;
  const auto img_dir = dir / "images";
  if (!std::filesystem::is_directory(img_dir)) throw IoError("missing " + img_dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(img_dir)) {
    if (entry.path().extension() == ".png") files.insert(entry.path().filename().string());
  }
  std::set<std::string> entries;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kReservedKeys.count(it.key())) entries.insert(it.key());
  }
  for (const auto& f : files) {
    if (!entries.count(f)) throw IoError("image " + f + " has no camera entry in cameras.json");
  }
  for (const auto& e : entries) {
    if (!files.count(e)) throw IoError("camera entry " + e + " has no image file");
  }
  for (const auto& name : entries) {  // std::set keeps names sorted
    DatasetView v;
    v.name = name;
    v.camera = camera_from_json(j[name], name);
    const auto split = j[name].value("split", std::string("train"));
    if (split != "train" && split != "holdout") throw IoError("unknown split '" + split + "' for " + name);
    v.holdout = split == "holdout";
    v.image = read_png(img_dir / name);
    if (v.image.width != v.camera.width || v.image.height != v.camera.height) {
      throw IoError("image " + name + " size does not match its camera");
    }
    data.views.push_back(std::move(v));
  }
  if (data.views.empty()) throw IoError("dataset " + dir.string() + " holds no images");
  return data;
}

}  // namespace frebis
