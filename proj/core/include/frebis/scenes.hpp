#pragma once
// Analytic ground-truth scenes, a sphere-tracing reference renderer and the
// posed-image dataset format.
//
// Dataset directory:
//   images/NNNN.png   8-bit RGB
//   cameras.json      {"format_version": 1, "bounding_radius": r,
//                      "background_rgb": [r, g, b], "scene": name,
//                      "<image file name>": {"fx", "fy", "cx", "cy", "W", "H",
//                        "camera_to_world": [12 numbers, row-major 3 x 4],
//                        "split": "train" | "holdout"}, ...}

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "frebis/image.hpp"
#include "frebis/rendering.hpp"
#include "frebis/rng.hpp"

namespace frebis {

inline constexpr int kDatasetFormatVersion = 1;

struct ColorField {
  enum class Kind { constant, checker, stripes };
  Kind kind = Kind::constant;
  Rgb primary{0.8, 0.3, 0.2};
  Rgb secondary{0.2, 0.3, 0.8};
  /// checker: cells per half turn of each angular coordinate;
  /// stripes: bands per scene unit of distance from the primitive center.
  double frequency = 4.0;
};

struct Primitive {
  enum class Kind { sphere, box, torus };
  Kind kind = Kind::sphere;
  Vec3 center{0, 0, 0};
  /// sphere: {radius}; box: half extents; torus (axis z): {major, minor}.
  Vec3 size{0.5, 0.5, 0.5};
  double scale = 1.0;
  ColorField color;

  double sdf(const Vec3& p) const;
  Rgb color_at(const Vec3& p) const;
};

/// Union (min) of primitives. Each primitive SDF is exact and uniform
/// scaling multiplies back by the scale, so the scene SDF is 1-Lipschitz.
struct AnalyticScene {
  std::string name;
  std::vector<Primitive> primitives;
  Rgb background{1, 1, 1};
  Vec3 light_direction{0.408248290463863, 0.408248290463863, 0.816496580927726};
  double bounding_radius = 1.0;

  double sdf(const Vec3& p) const;
  double lipschitz_bound() const { return 1.0; }
  /// Color of the primitive closest to p.
  Rgb surface_color(const Vec3& p) const;
  /// Central-difference gradient, normalized.
  Vec3 normal(const Vec3& p) const;
};

/// Built-in scenes: "sphere", "freq-mix", "torus-checker".
AnalyticScene builtin_scene(const std::string& name);
std::vector<std::string> builtin_scene_names();

/// t <- t + d(r(t)) from t_near until |d| < 1e-5, t > t_far or 256 steps.
std::optional<Vec3> sphere_trace(const AnalyticScene& scene, const Ray& ray);

/// One ray per pixel center, shaded as color * max(n . l, 0.2).
Image render_ground_truth(const AnalyticScene& scene, const Camera& cam, int threads = 0);

struct DatasetView {
  std::string name;  // image file name, e.g. "0003.png"
  Camera camera;
  Image image;
  bool holdout = false;
};

struct PosedDataset {
  std::string scene;
  double bounding_radius = 1.0;
  Rgb background{1, 1, 1};
  std::vector<DatasetView> views;

  std::vector<const DatasetView*> split(bool holdout) const;
};

struct DatasetOptions {
  int views = 20;
  int width = 64;
  int height = 64;
  double camera_distance = 3.0;
  double fov_y = 0.75;  // radians
  double holdout_fraction = 0.1;
  int threads = 0;
};

/// Cameras on a sphere around the origin, stratified in azimuth and
/// elevation, looking at the origin. Images are quantized to 8 bits so the
/// in-memory dataset equals what read_dataset returns.
PosedDataset make_dataset(const AnalyticScene& scene, const DatasetOptions& options, Rng& rng);

/// One cameras.json entry without the split tag.
nlohmann::json camera_to_json(const Camera& cam);
/// Throws IoError naming `name` on a malformed or invalid entry.
Camera camera_from_json(const nlohmann::json& j, const std::string& name);

void write_dataset(const std::filesystem::path& dir, const PosedDataset& data);
/// Throws IoError on missing files or count mismatches, FormatVersionError
/// on an unknown format version.
PosedDataset read_dataset(const std::filesystem::path& dir);

}  // namespace frebis
