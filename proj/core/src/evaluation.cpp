#include "frebis/evaluation.hpp"

#include <algorithm>

#include "frebis/errors.hpp"
#include "frebis/metrics.hpp"
#include "frebis/training.hpp"

namespace frebis {

std::filesystem::path resolve_checkpoint(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return latest_checkpoint(path);
  if (!std::filesystem::exists(path)) throw IoError("no checkpoint at " + path.string());
  return path;
}

AnyModel load_any_model(const Checkpoint& ckpt) {
  if (ckpt.precision == Precision::f64) return load_model<double>(ckpt);
  return load_model<float>(ckpt);
}

RenderOptions render_options_from(const Checkpoint& ckpt) {
  RenderOptions o;
  const auto& meta = ckpt.meta;
  if (meta.contains("train")) {
    const auto train = TrainConfig::from_json(meta["train"]);
    o.coarse_samples = train.coarse_samples;
    o.fine_samples = train.fine_samples;
  }
  if (meta.contains("dataset")) {
    const auto& d = meta["dataset"];
    if (d.contains("bounding_radius")) o.bounding_radius = d["bounding_radius"].get<double>();
    if (d.contains("background_rgb")) o.background = d["background_rgb"].get<Rgb>();
  }
  return o;
}

template <class T>
std::vector<ViewScore> score_views(const FieldModel<T>& model, const std::vector<const DatasetView*>& views,
                                   const RenderOptions& options, int threads) {
  std::vector<ViewScore> out;
  out.reserve(views.size());
  for (const auto* v : views) {
    const auto img = render_image(model, v->camera, options, threads);
    out.push_back({v->name, psnr(img, v->image), ssim(img, v->image)});
  }
  return out;
}

std::vector<Vec3> scene_surface_samples(const AnalyticScene& scene, std::size_t count, std::uint64_t seed,
                                        int resolution) {
  const auto [lo, hi] = cube_bounds(scene.bounding_radius);
  const auto grid = sample_grid(
      [&](std::span<const double> pts, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = scene.sdf({pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]});
      },
      resolution, lo, hi);
  const auto mesh = marching_cubes(grid);
  if (mesh.empty()) throw ValidationError("scene '" + scene.name + "' has no surface inside its bounds");
  Rng rng(seed);
  auto pts = sample_surface(mesh, count, rng);
  for (auto& p : pts) {
    for (int it = 0; it < 2; ++it) {
      const double d = scene.sdf(p);
      const auto n = scene.normal(p);
      for (int k = 0; k < 3; ++k) p[k] -= d * n[k];
    }
  }
  return pts;
}

double mesh_chamfer(const TriangleMesh& mesh, const AnalyticScene& scene, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw ValidationError("cannot measure an empty mesh");
  Rng rng(seed);
  const auto a = sample_surface(mesh, count, rng);
  const auto b = scene_surface_samples(scene, count, seed + 1);
  return chamfer(a, b);
}

template std::vector<ViewScore> score_views(const FieldModel<float>&, const std::vector<const DatasetView*>&,
                                            const RenderOptions&, int);
template std::vector<ViewScore> score_views(const FieldModel<double>&, const std::vector<const DatasetView*>&,
                                            const RenderOptions&, int);

}  // namespace frebis
