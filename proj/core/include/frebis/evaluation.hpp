#pragma once
// Loading trained models and scoring them: held-out renders against the
// dataset images, extracted meshes against the analytic scene surface.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "frebis/checkpoint.hpp"
#include "frebis/field.hpp"
#include "frebis/meshing.hpp"
#include "frebis/rendering.hpp"
#include "frebis/scenes.hpp"

namespace frebis {

using AnyModel = std::variant<FieldModel<float>, FieldModel<double>>;

/// A checkpoint file, or the newest checkpoint of a run directory.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

/// Model at the checkpoint's stored precision.
AnyModel load_any_model(const Checkpoint& ckpt);

/// Sample counts from the checkpoint's training config when present;
/// bounding radius and background from the dataset keys in the checkpoint
/// meta when present, else the defaults.
RenderOptions render_options_from(const Checkpoint& ckpt);

struct ViewScore {
  std::string name;
  double psnr = 0;
  double ssim = 0;
};

template <class T>
std::vector<ViewScore> score_views(const FieldModel<T>& model, const std::vector<const DatasetView*>& views,
                                   const RenderOptions& options, int threads = 0);

/// Points spread by area over the zero set of `scene`: marching cubes on an
/// R^3 lattice of the analytic SDF, area-weighted samples, then two Newton
/// projections x <- x - d(x) n(x) onto the exact surface.
std::vector<Vec3> scene_surface_samples(const AnalyticScene& scene, std::size_t count, std::uint64_t seed,
                                        int resolution = 256);

/// Chamfer distance between `count` area samples of the mesh and of the
/// scene surface. Throws ValidationError on an empty mesh.
double mesh_chamfer(const TriangleMesh& mesh, const AnalyticScene& scene, std::size_t count, std::uint64_t seed);

}  // namespace frebis
