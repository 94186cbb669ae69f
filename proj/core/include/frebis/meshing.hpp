#pragma once
// Isosurface extraction and the diagnostic meshes: per-band decoding and
// weight-norm vertex colors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "frebis/field.hpp"
#include "frebis/rendering.hpp"
#include "frebis/rng.hpp"

namespace frebis {

/// R^3 samples on a regular lattice spanning [lo, hi]; x varies fastest.
struct SdfGrid {
  int resolution = 0;
  Vec3 lo{-1, -1, -1};
  Vec3 hi{1, 1, 1};
  std::vector<double> values;

  void validate() const;
  double spacing(int axis) const { return (hi[axis] - lo[axis]) / (resolution - 1); }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * resolution + j) * resolution + i;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 point(int i, int j, int k) const {
    return {lo[0] + i * spacing(0), lo[1] + j * spacing(1), lo[2] + k * spacing(2)};
  }
  double cell_diagonal() const;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<std::array<float, 3>> colors;  // empty or one per vertex

  bool empty() const { return triangles.empty(); }
  /// Throws ValidationError on out-of-range indices or a color count that
  /// does not match the vertex count.
  void validate() const;
  std::vector<double> triangle_areas() const;
  double surface_area() const;
};

/// Batched scalar field: writes one value per point (points are B x 3).
using BatchField = std::function<void(std::span<const double> points, std::span<double> out)>;

/// Evaluates `field` at every lattice point in parallel chunks. Throws
/// NumericError on a non-finite value.
SdfGrid sample_grid(const BatchField& field, int resolution, const Vec3& lo, const Vec3& hi, int threads = 0);

/// Model SDF on the lattice, evaluated without recording history.
template <class T>
SdfGrid sample_grid(const FieldModel<T>& model, int resolution, const Vec3& lo, const Vec3& hi,
                    const FieldQuery& query = {}, int threads = 0);

/// Cube circumscribing the origin-centred sphere of `radius`.
inline std::pair<Vec3, Vec3> cube_bounds(double radius) { return {{-radius, -radius, -radius}, {radius, radius, radius}}; }

/// Marching cubes with linear interpolation along edges. Corners below `iso`
/// are inside; triangles face towards increasing values. Vertices are shared
/// through an edge-keyed cache and always interpolated from the lower lattice
/// end, so the mesh is watertight on interior cells and does not depend on
/// traversal order. Zero-area triangles are dropped.
TriangleMesh marching_cubes(const SdfGrid& grid, double iso = 0.0, int threads = 0);

/// Mesh of the model decoded from one band alone (see PerBandMode).
template <class T>
TriangleMesh per_band_mesh(const FieldModel<T>& model, Band band, int resolution, const Vec3& lo, const Vec3& hi,
                           PerBandMode mode = PerBandMode::unweighted, int threads = 0);

/// Sets per-vertex RGB to the norms of the weighted band columns at each
/// vertex (red low, green mid, blue high), each channel min-max scaled over
/// the mesh into [0.4, 1.0]. A constant channel maps to 0.7. Throws
/// ValidationError on an empty mesh or a single-encoder model.
template <class T>
TriangleMesh weight_norm_colors(const FieldModel<T>& model, TriangleMesh mesh);

inline constexpr float kWeightColorLow = 0.4F;
inline constexpr float kWeightColorHigh = 1.0F;
inline constexpr float kWeightColorTie = 0.7F;

/// Area-weighted random points on the mesh surface.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, Rng& rng);

/// Positions and 1-based faces.
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_obj(const std::filesystem::path& path);
/// Binary little-endian PLY; float red/green/blue properties when colors are
/// present.
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_ply(const std::filesystem::path& path);

}  // namespace frebis
