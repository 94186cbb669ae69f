#pragma once
// Pinhole cameras, ray sampling and volume rendering.
//
// Camera frame: +x right, +y down, +z forward (optical axis). The
// camera-to-world transform maps camera coordinates to world coordinates:
// X_world = R X_cam + t, so t is the camera center.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "frebis/field.hpp"
#include "frebis/image.hpp"
#include "frebis/rng.hpp"

namespace frebis {

using Vec3 = std::array<double, 3>;

struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, camera-to-world
  Vec3 translation{0, 0, 0};
  int width = 1, height = 1;

  /// Throws ValidationError on non-positive focal lengths or image size, or
  /// a rotation that is not orthonormal within 1e-6.
  void validate() const;
  Vec3 center() const { return translation; }
  Vec3 optical_axis() const { return {rotation[2], rotation[5], rotation[8]}; }
};

/// Camera at `eye` looking at `target`; `up` fixes the roll. The vertical
/// field of view is in radians; the principal point is the image center.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, int width, int height);

struct Ray {
  Vec3 origin{};
  Vec3 direction{0, 0, 1};  // unit length
  double t_near = 0;
  double t_far = 0;
  bool hit() const { return t_far > t_near; }
};

/// Intersects the ray with the origin-centred sphere of `radius`; a miss
/// leaves an empty interval. t_near is clamped at 0.
void clip_to_sphere(Ray& ray, double radius);

/// Ray through continuous image coordinates (px, py); pixel (i, j) has its
/// center at (i + 0.5, j + 0.5).
Ray generate_ray(const Camera& cam, double px, double py, double radius);
inline Ray pixel_ray(const Camera& cam, int i, int j, double radius) {
  return generate_ray(cam, i + 0.5, j + 0.5, radius);
}

/// One draw per equal-width bin of [t_near, t_far]. Without an rng every
/// draw is the bin midpoint.
std::vector<double> stratified_sample(double t_near, double t_far, int count, Rng* rng);

/// Draws `count` depths from the piecewise-constant density proportional to
/// `weights` over the segments [t_i, t_{i+1}] (the last ends at t_far) and
/// merges them with `depths`. Without an rng the draws use evenly spaced
/// quantiles. All-zero weights fall back to stratified sampling. Depths
/// closer than 1e-9 to an existing one are dropped.
std::vector<double> importance_resample(std::span<const double> depths, std::span<const double> weights, double t_far,
                                        int count, Rng* rng);

/// Segment lengths: t_{i+1} - t_i, and t_far - t_N for the last sample.
std::vector<double> segment_lengths(std::span<const double> depths, double t_far);

struct CompositeResult {
  Rgb rgb{};
  std::vector<double> weights;  // T_i a_i
  double transmittance = 1;     // T_{N+1}
};

/// Alpha-compositing quadrature: a_i = 1 - exp(-sigma_i delta_i),
/// T_i = prod_{j<i} (1 - a_j), pixel = sum T_i a_i c_i + T_{N+1} background.
/// Throws ValidationError on negative sigma.
CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> colors, std::span<const double> deltas,
                          const Rgb& background);

/// Batched differentiable form. sigma is S x 1 and colors S x 3 over the
/// samples of all rays; ray r owns rows [offsets[r], offsets[r+1]). Returns
/// R x 3. A ray with no samples renders as the background.
template <class T>
Tensor<T> composite(const Tensor<T>& sigma, const Tensor<T>& colors, std::span<const T> deltas,
                    std::span<const std::size_t> offsets, const Rgb& background);

struct RenderOptions {
  int coarse_samples = 64;
  int fine_samples = 64;
  double bounding_radius = 1.0;
  Rgb background{1, 1, 1};
  FieldQuery query;
};

template <class T>
struct RayBatch {
  Tensor<T> rgb;                      // R x 3
  std::vector<double> sample_points;  // S x 3, all samples of all rays
  std::vector<std::size_t> offsets;   // R + 1
  std::vector<double> opacity;        // per ray, 1 - T_{N+1}
};

/// Renders rays through the field. With an rng the coarse depths are
/// jittered and the fine depths drawn at random; without one both are
/// deterministic. The coarse pass that places the fine samples records no
/// history. Whether the normals feeding the color network carry history is
/// set by the model's NormalMode.
template <class T>
RayBatch<T> render_rays(const FieldModel<T>& model, std::span<const Ray> rays, const RenderOptions& options,
                        Rng* rng);

/// Deterministic full-image render without history. Rays are processed in
/// fixed-size chunks, so the image is bit-identical for any thread count.
template <class T>
Image render_image(const FieldModel<T>& model, const Camera& cam, const RenderOptions& options, int threads = 0,
                   std::size_t chunk_rays = 512);

}  // namespace frebis
