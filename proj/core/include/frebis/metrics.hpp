#pragma once

#include <span>

#include "frebis/image.hpp"
#include "frebis/rendering.hpp"

namespace frebis {

inline constexpr double kPsnrCap = 100.0;

double mse(const Image& a, const Image& b);
/// 10 log10(1 / MSE); identical images give kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over valid 11 x 11 Gaussian windows (sigma 1.5), k1 = 0.01,
/// k2 = 0.03, dynamic range 1, averaged over channels. Both images must be at
/// least 11 x 11.
double ssim(const Image& a, const Image& b);

/// Symmetric Chamfer distance:
///   0.5 * (mean_a min_b |a - b| + mean_b min_a |b - a|).
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

/// Nearest-neighbor distance from each query to `points`, via a uniform grid.
std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> points);

}  // namespace frebis
