#include "frebis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "frebis/errors.hpp"

namespace frebis {

namespace {

void require_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size()) {
    throw ShapeError("images differ in size");
  }
  if (a.data.empty()) throw ShapeError("images are empty");
}

std::array<double, 11> gaussian_window() {
  std::array<double, 11> w{};
  double total = 0;
  for (int i = 0; i < 11; ++i) {
    const double x = i - 5;
    w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2 * 1.5 * 1.5));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= total;
  return w;
}

// Separable weighted filter over valid positions; input is one channel.
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h, const std::array<double, 11>& k) {
  const int ow = w - 10, oh = h - 10;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_size(a, b);
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b);
  if (a.width < 11 || a.height < 11) throw ValidationError("SSIM needs images of at least 11 x 11 pixels");
  const auto k = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int w = a.width, h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[3 * i + ch];
      y[i] = b.data[3 * i + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, k);
    const auto my = filter_valid(y, w, h, k);
    const auto sxx = filter_valid(xx, w, h, k);
    const auto syy = filter_valid(yy, w, h, k);
    const auto sxy = filter_valid(xy, w, h, k);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> points) {
  if (points.empty()) throw ValidationError("nearest_distances: empty point set");
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-lo[0], -lo[1], -lo[2]};
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  // About two points per cell on average.
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-12});
  const int res = std::clamp(static_cast<int>(std::cbrt(points.size() / 2.0)), 1, 256);
  const double cell = extent / res + 1e-12;
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = std::max(1, static_cast<int>(std::floor((hi[a] - lo[a]) / cell)) + 1);
  auto cell_of = [&](const Vec3& p, int a) {
    return std::clamp(static_cast<int>(std::floor((p[a] - lo[a]) / cell)), 0, dims[a] - 1);
  };
  const std::size_t ncells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<std::size_t> start(ncells + 1, 0);
  std::vector<std::size_t> cell_index(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    cell_index[i] = (static_cast<std::size_t>(cell_of(p, 2)) * dims[1] + cell_of(p, 1)) * dims[0] + cell_of(p, 0);
    ++start[cell_index[i] + 1];
  }
  for (std::size_t c = 0; c < ncells; ++c) start[c + 1] += start[c];
  std::vector<std::size_t> order(points.size());
  {
    auto fill = start;
    for (std::size_t i = 0; i < points.size(); ++i) order[fill[cell_index[i]]++] = i;
  }

  std::vector<double> out(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    // Start from the grid cell nearest to q; for a query outside the grid
    // every point in a cell at Chebyshev ring r is still at least
    // (r - 1) * cell away along the offending axis.
    std::array<int, 3> qc{};
    for (int a = 0; a < 3; ++a) {
      const double c = std::floor((q[a] - lo[a]) / cell);
      qc[a] = static_cast<int>(std::clamp(c, 0.0, static_cast<double>(dims[a] - 1)));
    }
    double best = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({dims[0], dims[1], dims[2]});
    for (int ring = 0; ring <= max_ring; ++ring) {
      // Every point outside the rings visited so far lies at least
      // (ring - 1) * cell away from q.
      if (ring > 0) {
        const double bound = (ring - 1) * cell;
        if (bound * bound > best) break;
      }
      for (int z = qc[2] - ring; z <= qc[2] + ring; ++z) {
        if (z < 0 || z >= dims[2]) continue;
        for (int y = qc[1] - ring; y <= qc[1] + ring; ++y) {
          if (y < 0 || y >= dims[1]) continue;
          for (int x = qc[0] - ring; x <= qc[0] + ring; ++x) {
            if (x < 0 || x >= dims[0]) continue;
            if (std::max({std::abs(x - qc[0]), std::abs(y - qc[1]), std::abs(z - qc[2])}) != ring) continue;
            const std::size_t c = (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
            for (std::size_t k = start[c]; k < start[c + 1]; ++k) best = std::min(best, dist2(q, points[order[k]]));
          }
        }
      }
    }
    out[qi] = std::sqrt(best);
  }
  return out;
}

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw ValidationError("chamfer: empty point set");
  const auto ab = nearest_distances(a, b);
  const auto ba = nearest_distances(b, a);
  double sa = 0, sb = 0;
  for (double d : ab) sa += d;
  for (double d : ba) sb += d;
  return 0.5 * (sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size()));
}

}  // namespace frebis
