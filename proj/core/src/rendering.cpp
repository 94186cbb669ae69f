#include "frebis/rendering.hpp"

#include <algorithm>
#include <cmath>

#include "frebis/errors.hpp"
#include "frebis/parallel.hpp"

namespace frebis {

namespace {

Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot3(v, v));
  if (!(n > 0)) throw ValidationError("cannot normalize a zero vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

void Camera::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ValidationError("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw ValidationError("camera image size must be positive");
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += rotation[3 * k + i] * rotation[3 * k + j];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-6) throw ValidationError("camera rotation is not orthonormal");
    }
  }
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, int width, int height) {
  if (!(fov_y > 0 && fov_y < 3.14159)) throw ValidationError("field of view must be in (0, pi)");
  const Vec3 z = normalized(sub3(target, eye));
  Vec3 x = cross3(z, up);
  if (dot3(x, x) < 1e-20) x = cross3(z, Vec3{1, 0, 0});
  if (dot3(x, x) < 1e-20) x = cross3(z, Vec3{0, 1, 0});
  // With +y pointing down, x = z cross up points right for a world up vector.
  x = normalized(x);
  const Vec3 y = cross3(z, x);
  Camera cam;
  cam.rotation = {x[0], y[0], z[0], x[1], y[1], z[1], x[2], y[2], z[2]};
  cam.translation = eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.validate();
  return cam;
}

void clip_to_sphere(Ray& ray, double radius) {
  // |o + t v|^2 = r^2 with |v| = 1.
  const double b = dot3(ray.origin, ray.direction);
  const double c = dot3(ray.origin, ray.origin) - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0) {
    ray.t_near = ray.t_far = 0;
    return;
  }
  const double s = std::sqrt(disc);
  const double t0 = -b - s;
  const double t1 = -b + s;
  if (t1 <= 0) {
    ray.t_near = ray.t_far = 0;
    return;
  }
  ray.t_near = std::max(t0, 0.0);
  ray.t_far = t1;
}

Ray generate_ray(const Camera& cam, double px, double py, double radius) {
  if (!(cam.fx > 0) || !(cam.fy > 0)) throw ValidationError("degenerate camera intrinsics");
  if (px < 0 || py < 0 || px > cam.width || py > cam.height) throw ValidationError("pixel outside the image");
  const Vec3 d_cam{(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0};
  const auto& R = cam.rotation;
  const Vec3 d{R[0] * d_cam[0] + R[1] * d_cam[1] + R[2] * d_cam[2], R[3] * d_cam[0] + R[4] * d_cam[1] + R[5] * d_cam[2],
               R[6] * d_cam[0] + R[7] * d_cam[1] + R[8] * d_cam[2]};
  Ray ray;
  ray.origin = cam.translation;
  ray.direction = normalized(d);
  clip_to_sphere(ray, radius);
  return ray;
}

std::vector<double> stratified_sample(double t_near, double t_far, int count, Rng* rng) {
  if (!(t_near < t_far)) throw ValidationError("stratified_sample: empty interval");
  if (count < 1) throw ValidationError("stratified_sample: count must be >= 1");
  std::vector<double> t(static_cast<std::size_t>(count));
  const double width = (t_far - t_near) / count;
  for (int i = 0; i < count; ++i) {
    const double u = rng ? rng->uniform() : 0.5;
    t[static_cast<std::size_t>(i)] = t_near + (i + u) * width;
  }
  return t;
}

std::vector<double> segment_lengths(std::span<const double> depths, double t_far) {
  std::vector<double> d(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    d[i] = (i + 1 < depths.size() ? depths[i + 1] : t_far) - depths[i];
  }
  return d;
}

std::vector<double> importance_resample(std::span<const double> depths, std::span<const double> weights, double t_far,
                                        int count, Rng* rng) {
  if (depths.size() != weights.size()) throw ShapeError("importance_resample: depths and weights differ in length");
  if (depths.empty()) throw ValidationError("importance_resample: no coarse samples");
  std::vector<double> merged(depths.begin(), depths.end());
  if (count <= 0) return merged;
  double total = 0;
  for (double w : weights) {
    if (w < 0 || !std::isfinite(w)) throw ValidationError("importance_resample: weights must be finite and >= 0");
    total += w;
  }
  std::vector<double> fresh;
  if (total <= 0) {
    fresh = stratified_sample(depths.front(), t_far, count, rng);
  } else {
    std::vector<double> cdf(weights.size() + 1, 0.0);
    for (std::size_t i = 0; i < weights.size(); ++i) cdf[i + 1] = cdf[i] + weights[i] / total;
    cdf.back() = 1.0;
    fresh.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
      const double u = rng ? rng->uniform() : (k + 0.5) / count;
      // First segment whose cumulative mass exceeds u; empty segments are skipped.
      auto it = std::upper_bound(cdf.begin() + 1, cdf.end(), u);
      if (it == cdf.end()) --it;
      const std::size_t seg = static_cast<std::size_t>(it - cdf.begin()) - 1;
      const double lo = depths[seg];
      const double hi = seg + 1 < depths.size() ? depths[seg + 1] : t_far;
      const double mass = cdf[seg + 1] - cdf[seg];
      const double frac = mass > 0 ? std::clamp((u - cdf[seg]) / mass, 0.0, 1.0) : 0.5;
      fresh.push_back(lo + frac * (hi - lo));
    }
  }
  merged.insert(merged.end(), fresh.begin(), fresh.end());
  std::sort(merged.begin(), merged.end());
  std::vector<double> unique;
  unique.reserve(merged.size());
  for (double t : merged) {
    if (unique.empty() || t - unique.back() > 1e-9) unique.push_back(t);
  }
  return unique;
}

CompositeResult composite(std::span<const double> sigma, std::span<const Rgb> colors, std::span<const double> deltas,
                          const Rgb& background) {
  if (sigma.size() != colors.size() || sigma.size() != deltas.size()) {
    throw ShapeError("composite: sigma, colors and deltas differ in length");
  }
  CompositeResult r;
  r.weights.resize(sigma.size());
  double T = 1.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] < 0) throw ValidationError("composite: negative density");
    const double keep = std::exp(-sigma[i] * deltas[i]);
    const double w = T * (1.0 - keep);
    r.weights[i] = w;
    for (int c = 0; c < 3; ++c) r.rgb[c] += w * colors[i][c];
    T *= keep;
  }
  r.transmittance = T;
  for (int c = 0; c < 3; ++c) r.rgb[c] += T * background[c];
  return r;
}

template <class T>
Tensor<T> composite(const Tensor<T>& sigma, const Tensor<T>& colors, std::span<const T> deltas,
                    std::span<const std::size_t> offsets, const Rgb& background) {
  if (offsets.empty()) throw ShapeError("composite: offsets must hold R + 1 entries");
  const std::size_t samples = offsets.back();
  if (sigma.numel() != samples || colors.numel() != 3 * samples || deltas.size() != samples) {
    throw ShapeError("composite: sample counts disagree with offsets");
  }
  const std::size_t rays = offsets.size() - 1;
  const auto s = sigma.values();
  const auto c = colors.values();
  std::vector<T> out(3 * rays);
  for (std::size_t r = 0; r < rays; ++r) {
    double acc[3] = {0, 0, 0};
    double trans = 1.0;
    for (std::size_t i = offsets[r]; i < offsets[r + 1]; ++i) {
      if (s[i] < T(0)) throw ValidationError("composite: negative density");
      const double keep = std::exp(-static_cast<double>(s[i]) * deltas[i]);
      const double w = trans * (1.0 - keep);
      for (int ch = 0; ch < 3; ++ch) acc[ch] += w * c[3 * i + ch];
      trans *= keep;
    }
    for (int ch = 0; ch < 3; ++ch) out[3 * r + ch] = static_cast<T>(acc[ch] + trans * background[ch]);
  }
  std::vector<T> dl(deltas.begin(), deltas.end());
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return Tensor<T>::make_result(
      {rays, 3}, std::move(out), {sigma, colors},
      [dl = std::move(dl), off = std::move(off), background](const detail::Node<T>& self,
                                                             std::span<Tensor<T>> parents) {
        const auto s = parents[0].values();
        const auto c = parents[1].values();
        std::span<T> gs = parents[0].requires_grad() ? parents[0].grad_buffer() : std::span<T>();
        std::span<T> gc = parents[1].requires_grad() ? parents[1].grad_buffer() : std::span<T>();
        std::vector<double> trans, weight;
        for (std::size_t r = 0; r + 1 < off.size(); ++r) {
          const std::size_t begin = off[r], n = off[r + 1] - begin;
          const double g[3] = {self.grad[3 * r], self.grad[3 * r + 1], self.grad[3 * r + 2]};
          trans.assign(n + 1, 1.0);
          weight.assign(n, 0.0);
          for (std::size_t k = 0; k < n; ++k) {
            const double keep = std::exp(-static_cast<double>(s[begin + k]) * dl[begin + k]);
            weight[k] = trans[k] * (1.0 - keep);
            trans[k + 1] = trans[k] * keep;
          }
          // suffix = sum_{k > i} T_k a_k (g . c_k) + T_{N+1} (g . background)
          double suffix = trans[n] * (g[0] * background[0] + g[1] * background[1] + g[2] * background[2]);
          for (std::size_t k = n; k-- > 0;) {
            const std::size_t i = begin + k;
            const double gdotc = g[0] * c[3 * i] + g[1] * c[3 * i + 1] + g[2] * c[3 * i + 2];
            if (!gc.empty()) {
              for (int ch = 0; ch < 3; ++ch) gc[3 * i + ch] += static_cast<T>(g[ch] * weight[k]);
            }
            if (!gs.empty()) gs[i] += static_cast<T>(dl[i] * (trans[k + 1] * gdotc - suffix));
            suffix += weight[k] * gdotc;
          }
        }
      });
}

template <class T>
RayBatch<T> render_rays(const FieldModel<T>& model, std::span<const Ray> rays, const RenderOptions& options,
                        Rng* rng) {
  if (options.coarse_samples < 1 || options.fine_samples < 0) throw ValidationError("invalid sample counts");
  const std::size_t R = rays.size();
  std::vector<std::vector<double>> depths(R);
  for (std::size_t r = 0; r < R; ++r) {
    if (rays[r].hit()) depths[r] = stratified_sample(rays[r].t_near, rays[r].t_far, options.coarse_samples, rng);
  }

  auto gather_points = [&](std::vector<T>& pts) {
    pts.clear();
    for (std::size_t r = 0; r < R; ++r) {
      for (double t : depths[r]) {
        for (int a = 0; a < 3; ++a) pts.push_back(static_cast<T>(rays[r].origin[a] + t * rays[r].direction[a]));
      }
    }
  };

  std::vector<T> pts;
  if (options.fine_samples > 0) {
    gather_points(pts);
    if (!pts.empty()) {
      std::vector<T> coarse_sdf;
      {
        NoGradGuard guard;
        const auto sdf = model.sdf(pts, options.query);
        coarse_sdf.assign(sdf.values().begin(), sdf.values().end());
      }
      const auto params = model.density_params();
      const auto convention = model.config().convention;
      std::size_t cursor = 0;
      for (std::size_t r = 0; r < R; ++r) {
        if (depths[r].empty()) continue;
        const std::size_t n = depths[r].size();
        std::vector<double> sigma(n);
        for (std::size_t i = 0; i < n; ++i) sigma[i] = sdf_to_density(coarse_sdf[cursor + i], params, convention);
        cursor += n;
        const auto deltas = segment_lengths(depths[r], rays[r].t_far);
        std::vector<double> w(n);
        double trans = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double keep = std::exp(-sigma[i] * deltas[i]);
          w[i] = trans * (1.0 - keep);
          trans *= keep;
        }
        depths[r] = importance_resample(depths[r], w, rays[r].t_far, options.fine_samples, rng);
      }
    }
  }

  RayBatch<T> out;
  out.offsets.assign(R + 1, 0);
  std::vector<T> deltas;
  std::vector<T> dirs;
  for (std::size_t r = 0; r < R; ++r) {
    out.offsets[r + 1] = out.offsets[r] + depths[r].size();
    const auto d = segment_lengths(depths[r], rays[r].t_far);
    for (double v : d) deltas.push_back(static_cast<T>(v));
    for (std::size_t i = 0; i < depths[r].size(); ++i) {
      for (int a = 0; a < 3; ++a) dirs.push_back(static_cast<T>(rays[r].direction[a]));
    }
  }
  gather_points(pts);
  out.sample_points.assign(pts.begin(), pts.end());
  const std::size_t S = out.offsets.back();
  if (S == 0) {
    out.rgb = Tensor<T>::zeros({R, 3});
    auto v = out.rgb.mutable_values();
    for (std::size_t r = 0; r < R; ++r) {
      for (int c = 0; c < 3; ++c) v[3 * r + c] = static_cast<T>(options.background[c]);
    }
    out.opacity.assign(R, 0.0);
    return out;
  }

  const auto field = model.evaluate(pts, options.query);
  const auto sigma = model.density(field.sdf);
  Tensor<T> normals;
  if (model.config().normal_mode == NormalMode::detached) {
    NoGradGuard guard;
    normals = model.spatial_gradient(pts).detach();
  } else {
    normals = model.spatial_gradient(pts);
  }
  const auto P = Tensor<T>::from({S, 3}, pts);
  const auto V = Tensor<T>::from({S, 3}, dirs);
  const auto colors = model.color(field.appearance, P, V, normals);
  out.rgb = composite<T>(sigma, colors, deltas, out.offsets, options.background);

  out.opacity.resize(R);
  const auto s = sigma.values();
  for (std::size_t r = 0; r < R; ++r) {
    double trans = 1.0;
    for (std::size_t i = out.offsets[r]; i < out.offsets[r + 1]; ++i) trans *= std::exp(-double(s[i]) * deltas[i]);
    out.opacity[r] = 1.0 - trans;
  }
  return out;
}

template <class T>
Image render_image(const FieldModel<T>& model, const Camera& cam, const RenderOptions& options, int threads,
                   std::size_t chunk_rays) {
  cam.validate();
  if (chunk_rays == 0) throw ValidationError("chunk size must be positive");
  Image img(cam.width, cam.height, options.background);
  const std::size_t total = img.pixel_count();
  const std::size_t chunks = (total + chunk_rays - 1) / chunk_rays;
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    NoGradGuard guard;
    const std::size_t begin = chunk * chunk_rays;
    const std::size_t end = std::min(total, begin + chunk_rays);
    std::vector<Ray> rays;
    rays.reserve(end - begin);
    for (std::size_t p = begin; p < end; ++p) {
      rays.push_back(pixel_ray(cam, static_cast<int>(p % cam.width), static_cast<int>(p / cam.width),
                               options.bounding_radius));
    }
    const auto batch = render_rays(model, std::span<const Ray>(rays), options, nullptr);
    const auto v = batch.rgb.values();
    for (std::size_t p = begin; p < end; ++p) {
      for (int c = 0; c < 3; ++c) img.data[3 * p + c] = static_cast<float>(v[3 * (p - begin) + c]);
    }
  });
  return img;
}

template Tensor<float> composite(const Tensor<float>&, const Tensor<float>&, std::span<const float>,
                                 std::span<const std::size_t>, const Rgb&);
template Tensor<double> composite(const Tensor<double>&, const Tensor<double>&, std::span<const double>,
                                  std::span<const std::size_t>, const Rgb&);
template RayBatch<float> render_rays(const FieldModel<float>&, std::span<const Ray>, const RenderOptions&, Rng*);
template RayBatch<double> render_rays(const FieldModel<double>&, std::span<const Ray>, const RenderOptions&, Rng*);
template Image render_image(const FieldModel<float>&, const Camera&, const RenderOptions&, int, std::size_t);
template Image render_image(const FieldModel<double>&, const Camera&, const RenderOptions&, int, std::size_t);

}  // namespace frebis
