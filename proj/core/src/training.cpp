#include "frebis/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "frebis/errors.hpp"
#include "json_util.hpp"

namespace frebis {

using detail::check_keys;
using detail::read_opt;

void TrainConfig::validate() const {
  if (!(lambda >= 0)) throw ValidationError("lambda must be >= 0");
  if (batch_rays < 1) throw ValidationError("batch_rays must be >= 1");
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (!(lr > 0)) throw ValidationError("lr must be positive");
  if (!(lr_final_factor > 0 && lr_final_factor <= 1)) throw ValidationError("lr_final_factor must be in (0, 1]");
  if (eikonal_points < 0) throw ValidationError("eikonal_points must be >= 0");
  if (!(eikonal_uniform_fraction >= 0 && eikonal_uniform_fraction <= 1)) {
    throw ValidationError("eikonal_uniform_fraction must be in [0, 1]");
  }
  if (!(eikonal_jitter >= 0)) throw ValidationError("eikonal_jitter must be >= 0");
  if (coarse_samples < 1 || fine_samples < 0) throw ValidationError("invalid sample counts");
  if (checkpoint_interval < 1 || log_interval < 1) throw ValidationError("intervals must be >= 1");
  if (probe_points < 1) throw ValidationError("probe_points must be >= 1");
  if (!(sphere_init_radius > 0)) throw ValidationError("sphere_init_radius must be positive");
  if (sphere_init_steps < 0) throw ValidationError("sphere_init_steps must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"batch_rays", batch_rays},
          {"iterations", iterations},
          {"lr", lr},
          {"lr_final_factor", lr_final_factor},
          {"seed", seed},
          {"eikonal_points", eikonal_points},
          {"eikonal_uniform_fraction", eikonal_uniform_fraction},
          {"eikonal_jitter", eikonal_jitter},
          {"coarse_samples", coarse_samples},
          {"fine_samples", fine_samples},
          {"checkpoint_interval", checkpoint_interval},
          {"log_interval", log_interval},
          {"probe_points", probe_points},
          {"sphere_init_radius", sphere_init_radius},
          {"sphere_init_steps", sphere_init_steps},
          {"perturb_samples", perturb_samples}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  const std::string w = "train";
  check_keys(j,
             {"lambda", "batch_rays", "iterations", "lr", "lr_final_factor", "seed", "eikonal_points",
              "eikonal_uniform_fraction", "eikonal_jitter", "coarse_samples", "fine_samples", "checkpoint_interval",
              "log_interval", "probe_points", "sphere_init_radius", "sphere_init_steps",
              "perturb_samples"},
             w);
  TrainConfig c;
  read_opt(j, "lambda", c.lambda, w);
  read_opt(j, "batch_rays", c.batch_rays, w);
  read_opt(j, "iterations", c.iterations, w);
  read_opt(j, "lr", c.lr, w);
  read_opt(j, "lr_final_factor", c.lr_final_factor, w);
  read_opt(j, "seed", c.seed, w);
  read_opt(j, "eikonal_points", c.eikonal_points, w);
  read_opt(j, "eikonal_uniform_fraction", c.eikonal_uniform_fraction, w);
  read_opt(j, "eikonal_jitter", c.eikonal_jitter, w);
  read_opt(j, "coarse_samples", c.coarse_samples, w);
  read_opt(j, "fine_samples", c.fine_samples, w);
  read_opt(j, "checkpoint_interval", c.checkpoint_interval, w);
  read_opt(j, "log_interval", c.log_interval, w);
  read_opt(j, "probe_points", c.probe_points, w);
  read_opt(j, "sphere_init_radius", c.sphere_init_radius, w);
  read_opt(j, "sphere_init_steps", c.sphere_init_steps, w);
  read_opt(j, "perturb_samples", c.perturb_samples, w);
  c.validate();
  return c;
}

// ---- losses ---------------------------------------------------------------------

template <class T>
Tensor<T> photometric_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
  if (pred.shape() != truth.shape()) throw ShapeError("photometric_loss: prediction and truth differ in shape");
  return mean(abs(sub(pred, truth)));
}

template <class T>
Tensor<T> eikonal_loss(const SdfFunction<T>& sdf, std::span<const T> points, T eps) {
  const auto g = spatial_gradient<T>(sdf, points, eps);
  const auto norm = sqrt(clamp_min(row_sum(square(g)), static_cast<T>(1e-16)));
  return mean(square(add_scalar(norm, T(-1))));
}

template <class T>
Tensor<T> total_loss(const Tensor<T>& l_rgb, const Tensor<T>& l_eik, double lambda) {
  if (!(lambda >= 0)) throw ValidationError("lambda must be >= 0");
  return add(l_rgb, scale(l_eik, static_cast<T>(lambda)));
}

EikonalSampler::EikonalSampler(double radius, double uniform_fraction, double jitter)
    : radius_(radius), uniform_fraction_(uniform_fraction), jitter_(jitter) {
  if (!(radius > 0)) throw ValidationError("sampler radius must be positive");
}

std::vector<double> EikonalSampler::sample(std::size_t count, std::span<const double> ray_points, Rng& rng) const {
  const std::size_t available = ray_points.size() / 3;
  const std::size_t uniform =
      available == 0 ? count : static_cast<std::size_t>(std::llround(uniform_fraction_ * static_cast<double>(count)));
  std::vector<double> out;
  out.reserve(3 * count);
  for (std::size_t i = 0; i < uniform; ++i) {
    double p[3];
    do {
      for (double& v : p) v = rng.uniform(-radius_, radius_);
    } while (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > radius_ * radius_);
    out.insert(out.end(), p, p + 3);
  }
  for (std::size_t i = uniform; i < count; ++i) {
    const std::size_t k = rng.index(available);
    double p[3];
    for (int a = 0; a < 3; ++a) p[a] = ray_points[3 * k + a] + jitter_ * rng.normal();
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (n > radius_) {
      for (double& v : p) v *= radius_ / n;
    }
    out.insert(out.end(), p, p + 3);
  }
  return out;
}

double learning_rate(const TrainConfig& cfg, int iteration) {
  if (cfg.iterations <= 0) return cfg.lr;
  const double frac = std::clamp(static_cast<double>(iteration) / cfg.iterations, 0.0, 1.0);
  return cfg.lr * std::pow(cfg.lr_final_factor, frac);
}

std::vector<double> probe_points(std::size_t count, double radius, std::uint64_t seed) {
  Rng rng(seed);
  EikonalSampler s(radius, 1.0, 0.0);
  return s.sample(count, {}, rng);
}

template <class T>
double sphere_init(FieldModel<T>& model, double radius, int steps, double bounding_radius, double lr,
                   std::uint64_t seed) {
  if (!(radius > 0) || steps < 0) throw ValidationError("invalid sphere initialization settings");
  constexpr std::size_t kPoints = 512;
  Adam<T> adam(model.parameters(), AdamConfig{lr, 0.9, 0.999, 1e-8});
  Rng rng(seed);
  const EikonalSampler sampler(bounding_radius, 1.0, 0.0);
  double last = 0;
  for (int k = 0; k < steps; ++k) {
    const auto pts = sampler.sample(kPoints, {}, rng);
    std::vector<T> p(pts.begin(), pts.end());
    std::vector<T> target(kPoints);
    for (std::size_t i = 0; i < kPoints; ++i) {
      target[i] = static_cast<T>(std::sqrt(pts[3 * i] * pts[3 * i] + pts[3 * i + 1] * pts[3 * i + 1] +
                                           pts[3 * i + 2] * pts[3 * i + 2]) -
                                 radius);
    }
    const auto loss = mean(square(sub(model.sdf(p), Tensor<T>::from({kPoints, 1}, std::move(target)))));
    last = loss.item();
    adam.zero_grad();
    loss.backward();
    adam.step(lr);
  }
  return last;
}

// ---- trainer --------------------------------------------------------------------

template <class T>
Trainer<T>::Trainer(FieldModel<T>& model, const PosedDataset& data, const TrainConfig& cfg)
    : model_(model),
      data_(data),
      cfg_(cfg),
      sampler_(data.bounding_radius, cfg.eikonal_uniform_fraction, cfg.eikonal_jitter),
      adam_(model.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}),
      rng_(cfg.seed) {
  cfg_.validate();
  views_ = data.split(false);
  if (views_.empty()) throw ValidationError("dataset has no training views");
  cumulative_.push_back(0);
  for (const auto* v : views_) cumulative_.push_back(cumulative_.back() + v->image.pixel_count());
  render_.coarse_samples = cfg_.coarse_samples;
  render_.fine_samples = cfg_.fine_samples;
  render_.bounding_radius = data.bounding_radius;
  render_.background = data.background;
}

template <class T>
StepStats Trainer<T>::step() {
  const double lr = learning_rate(cfg_, iteration_);
  const auto B = static_cast<std::size_t>(cfg_.batch_rays);
  std::vector<Ray> rays;
  rays.reserve(B);
  std::vector<T> target;
  target.reserve(3 * B);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t g = rng_.index(cumulative_.back());
    const auto v = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), g) -
                                            cumulative_.begin()) - 1;
    const auto* view = views_[v];
    const std::size_t p = g - cumulative_[v];
    const int x = static_cast<int>(p % static_cast<std::size_t>(view->image.width));
    const int y = static_cast<int>(p / static_cast<std::size_t>(view->image.width));
    rays.push_back(pixel_ray(view->camera, x, y, data_.bounding_radius));
    const float* px = view->image.pixel(x, y);
    for (int c = 0; c < 3; ++c) target.push_back(static_cast<T>(px[c]));
  }

  StepStats s;
  s.lr = lr;
  const auto params = model_.density_params();
  s.alpha = params.alpha;
  s.beta = params.beta;
  try {
    const auto batch = render_rays(model_, std::span<const Ray>(rays), render_, cfg_.perturb_samples ? &rng_ : nullptr);
    const auto l_rgb = photometric_loss(batch.rgb, Tensor<T>::from({B, 3}, target));
    const auto eik_pts = sampler_.sample(static_cast<std::size_t>(cfg_.eikonal_count()), batch.sample_points, rng_);
    const std::vector<T> eik_t(eik_pts.begin(), eik_pts.end());
    const auto l_eik = eikonal_loss<T>(model_.sdf_function(), eik_t, static_cast<T>(model_.config().gradient_eps));
    const auto loss = total_loss(l_rgb, l_eik, cfg_.lambda);
    s.loss = loss.item();
    s.loss_rgb = l_rgb.item();
    s.loss_eikonal = l_eik.item();
    if (!std::isfinite(s.loss)) throw NumericError("loss is not finite");
    adam_.zero_grad();
    loss.backward();
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "training diverged at iteration " << iteration_ << " (lr " << lr << ", alpha " << s.alpha << ", beta "
       << s.beta << "): " << e.what();
    throw NumericError(os.str());
  }
  adam_.step(lr);
  ++iteration_;
  s.iteration = iteration_;
  return s;
}

template <class T>
Checkpoint Trainer<T>::checkpoint(const nlohmann::json& extra) const {
  Checkpoint ck;
  ck.precision = precision_of<T>();
  model_.save(ck);
  const auto named = model_.named_parameters();
  auto& adam = const_cast<Adam<T>&>(adam_);
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& shape = named[i].second.shape();
    const auto& m = adam.first_moments()[i];
    const auto& v = adam.second_moments()[i];
    ck.entries.push_back({"adam.m." + named[i].first, shape, std::vector<double>(m.begin(), m.end())});
    ck.entries.push_back({"adam.v." + named[i].first, shape, std::vector<double>(v.begin(), v.end())});
  }
  ck.meta = extra;
  ck.meta["iteration"] = iteration_;
  ck.meta["adam_steps"] = adam_.step_count();
  ck.meta["rng_state"] = rng_.state();
  ck.meta["model"] = model_.config().to_json();
  ck.meta["train"] = cfg_.to_json();
  return ck;
}

template <class T>
void Trainer<T>::restore(const Checkpoint& ck) {
  if (ck.precision != precision_of<T>()) throw IoError("checkpoint precision does not match the model");
  model_.load(ck);
  const auto named = model_.named_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& m = ck.find("adam.m." + named[i].first).values;
    const auto& v = ck.find("adam.v." + named[i].first).values;
    auto& dm = adam_.first_moments()[i];
    auto& dv = adam_.second_moments()[i];
    if (m.size() != dm.size() || v.size() != dv.size()) throw IoError("optimizer state size mismatch");
    std::transform(m.begin(), m.end(), dm.begin(), [](double x) { return static_cast<T>(x); });
    std::transform(v.begin(), v.end(), dv.begin(), [](double x) { return static_cast<T>(x); });
  }
  try {
    iteration_ = ck.meta.at("iteration").get<int>();
    adam_.set_step_count(ck.meta.at("adam_steps").get<std::int64_t>());
    rng_.set_state(ck.meta.at("rng_state").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint lacks training state: ") + e.what());
  }
}

template <class T>
nlohmann::json mean_band_weights(const FieldModel<T>& model, std::span<const double> points) {
  if (model.config().architecture != Architecture::stratified ||
      model.config().weighting != WeightingMode::redundancy || points.empty()) {
    return nullptr;
  }
  NoGradGuard guard;
  const std::vector<T> pts(points.begin(), points.end());
  const auto out = model.evaluate(pts);
  const auto w = out.weighting->weights.values();
  const std::size_t n = w.size() / 3;
  std::array<double, 3> m{0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t b = 0; b < 3; ++b) m[b] += w[3 * i + b];
  }
  for (auto& v : m) v /= static_cast<double>(n);
  return m;
}

// ---- loop -----------------------------------------------------------------------

std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir) {
  const auto dir = run_dir / "checkpoints";
  std::filesystem::path best;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("step_", 0) == 0 && e.path().extension() == ".ckpt") {
        if (best.empty() || name > best.filename().string()) best = e.path();
      }
    }
  }
  if (best.empty()) throw IoError("no checkpoint found under " + dir.string());
  return best;
}

namespace {

struct Accumulator {
  int count = 0;
  double loss = 0, rgb = 0, eik = 0;

  void add(const StepStats& s) {
    ++count;
    loss += s.loss;
    rgb += s.loss_rgb;
    eik += s.loss_eikonal;
  }
  nlohmann::json to_json() const { return {{"count", count}, {"loss", loss}, {"rgb", rgb}, {"eik", eik}}; }
  static Accumulator from_json(const nlohmann::json& j) {
    Accumulator a;
    a.count = j.at("count").get<int>();
    a.loss = j.at("loss").get<double>();
    a.rgb = j.at("rgb").get<double>();
    a.eik = j.at("eik").get<double>();
    return a;
  }
};

std::filesystem::path step_path(const std::filesystem::path& run_dir, int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%07d.ckpt", iteration);
  return run_dir / "checkpoints" / buf;
}

}  // namespace

template <class T>
TrainOutcome train_loop(FieldModel<T>& model, const PosedDataset& data, const TrainConfig& cfg,
                        const std::filesystem::path& run_dir, bool resume, const nlohmann::json& extra_meta,
                        const std::function<void(const nlohmann::json&)>& on_row) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir / "checkpoints");
  Trainer<T> trainer(model, data, cfg);
  const auto probe = probe_points(static_cast<std::size_t>(cfg.probe_points), data.bounding_radius,
                                  cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto metrics_path = run_dir / "metrics.jsonl";
  const auto start = std::chrono::steady_clock::now();
  TrainOutcome outcome;
  Accumulator acc;

  auto write_row = [&](const nlohmann::json& row) {
    std::ofstream out(metrics_path, std::ios::app);
    if (!out) throw IoError("cannot append to " + metrics_path.string());
    out << row.dump() << '\n';
    if (!out) throw IoError("write failed: " + metrics_path.string());
    outcome.rows.push_back(row);
    if (on_row) on_row(row);
  };
  auto make_row = [&](int iteration) {
    nlohmann::json row;
    row["iteration"] = iteration;
    if (acc.count > 0) {
      row["loss"] = acc.loss / acc.count;
      row["loss_rgb"] = acc.rgb / acc.count;
      row["loss_eikonal"] = acc.eik / acc.count;
    } else {
      row["loss"] = row["loss_rgb"] = row["loss_eikonal"] = nullptr;
    }
    row["lr"] = learning_rate(cfg, iteration);
    const auto p = model.density_params();
    row["alpha"] = p.alpha;
    row["beta"] = p.beta;
    const auto w = mean_band_weights(model, probe);
    row["w_low"] = w.is_null() ? nlohmann::json(nullptr) : w[0];
    row["w_mid"] = w.is_null() ? nlohmann::json(nullptr) : w[1];
    row["w_high"] = w.is_null() ? nlohmann::json(nullptr) : w[2];
    row["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
  };
  auto save = [&] {
    auto meta = extra_meta;
    meta["log_accumulator"] = acc.to_json();
    const auto path = step_path(run_dir, trainer.iteration());
    write_checkpoint(path, trainer.checkpoint(meta));
    outcome.last_checkpoint = path;
  };

  if (resume) {
    const auto path = latest_checkpoint(run_dir);
    const auto ck = read_checkpoint(path);
    trainer.restore(ck);
    acc = Accumulator::from_json(ck.meta.at("log_accumulator"));
    outcome.last_checkpoint = path;
    // Keep only rows the restored state has already produced.
    std::vector<std::string> kept;
    if (std::ifstream in(metrics_path); in) {
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (nlohmann::json::parse(line).at("iteration").get<int>() <= trainer.iteration()) kept.push_back(line);
      }
    }
    std::ofstream out(metrics_path, std::ios::trunc);
    for (const auto& l : kept) out << l << '\n';
  } else {
    fs::remove(metrics_path);
    for (const auto& e : fs::directory_iterator(run_dir / "checkpoints")) {
      if (e.path().extension() == ".ckpt") fs::remove(e.path());
    }
    if (cfg.sphere_init_steps > 0) {
      sphere_init(model, cfg.sphere_init_radius, cfg.sphere_init_steps, data.bounding_radius, cfg.lr,
                  cfg.seed ^ 0x5bd1e9955bd1e995ULL);
    }
    write_row(make_row(0));
    save();
  }

  while (trainer.iteration() < cfg.iterations) {
    acc.add(trainer.step());
    const int it = trainer.iteration();
    if (it % cfg.log_interval == 0) {
      write_row(make_row(it));
      acc = Accumulator{};
    }
    if (it % cfg.checkpoint_interval == 0 || it == cfg.iterations) save();
  }
  outcome.iterations = trainer.iteration();
  return outcome;
}

template <class T>
FieldModel<T> load_model(const Checkpoint& ckpt) {
  if (ckpt.precision != precision_of<T>()) throw IoError("checkpoint precision does not match");
  if (!ckpt.meta.contains("model")) throw IoError("checkpoint meta lacks the model config");
  const auto cfg = ModelConfig::from_json(ckpt.meta["model"]);
  Rng rng(0);
  FieldModel<T> model(cfg, rng);
  model.load(ckpt);
  return model;
}

#define FREBIS_INSTANTIATE(T)                                                                                   \
  template Tensor<T> photometric_loss(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> eikonal_loss(const SdfFunction<T>&, std::span<const T>, T);                               \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, double);                                   \
  template double sphere_init(FieldModel<T>&, double, int, double, double, std::uint64_t);                   \
  template class Trainer<T>;                                                                                    \
  template nlohmann::json mean_band_weights(const FieldModel<T>&, std::span<const double>);                   \
  template TrainOutcome train_loop(FieldModel<T>&, const PosedDataset&, const TrainConfig&,                    \
                                   const std::filesystem::path&, bool, const nlohmann::json&,                  \
                                   const std::function<void(const nlohmann::json&)>&);                        \
  template FieldModel<T> load_model(const Checkpoint&);

FREBIS_INSTANTIATE(float)
FREBIS_INSTANTIATE(double)

}  // namespace frebis
