#pragma once
// Losses, Eikonal point sampling, the training step and the training loop.
//
// Run directory written by train_loop:
//   checkpoints/step_NNNNNNN.ckpt  model, Adam moments, RNG state, iteration
//   metrics.jsonl                  one JSON object per log interval:
//     iteration, loss, loss_rgb, loss_eikonal (means since the previous row;
//     null on the first row), lr, alpha, beta, w_low, w_mid, w_high (mean
//     band weights over a fixed probe point set; null without weighting),
//     elapsed_s

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "frebis/adam.hpp"
#include "frebis/field.hpp"
#include "frebis/rendering.hpp"
#include "frebis/scenes.hpp"

namespace frebis {

struct TrainConfig {
  double lambda = 0.1;
  int batch_rays = 512;
  int iterations = 3000;
  double lr = 0.005;
  double lr_final_factor = 0.1;  // lr decays exponentially to lr * factor
  std::uint64_t seed = 0;
  int eikonal_points = 0;  // 0: same as batch_rays
  double eikonal_uniform_fraction = 0.5;
  double eikonal_jitter = 0.01;
  int coarse_samples = 64;
  int fine_samples = 64;
  int checkpoint_interval = 500;
  int log_interval = 100;
  int probe_points = 512;
  // Before the first step the SDF is regressed onto |x| - sphere_init_radius
  // for sphere_init_steps Adam steps (0 disables).
  double sphere_init_radius = 0.3;
  int sphere_init_steps = 300;
  // false: ray samples at bin midpoints and evenly spaced quantiles
  bool perturb_samples = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  int eikonal_count() const { return eikonal_points > 0 ? eikonal_points : batch_rays; }
};

/// Mean over rays and channels of |pred - truth|.
template <class T>
Tensor<T> photometric_loss(const Tensor<T>& pred, const Tensor<T>& truth);

/// Mean over points of (|grad d| - 1)^2 with central-difference gradients.
template <class T>
Tensor<T> eikonal_loss(const SdfFunction<T>& sdf, std::span<const T> points, T eps);

/// l_rgb + lambda * l_eik. Throws ValidationError for negative lambda.
template <class T>
Tensor<T> total_loss(const Tensor<T>& l_rgb, const Tensor<T>& l_eik, double lambda);

/// Mixes uniform points in the bounding sphere with jittered copies of the
/// current ray samples. Every emitted point lies inside the sphere.
class EikonalSampler {
 public:
  EikonalSampler(double radius, double uniform_fraction = 0.5, double jitter = 0.01);
  /// ray_points is S x 3; with S = 0 every point is uniform.
  std::vector<double> sample(std::size_t count, std::span<const double> ray_points, Rng& rng) const;

 private:
  double radius_;
  double uniform_fraction_;
  double jitter_;
};

/// Regresses the model SDF onto |x| - radius at points uniform in the
/// bounding sphere with a fresh Adam optimizer; returns the last mean
/// squared error. Only the SDF path receives gradients.
template <class T>
double sphere_init(FieldModel<T>& model, double radius, int steps, double bounding_radius, double lr,
                   std::uint64_t seed);

/// Exponential decay from lr to lr * lr_final_factor over the run.
double learning_rate(const TrainConfig& cfg, int iteration);

/// Deterministic points uniform in the sphere, independent of training RNG.
std::vector<double> probe_points(std::size_t count, double radius, std::uint64_t seed);

struct StepStats {
  int iteration = 0;  // iterations completed after this step
  double loss = 0;
  double loss_rgb = 0;
  double loss_eikonal = 0;
  double lr = 0;
  double alpha = 0;
  double beta = 0;
};

template <class T>
class Trainer {
 public:
  Trainer(FieldModel<T>& model, const PosedDataset& data, const TrainConfig& cfg);

  /// One optimization step on a uniformly drawn batch of training pixels.
  /// Throws NumericError with a diagnostic on a non-finite loss.
  StepStats step();

  int iteration() const { return iteration_; }
  const TrainConfig& config() const { return cfg_; }
  FieldModel<T>& model() { return model_; }
  Rng& rng() { return rng_; }
  Adam<T>& optimizer() { return adam_; }

  /// Model, optimizer moments, RNG state and iteration; `extra` goes into
  /// the checkpoint meta.
  Checkpoint checkpoint(const nlohmann::json& extra = nlohmann::json::object()) const;
  void restore(const Checkpoint& ckpt);

 private:
  FieldModel<T>& model_;
  const PosedDataset& data_;
  TrainConfig cfg_;
  std::vector<const DatasetView*> views_;
  std::vector<std::size_t> cumulative_;  // pixel count prefix sums over views_
  RenderOptions render_;
  EikonalSampler sampler_;
  Adam<T> adam_;
  Rng rng_;
  int iteration_ = 0;
};

/// Mean band weights over `points` (null without redundancy weighting).
template <class T>
nlohmann::json mean_band_weights(const FieldModel<T>& model, std::span<const double> points);

struct TrainOutcome {
  int iterations = 0;
  std::filesystem::path last_checkpoint;
  std::vector<nlohmann::json> rows;  // metrics rows written by this call
};

/// Runs the loop, writing checkpoints and metrics under run_dir. With
/// `resume`, the newest checkpoint in run_dir is restored first and metrics
/// rows past its iteration are dropped, so an interrupted run continues
/// exactly as if it had not stopped. `extra_meta` is stored in every
/// checkpoint. `on_row` sees each metrics row as it is written.
template <class T>
TrainOutcome train_loop(FieldModel<T>& model, const PosedDataset& data, const TrainConfig& cfg,
                        const std::filesystem::path& run_dir, bool resume = false,
                        const nlohmann::json& extra_meta = nlohmann::json::object(),
                        const std::function<void(const nlohmann::json&)>& on_row = {});

/// Newest checkpoints/step_*.ckpt in a run directory; throws IoError if none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

/// Rebuilds a model from a checkpoint written by train_loop (its meta holds
/// the model config).
template <class T>
FieldModel<T> load_model(const Checkpoint& ckpt);

}  // namespace frebis
