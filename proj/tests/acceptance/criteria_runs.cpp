// Criteria 7 to 10: training runs, end to end.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "acceptance.hpp"
#include "frebis/evaluation.hpp"
#include "frebis/meshing.hpp"
#include "frebis/run_config.hpp"
#include "frebis/scenes.hpp"
#include "frebis/training.hpp"

namespace frebis::acceptance {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

nlohmann::json load_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh(const Context& ctx, const std::string& name) {
  const auto dir = ctx.work / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Outcome cli_failure(const std::string& step, int rc) { return {false, step + " exited with status " + std::to_string(rc)}; }

// ---- 7: end-to-end desk run -----------------------------------------------------

Outcome desk_run(const Context& ctx) {
  const auto dir = fresh(ctx, "c7");
  const auto cli = quote(ctx.cli);
  const auto log = quote(dir / "log.txt");
  int rc = shell(cli + " generate-scene --scene sphere --views 20 --width 64 --height 64 --seed 0 --out " +
                 quote(dir / "data") + " >> " + log);
  if (rc != 0) return cli_failure("generate-scene", rc);
  const auto t0 = Clock::now();
  rc = shell(cli + " train --config " + quote(ctx.configs / "desk_sphere.json") + " --dataset " + quote(dir / "data") +
             " --out " + quote(dir / "run") + " >> " + log);
  const double train_s = seconds_since(t0);
  if (rc != 0) return cli_failure("train", rc);
  rc = shell(cli + " eval --checkpoint " + quote(dir / "run") + " --dataset " + quote(dir / "data") +
             " --split holdout --mesh-resolution 128 --chamfer-samples 20000 --out " + quote(dir / "eval.json") +
             " >> " + log);
  if (rc != 0) return cli_failure("eval", rc);

  const auto report = load_json(dir / "eval.json");
  const double p = report["mean_psnr"].get<double>();
  const double c = report["chamfer"].is_null() ? std::numeric_limits<double>::infinity() : report["chamfer"].get<double>();

  // The metrics log must show the photometric loss going down.
  std::ifstream metrics(dir / "run" / "metrics.jsonl");
  std::string line;
  double first = NAN, last = NAN;
  while (std::getline(metrics, line)) {
    const auto row = nlohmann::json::parse(line);
    if (row["loss_rgb"].is_null()) continue;
    if (std::isnan(first)) first = row["loss_rgb"].get<double>();
    last = row["loss_rgb"].get<double>();
  }
  const int iterations = load_json(dir / "run" / "effective_config.json")["train"]["iterations"].get<int>();
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%d iterations in %.0f s (limit 1800), holdout PSNR %.2f dB (> 25), Chamfer %.4f (< 0.02), L_RGB %.4f -> %.4f",
                iterations, train_s, p, c, first, last);
  return {iterations == 3000 && train_s < 1800 && p > 25 && c < 0.02 && last < first, buf};
}

// ---- 8: mechanism comparison ----------------------------------------------------

double holdout_psnr(const RunConfig& cfg, const PosedDataset& data, const fs::path& dir) {
  Rng rng(cfg.train.seed);
  FieldModel<float> model(cfg.model, rng);
  train_loop(model, data, cfg.train, dir);
  RenderOptions opt;
  opt.coarse_samples = cfg.train.coarse_samples;
  opt.fine_samples = cfg.train.fine_samples;
  opt.bounding_radius = data.bounding_radius;
  opt.background = data.background;
  const auto scores = score_views(model, data.split(true), opt);
  double s = 0;
  for (const auto& v : scores) s += v.psnr;
  return s / static_cast<double>(scores.size());
}

Outcome mechanism(const Context& ctx) {
  const auto dir = fresh(ctx, "c8");
  Rng drng(0);
  const auto data = make_dataset(builtin_scene("freq-mix"), DatasetOptions{}, drng);
  int wins = 0;
  std::string table;
  std::size_t params[3] = {0, 0, 0};
  for (int seed = 0; seed < ctx.mechanism_seeds; ++seed) {
    double psnr[3];
    for (int variant = 0; variant < 3; ++variant) {
      auto cfg = RunConfig::defaults(Profile::desk);
      cfg.train.iterations = ctx.mechanism_iterations;
      cfg.train.seed = static_cast<std::uint64_t>(seed);
      cfg.train.checkpoint_interval = ctx.mechanism_iterations;
      if (variant == 1) cfg.model.weighting = WeightingMode::average;
      if (variant == 2) cfg.model.architecture = Architecture::single;
      Rng prng(0);
      params[variant] = FieldModel<float>(cfg.model, prng).parameter_count();
      psnr[variant] = holdout_psnr(cfg, data, dir / ("s" + std::to_string(seed) + "_v" + std::to_string(variant)));
    }
    const bool win = psnr[0] >= psnr[1] && psnr[0] >= psnr[2];
    wins += win;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%sseed %d: %.2f / %.2f / %.2f%s", table.empty() ? "" : "; ", seed, psnr[0], psnr[1],
                  psnr[2], win ? "" : " (lost)");
    table += buf;
  }
  char head[200];
  std::snprintf(head, sizeof head,
                "full / average / single-encoder holdout PSNR after %d steps (params %zu / %zu / %zu); full best in %d of %d: ",
                ctx.mechanism_iterations, params[0], params[1], params[2], wins, ctx.mechanism_seeds);
  return {wins >= 3, head + table};
}

// ---- 9: determinism -------------------------------------------------------------

Outcome determinism(const Context& ctx) {
  const auto dir = fresh(ctx, "c9");
  Rng drng(0);
  DatasetOptions dopt;
  const auto data = make_dataset(builtin_scene("sphere"), dopt, drng);
  auto cfg = RunConfig::defaults(Profile::desk);
  cfg.train.iterations = 200;
  cfg.train.checkpoint_interval = 100;
  cfg.train.log_interval = 50;
  cfg.train.seed = 9;
  for (const char* name : {"a", "b"}) {
    Rng rng(cfg.train.seed);
    FieldModel<float> model(cfg.model, rng);
    train_loop(model, data, cfg.train, dir / name);
  }
  int compared = 0, identical = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "checkpoints")) {
    ++compared;
    const auto other = dir / "b" / "checkpoints" / e.path().filename();
    identical += fs::exists(other) && slurp(e.path()) == slurp(other);
  }
  return {compared == 3 && identical == compared,
          std::to_string(identical) + " of " + std::to_string(compared) +
              " checkpoints byte-identical across two seeded 200-step runs"};
}

// ---- 10: diagnostics ------------------------------------------------------------

double area_variance(const TriangleMesh& m) {
  const auto a = m.triangle_areas();
  if (a.empty()) return 0;
  double mean = 0, var = 0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  for (double v : a) var += (v - mean) * (v - mean);
  return var / static_cast<double>(a.size());
}

Outcome diagnostics(const Context& ctx) {
  const auto dir = fresh(ctx, "c10");
  const auto cli = quote(ctx.cli);
  const auto log = quote(dir / "log.txt");
  int rc = shell(cli + " generate-scene --scene freq-mix --views 20 --width 64 --height 64 --seed 0 --out " +
                 quote(dir / "data") + " >> " + log);
  if (rc != 0) return cli_failure("generate-scene", rc);
  rc = shell(cli + " train --config " + quote(ctx.configs / "desk_sphere.json") + " --iterations 300 --dataset " +
             quote(dir / "data") + " --out " + quote(dir / "run") + " >> " + log);
  if (rc != 0) return cli_failure("train", rc);
  const auto mesh_dir = dir / "mesh";
  rc = shell(cli + " extract-mesh --checkpoint " + quote(dir / "run") + " --resolution 96 --per-band --out " +
             quote(mesh_dir / "band.obj") + " >> " + log);
  if (rc != 0) return cli_failure("extract-mesh --per-band", rc);
  rc = shell(cli + " extract-mesh --checkpoint " + quote(dir / "run") + " --resolution 96 --weight-colors --out " +
             quote(mesh_dir / "weights.ply") + " >> " + log);
  if (rc != 0) return cli_failure("extract-mesh --weight-colors", rc);

  std::vector<std::string> objs;
  for (const auto& e : fs::directory_iterator(mesh_dir)) {
    if (e.path().extension() == ".obj") objs.push_back(e.path().filename().string());
  }
  std::string variances;
  for (const char* band : {"low", "mid", "high"}) {
    const auto p = mesh_dir / ("band_" + std::string(band) + ".obj");
    if (!fs::exists(p)) return {false, "missing " + p.filename().string()};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%s %.2e", variances.empty() ? "" : ", ", band, area_variance(read_obj(p)));
    variances += buf;
  }
  const auto colored = read_ply(mesh_dir / "weights.ply");
  float lo = 1e9F, hi = -1e9F;
  for (const auto& c : colored.colors) {
    for (float v : c) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const bool colors_ok = !colored.colors.empty() && colored.colors.size() == colored.vertices.size() &&
                         lo >= kWeightColorLow && hi <= kWeightColorHigh;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu OBJ files from --per-band; PLY with %zu colored vertices, channels in [%.3f, %.3f]; triangle-area variance %s",
                objs.size(), colored.vertices.size(), lo, hi, variances.c_str());
  return {objs.size() == 3 && colors_ok, buf};
}

}  // namespace

std::vector<Criterion> run_criteria() {
  return {
      {7, "end-to-end desk run", false, desk_run},
      {8, "mechanism comparison", true, mechanism},
      {9, "determinism", false, determinism},
      {10, "diagnostics", false, diagnostics},
  };
}

}  // namespace frebis::acceptance
