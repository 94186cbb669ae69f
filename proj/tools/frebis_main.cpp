// frebis command-line tool.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "frebis/errors.hpp"
#include "frebis/evaluation.hpp"
#include "frebis/meshing.hpp"
#include "frebis/metrics.hpp"
#include "frebis/run_config.hpp"
#include "frebis/scenes.hpp"
#include "frebis/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace frebis::cli {
namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed " + path.string() + ": " + e.what());
  }
}

// ---- generate-scene ----------------------------------------------------------

struct GenerateArgs {
  std::string scene;
  fs::path out;
  int views = 20;
  int width = 64;
  int height = 64;
  std::uint64_t seed = 0;
  int threads = 0;
};

int cmd_generate(const GenerateArgs& a) {
  const auto scene = builtin_scene(a.scene);
  DatasetOptions opt;
  opt.views = a.views;
  opt.width = a.width;
  opt.height = a.height;
  opt.threads = a.threads;
  Rng rng(a.seed);
  const auto data = make_dataset(scene, opt, rng);
  write_dataset(a.out, data);
  std::printf("wrote %zu views of '%s' to %s\n", data.views.size(), a.scene.c_str(), a.out.string().c_str());
  return kOk;
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  fs::path config;
  fs::path dataset;
  fs::path out;
  bool no_weighting = false;
  bool resume = false;
  int iterations = -1;
  std::int64_t seed = -1;
};

template <class T>
void run_training(const RunConfig& cfg, const PosedDataset& data, bool resume) {
  Rng rng(cfg.train.seed);
  FieldModel<T> model(cfg.model, rng);
  json meta;
  meta["dataset"] = {{"scene", data.scene},
                     {"bounding_radius", data.bounding_radius},
                     {"background_rgb", data.background}};
  std::printf("model: %s, %zu parameters\n", architecture_name(cfg.model.architecture), model.parameter_count());
  const auto outcome = train_loop(model, data, cfg.train, cfg.output_dir, resume, meta, [](const json& row) {
    const auto num = [&](const char* k) { return row[k].is_null() ? std::string("-") : std::to_string(row[k].get<double>()); };
    std::printf("iter %6d  loss %s  rgb %s  eik %s  alpha %.3f  beta %.4f\n", row["iteration"].get<int>(),
                num("loss").c_str(), num("loss_rgb").c_str(), num("loss_eikonal").c_str(), row["alpha"].get<double>(),
                row["beta"].get<double>());
    std::fflush(stdout);
  });
  std::printf("finished %d iterations; last checkpoint %s\n", outcome.iterations,
              outcome.last_checkpoint.string().c_str());
}

int cmd_train(const TrainArgs& a) {
  auto cfg = load_run_config(a.config);
  if (!a.dataset.empty()) cfg.dataset = a.dataset;
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.no_weighting) cfg.model.weighting = WeightingMode::average;
  if (a.iterations >= 0) cfg.train.iterations = a.iterations;
  if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
  if (cfg.dataset.empty()) throw ValidationError("no dataset given (config key 'dataset' or --dataset)");
  if (cfg.output_dir.empty()) throw ValidationError("no output directory given (config key 'output_dir' or --out)");
  cfg.dataset = fs::absolute(cfg.dataset);
  cfg.output_dir = fs::absolute(cfg.output_dir);
  cfg.validate();

  const auto data = read_dataset(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  save_run_config(cfg, cfg.output_dir / "effective_config.json");
  if (cfg.model.precision == Precision::f64) {
    run_training<double>(cfg, data, a.resume);
  } else {
    run_training<float>(cfg, data, a.resume);
  }
  return kOk;
}

// ---- render -------------------------------------------------------------------

struct RenderArgs {
  fs::path checkpoint;
  fs::path dataset;
  std::string view;
  fs::path pose;
  fs::path out;
  int threads = 0;
};

const DatasetView& find_view(const PosedDataset& data, const std::string& key) {
  for (const auto& v : data.views) {
    if (v.name == key) return v;
  }
  std::size_t idx = 0;
  std::istringstream is(key);
  if (is >> idx && is.eof() && idx < data.views.size()) return data.views[idx];
  throw ValidationError("no view '" + key + "' in the dataset (" + std::to_string(data.views.size()) + " views)");
}

int cmd_render(const RenderArgs& a) {
  if (a.pose.empty() == a.view.empty()) throw ValidationError("give exactly one of --view or --pose");
  const auto ck = read_checkpoint(resolve_checkpoint(a.checkpoint));
  auto opt = render_options_from(ck);
  Camera cam;
  std::optional<Image> truth;
  if (!a.view.empty()) {
    if (a.dataset.empty()) throw ValidationError("--view needs --dataset");
    const auto data = read_dataset(a.dataset);
    const auto& v = find_view(data, a.view);
    cam = v.camera;
    truth = v.image;
    opt.bounding_radius = data.bounding_radius;
    opt.background = data.background;
  } else {
    cam = camera_from_json(read_json(a.pose), a.pose.string());
  }
  const auto model = load_any_model(ck);
  const auto img = std::visit([&](const auto& m) { return render_image(m, cam, opt, a.threads); }, model);
  write_png(a.out, img);
  std::printf("wrote %s (%dx%d)", a.out.string().c_str(), img.width, img.height);
  if (truth) std::printf(", PSNR %.3f dB", psnr(img, *truth));
  std::printf("\n");
  return kOk;
}

// ---- extract-mesh -------------------------------------------------------------

struct MeshArgs {
  fs::path checkpoint;
  fs::path out;
  int resolution = 256;
  bool per_band = false;
  bool weight_colors = false;
  std::string per_band_mode = "unweighted";
  int threads = 0;
};

void write_mesh(const TriangleMesh& mesh, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (path.extension() == ".ply") {
    write_ply(mesh, path);
  } else {
    write_obj(mesh, path);
  }
  std::printf("wrote %s (%zu vertices, %zu triangles)\n", path.string().c_str(), mesh.vertices.size(),
              mesh.triangles.size());
}

fs::path with_suffix(const fs::path& p, const std::string& suffix, const std::string& ext) {
  return p.parent_path() / (p.stem().string() + suffix + ext);
}

int cmd_extract_mesh(const MeshArgs& a) {
  if (a.resolution < 2) throw ValidationError("--resolution must be >= 2");
  const PerBandMode mode = a.per_band_mode == "weighted" ? PerBandMode::weighted : PerBandMode::unweighted;
  const auto ck = read_checkpoint(resolve_checkpoint(a.checkpoint));
  const double radius = render_options_from(ck).bounding_radius;
  const auto [lo, hi] = cube_bounds(radius);
  const auto model = load_any_model(ck);
  std::visit(
      [&](const auto& m) {
        if (a.per_band) {
          if (m.config().architecture != Architecture::stratified) {
            throw ValidationError("--per-band needs a stratified model");
          }
          for (Band b : {Band::low, Band::mid, Band::high}) {
            const auto mesh = per_band_mesh(m, b, a.resolution, lo, hi, mode, a.threads);
            write_mesh(mesh, with_suffix(a.out, std::string("_") + band_name(b), ".obj"));
          }
        }
        if (a.weight_colors) {
          const auto mesh = weight_norm_colors(m, marching_cubes(sample_grid(m, a.resolution, lo, hi, {}, a.threads)));
          write_mesh(mesh, with_suffix(a.out, a.per_band ? "_weights" : "", ".ply"));
        }
        if (!a.per_band && !a.weight_colors) {
          write_mesh(marching_cubes(sample_grid(m, a.resolution, lo, hi, {}, a.threads)), a.out);
        }
      },
      model);
  return kOk;
}

// ---- eval ---------------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint;
  fs::path dataset;
  fs::path out;
  std::string split = "holdout";
  int mesh_resolution = 128;
  int chamfer_samples = 20000;
  int threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto data = read_dataset(a.dataset);
  std::vector<const DatasetView*> views;
  if (a.split == "all") {
    for (const auto& v : data.views) views.push_back(&v);
  } else {
    views = data.split(a.split == "holdout");
  }
  if (views.empty()) throw ValidationError("the " + a.split + " split is empty");

  const auto ck = read_checkpoint(resolve_checkpoint(a.checkpoint));
  auto opt = render_options_from(ck);
  opt.bounding_radius = data.bounding_radius;
  opt.background = data.background;
  const auto model = load_any_model(ck);

  json report;
  report["checkpoint"] = resolve_checkpoint(a.checkpoint).string();
  report["split"] = a.split;
  const auto scores = std::visit([&](const auto& m) { return score_views(m, views, opt, a.threads); }, model);
  double sp = 0, ss = 0;
  for (const auto& s : scores) {
    report["images"].push_back({{"name", s.name}, {"psnr", s.psnr}, {"ssim", s.ssim}});
    std::printf("%s  PSNR %.3f  SSIM %.4f\n", s.name.c_str(), s.psnr, s.ssim);
    sp += s.psnr;
    ss += s.ssim;
  }
  report["mean_psnr"] = sp / static_cast<double>(scores.size());
  report["mean_ssim"] = ss / static_cast<double>(scores.size());
  std::printf("mean PSNR %.3f\nmean SSIM %.4f\n", report["mean_psnr"].get<double>(), report["mean_ssim"].get<double>());

  // Chamfer needs the analytic reference, which only built-in scenes have.
  const auto names = builtin_scene_names();
  if (std::find(names.begin(), names.end(), data.scene) != names.end() && a.chamfer_samples > 0) {
    const auto scene = builtin_scene(data.scene);
    const auto [lo, hi] = cube_bounds(data.bounding_radius);
    const auto mesh = std::visit(
        [&](const auto& m) { return marching_cubes(sample_grid(m, a.mesh_resolution, lo, hi, {}, a.threads)); }, model);
    if (mesh.empty()) {
      report["chamfer"] = nullptr;
      std::printf("chamfer: extracted mesh is empty\n");
    } else {
      const double c = mesh_chamfer(mesh, scene, static_cast<std::size_t>(a.chamfer_samples), 7);
      report["chamfer"] = c;
      report["mesh_resolution"] = a.mesh_resolution;
      std::printf("chamfer %.5f\n", c);
    }
  } else {
    report["chamfer"] = nullptr;
  }
  write_json(a.out, report);
  return kOk;
}

// ---- inspect-weights ----------------------------------------------------------

struct InspectArgs {
  fs::path checkpoint;
  fs::path points;
  fs::path out;
};

// Three numbers per line; blank lines and '#' comments are skipped.
std::vector<double> read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read points file " + path.string());
  std::vector<double> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream is(line);
    double x = 0, y = 0, z = 0;
    if (!(is >> x)) continue;
    if (!(is >> y >> z)) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected three numbers");
    }
    pts.insert(pts.end(), {x, y, z});
  }
  if (pts.empty()) throw ValidationError(path.string() + " holds no points");
  return pts;
}

template <class T>
json inspect(const FieldModel<T>& model, const std::vector<double>& pts) {
  if (model.config().architecture != Architecture::stratified ||
      model.config().weighting != WeightingMode::redundancy) {
    throw ValidationError("inspect-weights needs a stratified model with redundancy weighting");
  }
  NoGradGuard ng;
  const std::vector<T> p(pts.begin(), pts.end());
  const auto out = model.evaluate(p);
  const auto& w = *out.weighting;
  // Keep the tensors alive while reading their values.
  const auto sv = w.similarity.values();
  const auto dv = w.dissimilarity.values();
  const auto wv = w.weights.values();
  json rows = json::array();
  for (std::size_t i = 0; i < pts.size() / 3; ++i) {
    json s = json::array();
    for (std::size_t r = 0; r < 3; ++r) {
      s.push_back({sv[9 * i + 3 * r], sv[9 * i + 3 * r + 1], sv[9 * i + 3 * r + 2]});
    }
    rows.push_back({{"point", {pts[3 * i], pts[3 * i + 1], pts[3 * i + 2]}},
                    {"S", s},
                    {"d", {dv[3 * i], dv[3 * i + 1], dv[3 * i + 2]}},
                    {"w", {wv[3 * i], wv[3 * i + 1], wv[3 * i + 2]}}});
  }
  return rows;
}

int cmd_inspect(const InspectArgs& a) {
  const auto pts = read_points(a.points);
  const auto ck = read_checkpoint(resolve_checkpoint(a.checkpoint));
  const auto model = load_any_model(ck);
  const auto rows = std::visit([&](const auto& m) { return inspect(m, pts); }, model);
  write_json(a.out, {{"tau", std::visit([](const auto& m) { return m.config().tau; }, model)}, {"points", rows}});
  std::printf("wrote weights for %zu points to %s\n", rows.size(), a.out.string().c_str());
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Frequency-stratified neural surface reconstruction"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-scene", "Render a posed-image dataset of a built-in scene");
  g->add_option("--scene", gen.scene, "sphere, freq-mix or torus-checker")->required();
  g->add_option("--out", gen.out, "Dataset directory")->required();
  g->add_option("--views", gen.views, "Number of views")->check(CLI::Range(2, 100000));
  g->add_option("--width", gen.width, "Image width")->check(CLI::PositiveNumber);
  g->add_option("--height", gen.height, "Image height")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Camera placement seed");
  g->add_option("--threads", gen.threads, "Worker threads (0: all cores)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model from a run config");
  t->add_option("--config", tr.config, "Run config JSON")->required();
  t->add_option("--dataset", tr.dataset, "Override the dataset directory");
  t->add_option("--out", tr.out, "Override the run directory");
  t->add_option("--iterations", tr.iterations, "Override the iteration count");
  t->add_option("--seed", tr.seed, "Override the seed");
  t->add_flag("--no-weighting", tr.no_weighting, "Average the band features instead of weighting them");
  t->add_flag("--resume", tr.resume, "Continue from the newest checkpoint in the run directory");

  RenderArgs rd;
  auto* r = app.add_subcommand("render", "Render a view from a checkpoint");
  r->add_option("--checkpoint", rd.checkpoint, "Checkpoint file or run directory")->required();
  r->add_option("--dataset", rd.dataset, "Dataset holding the view");
  r->add_option("--view", rd.view, "Image name or index in the dataset");
  r->add_option("--pose", rd.pose, "Camera JSON in the cameras.json entry format");
  r->add_option("--out", rd.out, "Output PNG")->required();
  r->add_option("--threads", rd.threads, "Worker threads (0: all cores)");

  MeshArgs ms;
  auto* m = app.add_subcommand("extract-mesh", "Extract the zero level set as a mesh");
  m->add_option("--checkpoint", ms.checkpoint, "Checkpoint file or run directory")->required();
  m->add_option("--out", ms.out, "Output mesh (.obj or .ply); band and color outputs derive their names from it")
      ->required();
  m->add_option("--resolution", ms.resolution, "Lattice points per axis");
  m->add_flag("--per-band", ms.per_band, "Write one mesh per frequency band (<stem>_low/_mid/_high.obj)");
  m->add_flag("--weight-colors", ms.weight_colors, "Write a PLY colored by weighted band norms");
  m->add_option("--per-band-mode", ms.per_band_mode, "unweighted or weighted")
      ->check(CLI::IsMember({"unweighted", "weighted"}));
  m->add_option("--threads", ms.threads, "Worker threads (0: all cores)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score renders and the extracted mesh");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file or run directory")->required();
  e->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  e->add_option("--out", ev.out, "Output JSON report")->required();
  e->add_option("--split", ev.split, "holdout, train or all")->check(CLI::IsMember({"holdout", "train", "all"}));
  e->add_option("--mesh-resolution", ev.mesh_resolution, "Lattice resolution for the Chamfer mesh");
  e->add_option("--chamfer-samples", ev.chamfer_samples, "Surface samples per side (0 skips Chamfer)");
  e->add_option("--threads", ev.threads, "Worker threads (0: all cores)");

  InspectArgs in;
  auto* i = app.add_subcommand("inspect-weights", "Dump similarity, dissimilarity and band weights at points");
  i->add_option("--checkpoint", in.checkpoint, "Checkpoint file or run directory")->required();
  i->add_option("--points", in.points, "Text file with one 'x y z' per line")->required();
  i->add_option("--out", in.out, "Output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*r) return cmd_render(rd);
    if (*m) return cmd_extract_mesh(ms);
    if (*e) return cmd_eval(ev);
    if (*i) return cmd_inspect(in);
  } catch (const ValidationError& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kValidation;
  } catch (const FormatVersionError& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kValidation;
  } catch (const ShapeError& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kValidation;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kRuntime;
  }
  return kUsage;
}

}  // namespace
}  // namespace frebis::cli

int main(int argc, char** argv) { return frebis::cli::run(argc, argv); }
