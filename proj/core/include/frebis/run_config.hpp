#pragma once
// One document holding every knob of a training run.
//
//   {"version": 1,                      required
//    "profile": "paper" | "desk",       base values before overrides
//    "dataset": "path/to/dataset",
//    "output_dir": "runs/sphere",
//    "threads": 0,
//    "model": {...},                    ModelConfig keys
//    "train": {...}}                    TrainConfig keys
//
// "paper" keeps the library defaults. "desk" shrinks the networks, the ray
// batch and the sample counts so a 3000-step run fits on one CPU core; every
// other value stays at its default. Explicit model/train keys override the
// profile. Unknown keys anywhere are rejected.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "frebis/field.hpp"
#include "frebis/training.hpp"

namespace frebis {

inline constexpr int kRunConfigVersion = 1;

enum class Profile { paper, desk };

const char* profile_name(Profile p);
Profile parse_profile(const std::string& s);

struct RunConfig {
  Profile profile = Profile::paper;
  std::filesystem::path dataset;
  std::filesystem::path output_dir;
  int threads = 0;
  ModelConfig model;
  TrainConfig train;

  /// Base configuration of a profile.
  static RunConfig defaults(Profile profile);

  void validate() const;
  /// Fully resolved document; from_json(to_json()) reproduces the config.
  nlohmann::json to_json() const;
  /// Throws ValidationError on a missing or unknown version, unknown keys or
  /// invalid values.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Relative dataset and output paths are resolved against the file's
/// directory. Throws IoError when the file cannot be read or parsed.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace frebis
