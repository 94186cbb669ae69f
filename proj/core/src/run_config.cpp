#include "frebis/run_config.hpp"

#include <fstream>

#include "frebis/errors.hpp"
#include "json_util.hpp"

namespace frebis {

using detail::check_keys;
using detail::read_opt;

const char* profile_name(Profile p) { return p == Profile::desk ? "desk" : "paper"; }

Profile parse_profile(const std::string& s) {
  if (s == "paper") return Profile::paper;
  if (s == "desk") return Profile::desk;
  throw ValidationError("unknown profile '" + s + "' (expected paper or desk)");
}

RunConfig RunConfig::defaults(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::desk) {
    c.model.encoder.layers = {2, 2, 2};
    c.model.encoder.hidden_width = 64;
    c.model.encoder.feature_width = 64;
    c.model.decoder_width = 64;
    c.model.appearance_width = 64;
    c.model.color_width = 64;
    c.train.batch_rays = 96;
    c.train.coarse_samples = 24;
    c.train.fine_samples = 24;
  }
  return c;
}

void RunConfig::validate() const {
  if (threads < 0) throw ValidationError("threads must be >= 0");
  model.validate();
  train.validate();
}

nlohmann::json RunConfig::to_json() const {
  return {{"version", kRunConfigVersion},
          {"profile", profile_name(profile)},
          {"dataset", dataset.string()},
          {"output_dir", output_dir.string()},
          {"threads", threads},
          {"model", model.to_json()},
          {"train", train.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  const std::string w = "run config";
  check_keys(j, {"version", "profile", "dataset", "output_dir", "threads", "model", "train"}, w);
  if (!j.contains("version")) throw ValidationError(w + ": missing required key 'version'");
  int version = 0;
  read_opt(j, "version", version, w);
  if (version != kRunConfigVersion) {
    throw ValidationError(w + ": unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kRunConfigVersion) + ")");
  }
  std::string profile = "paper";
  read_opt(j, "profile", profile, w);
  RunConfig c = defaults(parse_profile(profile));
  std::string path;
  read_opt(j, "dataset", path, w);
  c.dataset = path;
  path.clear();
  read_opt(j, "output_dir", path, w);
  c.output_dir = path;
  read_opt(j, "threads", c.threads, w);

  try {
    // Overlay the document on the profile so unspecified keys keep the
    // profile's values.
    auto model = c.model.to_json();
    if (j.contains("model")) {
      detail::require_object(j["model"], w + ".model");
      const auto& user = j["model"];
      if (user.contains("bands") && user["bands"].is_object() && user["bands"].contains("total_levels") &&
          !user["bands"].contains("assignment")) {
        model["bands"].erase("assignment");
      }
      model.merge_patch(user);
    }
    c.model = ModelConfig::from_json(model);
    auto train = c.train.to_json();
    if (j.contains("train")) {
      detail::require_object(j["train"], w + ".train");
      train.merge_patch(j["train"]);
    }
    c.train = TrainConfig::from_json(train);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(w + ": " + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed config " + path.string() + ": " + e.what());
  }
  auto c = RunConfig::from_json(j);
  const auto base = path.parent_path();
  if (!c.dataset.empty() && c.dataset.is_relative()) c.dataset = base / c.dataset;
  if (!c.output_dir.empty() && c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
  return c;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << cfg.to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace frebis
