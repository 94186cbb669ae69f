#pragma once

// Checkpoint container.
//
// Layout:
//   line 1  "FREBIS-CKPT"
//   line 2  decimal byte length of the manifest
//   manifest (JSON): {"format_version", "precision": "f32"|"f64",
//                     "tensors": [{"name", "shape"}...], "meta": {...}}
//   payload: each tensor's values as little-endian IEEE floats of the stated
//            precision, concatenated in manifest order.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "frebis/tensor.hpp"

namespace frebis {

inline constexpr int kCheckpointFormatVersion = 1;

enum class Precision { f32, f64 };

std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

template <class T>
constexpr Precision precision_of() {
  return sizeof(T) == 4 ? Precision::f32 : Precision::f64;
}

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;  // widened on read; narrowing back to f32 is exact
};

struct Checkpoint {
  Precision precision = Precision::f32;
  std::vector<CheckpointEntry> entries;
  nlohmann::json meta = nlohmann::json::object();

  const CheckpointEntry& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

/// Writes values at the given precision.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <class T>
CheckpointEntry make_entry(const std::string& name, const Tensor<T>& t) {
  const auto v = t.values();
  return {name, t.shape(), std::vector<double>(v.begin(), v.end())};
}

}  // namespace frebis
