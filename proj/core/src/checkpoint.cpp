#include "frebis/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "frebis/errors.hpp"

namespace frebis {

namespace {

constexpr const char* kMagic = "FREBIS-CKPT";

template <class U>
U to_little(U bits) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = (out << 8) | (bits & 0xff);
      bits >>= 8;
    }
    return out;
  }
  return bits;
}

template <class F, class U>
void write_values(std::ostream& os, const std::vector<double>& values) {
  std::vector<U> buf(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    buf[i] = to_little(std::bit_cast<U>(static_cast<F>(values[i])));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(U)));
}

template <class F, class U>
std::vector<double> read_values(std::istream& is, std::size_t n) {
  std::vector<U> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(U)));
  if (is.gcount() != static_cast<std::streamsize>(n * sizeof(U))) throw IoError("checkpoint payload truncated");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<F>(to_little(buf[i]));
  return out;
}

}  // namespace

std::string precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32") return Precision::f32;
  if (name == "f64") return Precision::f64;
  throw ValidationError("unknown precision '" + name + "' (expected f32 or f64)");
}

const CheckpointEntry& Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw IoError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["precision"] = precision_name(ckpt.precision);
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& e : ckpt.entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw ShapeError("checkpoint entry '" + e.name + "' does not match its shape");
    }
    manifest["tensors"].push_back({{"name", e.name}, {"shape", e.shape}});
  }
  manifest["meta"] = ckpt.meta;
  const std::string text = manifest.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os << kMagic << '\n' << text.size() << '\n' << text;
    for (const auto& e : ckpt.entries) {
      if (ckpt.precision == Precision::f32) {
        write_values<float, std::uint32_t>(os, e.values);
      } else {
        write_values<double, std::uint64_t>(os, e.values);
      }
    }
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::string magic;
  std::getline(is, magic);
  if (magic != kMagic) throw IoError("'" + path.string() + "' is not a checkpoint file");
  std::string len_line;
  std::getline(is, len_line);
  std::size_t len = 0;
  try {
    len = std::stoul(len_line);
  } catch (const std::exception&) {
    throw IoError("malformed checkpoint header in '" + path.string() + "'");
  }
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (is.gcount() != static_cast<std::streamsize>(len)) throw IoError("checkpoint manifest truncated");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw FormatVersionError("unsupported checkpoint format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.precision = parse_precision(manifest.at("precision").get<std::string>());
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& t : manifest.at("tensors")) {
    CheckpointEntry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    const auto n = shape_numel(e.shape);
    e.values = ckpt.precision == Precision::f32 ? read_values<float, std::uint32_t>(is, n)
                                                : read_values<double, std::uint64_t>(is, n);
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

}  // namespace frebis
