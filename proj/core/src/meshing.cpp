#include "frebis/meshing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "frebis/errors.hpp"
#include "frebis/parallel.hpp"
#include "marching_cubes_table.hpp"

namespace frebis {

namespace {

constexpr std::size_t kChunkPoints = 4096;

// Corner offsets and edge endpoints in the table's convention.
constexpr std::array<std::array<int, 3>, 8> kCorner{{
    {{0, 0, 0}}, {{1, 0, 0}}, {{1, 1, 0}}, {{0, 1, 0}}, {{0, 0, 1}}, {{1, 0, 1}}, {{1, 1, 1}}, {{0, 1, 1}},
}};
constexpr std::array<std::array<int, 2>, 12> kEdge{{
    {{0, 1}}, {{1, 2}}, {{2, 3}}, {{3, 0}}, {{4, 5}}, {{5, 6}}, {{6, 7}}, {{7, 4}}, {{0, 4}}, {{1, 5}}, {{2, 6}}, {{3, 7}},
}};

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

// A lattice edge is named by its lower endpoint and axis.
struct EdgeKey {
  std::uint64_t id;
  int i, j, k, axis;
};

struct SlabOutput {
  std::vector<EdgeKey> corners;  // three per triangle
};

template <class T>
std::vector<T> to_precision(std::span<const double> in) {
  return std::vector<T>(in.begin(), in.end());
}

}  // namespace

void SdfGrid::validate() const {
  if (resolution < 2) throw ValidationError("grid resolution must be at least 2");
  for (int a = 0; a < 3; ++a) {
    if (!(hi[a] > lo[a]) || !std::isfinite(lo[a]) || !std::isfinite(hi[a])) {
      throw ValidationError("grid bounds are degenerate");
    }
  }
  const auto r = static_cast<std::size_t>(resolution);
  if (values.size() != r * r * r) throw ShapeError("grid holds the wrong number of samples");
}

double SdfGrid::cell_diagonal() const {
  const double dx = spacing(0), dy = spacing(1), dz = spacing(2);
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void TriangleMesh::validate() const {
  for (const auto& t : triangles) {
    for (const auto v : t) {
      if (v >= vertices.size()) throw ValidationError("triangle index out of range");
    }
  }
  if (!colors.empty() && colors.size() != vertices.size()) {
    throw ValidationError("mesh has " + std::to_string(colors.size()) + " colors for " +
                          std::to_string(vertices.size()) + " vertices");
  }
}

std::vector<double> TriangleMesh::triangle_areas() const {
  std::vector<double> out;
  out.reserve(triangles.size());
  for (const auto& t : triangles) {
    const auto& a = vertices[t[0]];
    out.push_back(0.5 * norm(cross(sub(vertices[t[1]], a), sub(vertices[t[2]], a))));
  }
  return out;
}

double TriangleMesh::surface_area() const {
  double s = 0;
  for (double a : triangle_areas()) s += a;
  return s;
}

SdfGrid sample_grid(const BatchField& field, int resolution, const Vec3& lo, const Vec3& hi, int threads) {
  SdfGrid grid;
  grid.resolution = resolution;
  grid.lo = lo;
  grid.hi = hi;
  if (resolution < 2) throw ValidationError("grid resolution must be at least 2");
  const auto r = static_cast<std::size_t>(resolution);
  grid.values.resize(r * r * r);
  grid.validate();
  const std::size_t total = grid.values.size();
  const std::size_t chunks = (total + kChunkPoints - 1) / kChunkPoints;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunkPoints;
    const std::size_t end = std::min(total, begin + kChunkPoints);
    std::vector<double> pts(3 * (end - begin));
    for (std::size_t n = begin; n < end; ++n) {
      const int i = static_cast<int>(n % r);
      const int j = static_cast<int>((n / r) % r);
      const int k = static_cast<int>(n / (r * r));
      const Vec3 p = grid.point(i, j, k);
      std::copy(p.begin(), p.end(), pts.begin() + static_cast<std::ptrdiff_t>(3 * (n - begin)));
    }
    field(pts, std::span<double>(grid.values.data() + begin, end - begin));
    for (std::size_t n = begin; n < end; ++n) {
      if (!std::isfinite(grid.values[n])) throw NumericError("non-finite SDF value while sampling the grid");
    }
  });
  return grid;
}

template <class T>
SdfGrid sample_grid(const FieldModel<T>& model, int resolution, const Vec3& lo, const Vec3& hi,
                    const FieldQuery& query, int threads) {
  return sample_grid(
      [&](std::span<const double> pts, std::span<double> out) {
        NoGradGuard guard;
        const auto p = to_precision<T>(pts);
        const auto d = model.sdf(p, query);
        const auto v = d.values();
        std::copy(v.begin(), v.end(), out.begin());
      },
      resolution, lo, hi, threads);
}

TriangleMesh marching_cubes(const SdfGrid& grid, double iso, int threads) {
  grid.validate();
  const int r = grid.resolution;
  const int cells = r - 1;
  const auto r64 = static_cast<std::uint64_t>(r);
  std::vector<SlabOutput> slabs(static_cast<std::size_t>(cells));
  parallel_for(slabs.size(), threads, [&](std::size_t slab) {
    const int k = static_cast<int>(slab);
    auto& out = slabs[slab].corners;
    for (int j = 0; j < cells; ++j) {
      for (int i = 0; i < cells; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          if (grid.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]) < iso) cube |= 1 << c;
        }
        const auto& row = detail::kTriangleTable[static_cast<std::size_t>(cube)];
        for (std::size_t t = 0; t < row.size() && row[t] >= 0; t += 3) {
          // Table winding faces inside; swap two corners to face outside.
          for (const std::size_t slot : {t, t + 2, t + 1}) {
            const auto& e = kEdge[static_cast<std::size_t>(row[slot])];
            const auto& a = kCorner[e[0]];
            const auto& b = kCorner[e[1]];
            const int li = i + std::min(a[0], b[0]), lj = j + std::min(a[1], b[1]), lk = k + std::min(a[2], b[2]);
            const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
            const std::uint64_t id =
                ((static_cast<std::uint64_t>(lk) * r64 + static_cast<std::uint64_t>(lj)) * r64 +
                 static_cast<std::uint64_t>(li)) * 3 + static_cast<std::uint64_t>(axis);
            out.push_back({id, li, lj, lk, axis});
          }
        }
      }
    }
  });

  auto position = [&](const EdgeKey& e) -> Vec3 {
    const int ni = e.i + (e.axis == 0), nj = e.j + (e.axis == 1), nk = e.k + (e.axis == 2);
    const double v0 = grid.at(e.i, e.j, e.k), v1 = grid.at(ni, nj, nk);
    const double t = (iso - v0) / (v1 - v0);
    const Vec3 p0 = grid.point(e.i, e.j, e.k), p1 = grid.point(ni, nj, nk);
    return {p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]), p0[2] + t * (p1[2] - p0[2])};
  };
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of;
  for (const auto& slab : slabs) {
    for (std::size_t n = 0; n + 2 < slab.corners.size(); n += 3) {
      const std::array<Vec3, 3> p{position(slab.corners[n]), position(slab.corners[n + 1]),
                                  position(slab.corners[n + 2])};
      if (norm(cross(sub(p[1], p[0]), sub(p[2], p[0]))) <= 0) continue;
      std::array<std::uint32_t, 3> tri{};
      for (int c = 0; c < 3; ++c) {
        const auto [it, inserted] =
            vertex_of.try_emplace(slab.corners[n + c].id, static_cast<std::uint32_t>(mesh.vertices.size()));
        if (inserted) mesh.vertices.push_back(p[c]);
        tri[c] = it->second;
      }
      mesh.triangles.push_back(tri);
    }
  }
  return mesh;
}

template <class T>
TriangleMesh per_band_mesh(const FieldModel<T>& model, Band band, int resolution, const Vec3& lo, const Vec3& hi,
                           PerBandMode mode, int threads) {
  FieldQuery query;
  query.isolate_band = band;
  query.per_band_mode = mode;
  return marching_cubes(sample_grid(model, resolution, lo, hi, query, threads), 0.0, threads);
}

template <class T>
TriangleMesh weight_norm_colors(const FieldModel<T>& model, TriangleMesh mesh) {
  if (mesh.vertices.empty() || mesh.empty()) throw ValidationError("weight_norm_colors: empty mesh");
  if (model.config().architecture != Architecture::stratified) {
    throw ValidationError("weight_norm_colors needs the stratified architecture");
  }
  const std::size_t n = mesh.vertices.size();
  std::array<std::vector<double>, 3> norms;
  for (auto& v : norms) v.resize(n);
  NoGradGuard guard;
  for (std::size_t begin = 0; begin < n; begin += kChunkPoints) {
    const std::size_t end = std::min(n, begin + kChunkPoints);
    std::vector<T> pts;
    pts.reserve(3 * (end - begin));
    for (std::size_t v = begin; v < end; ++v) {
      for (int a = 0; a < 3; ++a) pts.push_back(static_cast<T>(mesh.vertices[v][a]));
    }
    const auto out = model.evaluate(pts);
    const double scale = out.weighting ? 1.0 : 1.0 / 3.0;
    const FeatureBatch<T>& f = out.weighting ? out.weighting->weighted : out.features;
    for (const Band b : kBands) {
      const auto& col = f[b];
      const auto vals = col.values();
      const std::size_t w = col.cols();
      for (std::size_t v = begin; v < end; ++v) {
        double s = 0;
        for (std::size_t c = 0; c < w; ++c) {
          const double x = vals[(v - begin) * w + c];
          s += x * x;
        }
        norms[static_cast<std::size_t>(b)][v] = scale * std::sqrt(s);
      }
    }
  }
  mesh.colors.assign(n, {0, 0, 0});
  for (std::size_t b = 0; b < 3; ++b) {
    const auto [mn, mx] = std::minmax_element(norms[b].begin(), norms[b].end());
    const double lo = *mn, range = *mx - *mn;
    const bool constant = !(range > 1e-12 * std::max(1.0, std::abs(*mx)));
    for (std::size_t v = 0; v < n; ++v) {
      float c = kWeightColorTie;
      if (!constant) {
        const double u = std::clamp((norms[b][v] - lo) / range, 0.0, 1.0);
        c = std::clamp(static_cast<float>(kWeightColorLow + (kWeightColorHigh - kWeightColorLow) * u), kWeightColorLow,
                       kWeightColorHigh);
      }
      mesh.colors[v][b] = c;
    }
  }
  return mesh;
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count, Rng& rng) {
  if (mesh.empty()) throw ValidationError("sample_surface: empty mesh");
  const auto areas = mesh.triangle_areas();
  std::vector<double> cumulative(areas.size());
  double total = 0;
  for (std::size_t t = 0; t < areas.size(); ++t) cumulative[t] = (total += areas[t]);
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double u = rng.uniform() * total;
    const auto t = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()),
        areas.size() - 1);
    double a = rng.uniform(), b = rng.uniform();
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const auto& p = mesh.vertices[mesh.triangles[t][0]];
    const auto& q = mesh.vertices[mesh.triangles[t][1]];
    const auto& s = mesh.vertices[mesh.triangles[t][2]];
    out.push_back({p[0] + a * (q[0] - p[0]) + b * (s[0] - p[0]), p[1] + a * (q[1] - p[1]) + b * (s[1] - p[1]),
                   p[2] + a * (q[2] - p[2]) + b * (s[2] - p[2])});
  }
  return out;
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v{};
      if (!(ls >> v[0] >> v[1] >> v[2])) throw IoError("malformed vertex in " + path.string());
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<std::uint32_t, 3> t{};
      for (auto& idx : t) {
        std::string tok;
        if (!(ls >> tok)) throw IoError("malformed face in " + path.string());
        const long long v = std::stoll(tok.substr(0, tok.find('/')));
        if (v < 1) throw IoError("unsupported face index in " + path.string());
        idx = static_cast<std::uint32_t>(v - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  mesh.validate();
  return mesh;
}

namespace {

template <class V>
void put_le(std::ostream& out, V value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

template <class V>
V get_le(std::istream& in) {
  V value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(V));
  if (!in) throw IoError("truncated PLY body");
  return value;
}

}  // namespace

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const bool colored = !mesh.colors.empty();
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (colored) out << "property float red\nproperty float green\nproperty float blue\n";
  out << "element face " << mesh.triangles.size() << "\n"
      << "property list uchar uint vertex_indices\nend_header\n";
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    for (int a = 0; a < 3; ++a) put_le(out, static_cast<float>(mesh.vertices[v][a]));
    if (colored) {
      for (int a = 0; a < 3; ++a) put_le(out, mesh.colors[v][a]);
    }
  }
  for (const auto& t : mesh.triangles) {
    put_le(out, std::uint8_t{3});
    for (const auto idx : t) put_le(out, idx);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw IoError(path.string() + " is not a PLY file");
  std::size_t nv = 0, nf = 0;
  int vertex_props = 0;
  bool colored = false;
  std::string element;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw IoError("unsupported PLY format " + fmt);
    } else if (tag == "element") {
      ls >> element;
      if (element == "vertex") ls >> nv;
      if (element == "face") ls >> nf;
    } else if (tag == "property" && element == "vertex") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw IoError("unsupported PLY vertex property type " + type);
      if (name == "red") colored = true;
      ++vertex_props;
    }
  }
  if (vertex_props != (colored ? 6 : 3)) throw IoError("unsupported PLY vertex layout in " + path.string());
  TriangleMesh mesh;
  mesh.vertices.resize(nv);
  if (colored) mesh.colors.resize(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    for (int a = 0; a < 3; ++a) mesh.vertices[v][a] = get_le<float>(in);
    if (colored) {
      for (int a = 0; a < 3; ++a) mesh.colors[v][a] = get_le<float>(in);
    }
  }
  mesh.triangles.resize(nf);
  for (auto& t : mesh.triangles) {
    if (get_le<std::uint8_t>(in) != 3) throw IoError("only triangle faces are supported");
    for (auto& idx : t) idx = get_le<std::uint32_t>(in);
  }
  mesh.validate();
  return mesh;
}

#define FREBIS_INSTANTIATE(T)                                                                                   \
  template SdfGrid sample_grid(const FieldModel<T>&, int, const Vec3&, const Vec3&, const FieldQuery&, int);   \
  template TriangleMesh per_band_mesh(const FieldModel<T>&, Band, int, const Vec3&, const Vec3&, PerBandMode, int); \
  template TriangleMesh weight_norm_colors(const FieldModel<T>&, TriangleMesh);

FREBIS_INSTANTIATE(float)
FREBIS_INSTANTIATE(double)

}  // namespace frebis
