#include "volrig/mesh.hpp"

#include "volrig/kdtree.hpp"
#include "volrig/mesh_query.hpp"
#include "volrig/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace volrig {

Vec3 TriangleMesh::bbox_min() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) lo = lo.cwiseMin(v);
  return lo;
}

Vec3 TriangleMesh::bbox_max() const {
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) hi = hi.cwiseMax(v);
  return hi;
}

double TriangleMesh::longest_extent() const {
  if (vertices.empty()) return 0.0;
  return (bbox_max() - bbox_min()).maxCoeff();
}

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 * (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
}

Vec3 TriangleMesh::triangle_normal(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::UnitZ();
}

double TriangleMesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
  return a;
}

void TriangleMesh::compute_vertex_normals() {
  vertex_normals.assign(vertices.size(), Vec3::Zero());
  for (const auto& tri : triangles) {
    // Unnormalized cross product is area-weighted.
    const Vec3 n = (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
    for (int k : tri) vertex_normals[k] += n;
  }
  for (auto& n : vertex_normals) {
    const double len = n.norm();
    n = len > 0 ? Vec3(n / len) : Vec3::UnitY();
  }
}

void TriangleMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t)
    for (int k : triangles[t])
      if (k < 0 || k >= nv) throw MeshError("triangle " + std::to_string(t) + " references vertex " + std::to_string(k));
  for (const auto& v : vertices)
    if (!v.allFinite()) throw MeshError("non-finite vertex coordinate");
}

namespace {

double parse_double(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw MeshError("line " + std::to_string(line) + ": invalid number '" + tok + "'");
  }
}

int parse_index(const std::string& tok, int count, int line) {
  const std::string head = tok.substr(0, tok.find('/'));
  int idx = 0;
  const auto res = std::from_chars(head.data(), head.data() + head.size(), idx);
  if (res.ec != std::errc() || res.ptr != head.data() + head.size() || idx == 0)
    throw MeshError("line " + std::to_string(line) + ": invalid face index '" + tok + "'");
  const int resolved = idx > 0 ? idx - 1 : count + idx;
  if (resolved < 0 || resolved >= count)
    throw MeshError("line " + std::to_string(line) + ": face index " + std::to_string(idx) + " out of range");
  return resolved;
}

}  // namespace

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::vector<Vec3> normals;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v" || tag == "vn") {
      std::string a, b, c;
      if (!(ls >> a >> b >> c)) throw MeshError("line " + std::to_string(line) + ": expected 3 coordinates");
      const Vec3 p(parse_double(a, line), parse_double(b, line), parse_double(c, line));
      (tag == "v" ? mesh.vertices : normals).push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) poly.push_back(parse_index(tok, static_cast<int>(mesh.vertices.size()), line));
      if (poly.size() < 3) throw MeshError("line " + std::to_string(line) + ": face with fewer than 3 vertices");
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
    }
  }
  if (mesh.triangles.empty()) throw MeshError("mesh has no faces");
  mesh.validate();
  if (normals.size() == mesh.vertices.size()) {
    mesh.vertex_normals = std::move(normals);
    for (auto& n : mesh.vertex_normals) {
      const double len = n.norm();
      n = len > 0 ? Vec3(n / len) : Vec3::UnitY();
    }
  } else {
    mesh.compute_vertex_normals();
  }
  return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_obj(ss.str());
  } catch (const MeshError& e) {
    throw MeshError(path.string() + ": " + e.what());
  }
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file: " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw MeshError("failed writing mesh file: " + path.string());
}

NormalizedMesh normalize_mesh(const TriangleMesh& mesh) {
  if (mesh.empty()) throw MeshError("cannot normalize an empty mesh");
  const double extent = mesh.longest_extent();
  if (!(extent > 0.0)) throw MeshError("degenerate mesh: zero extent on all axes");

  const double scale = 1.0 / extent;
  Vec3 centroid = Vec3::Zero();
  double area = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double a = mesh.triangle_area(t);
    centroid += a * (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
    area += a;
  }
  if (area > 0.0) {
    centroid /= area;
  } else {
    centroid = 0.5 * (mesh.bbox_min() + mesh.bbox_max());
  }

  SimilarityTransform xf;
  xf.scale = scale;
  xf.translation = Vec3(-scale * centroid.x(), -scale * mesh.bbox_min().y(), -scale * centroid.z());
  // Already-normalized input maps to itself exactly.
  constexpr double snap = 1e-12;
  if (std::abs(xf.scale - 1.0) <= snap) xf.scale = 1.0;
  for (int a = 0; a < 3; ++a)
    if (std::abs(xf.translation[a]) <= snap) xf.translation[a] = 0.0;

  NormalizedMesh out{mesh, xf};
  for (auto& v : out.mesh.vertices) v = xf.apply(v);
  if (out.mesh.vertex_normals.size() != out.mesh.vertices.size()) out.mesh.compute_vertex_normals();
  return out;
}

std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw MeshError("sample count must be positive");
  std::vector<double> cdf(mesh.triangles.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    acc += mesh.triangle_area(t);
    cdf[t] = acc;
  }
  if (!(acc > 0.0)) throw MeshError("cannot sample a mesh with zero total area");

  Rng rng(seed);
  std::vector<SurfaceSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t t = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
    while (mesh.triangle_area(t) == 0.0 && t + 1 < cdf.size()) ++t;
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3 p = (1.0 - r1) * mesh.vertices[tri[0]] + r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                   r1 * r2 * mesh.vertices[tri[2]];
    out.push_back({p, mesh.triangle_normal(t), t});
  }
  return out;
}

double average_edge_length(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) throw MeshError("average edge length needs at least one triangle");
  double total = 0.0;
  for (const auto& tri : mesh.triangles) {
    for (int e = 0; e < 3; ++e) total += (mesh.vertices[tri[e]] - mesh.vertices[tri[(e + 1) % 3]]).norm();
  }
  return total / (3.0 * static_cast<double>(mesh.triangles.size()));
}

std::optional<double> ray_mesh_intersect(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir) {
  const MeshQuery query(mesh);
  const auto hit = query.raycast(origin, dir);
  if (!hit) return std::nullopt;
  return hit->distance;
}

double mirror_chamfer_distance(const TriangleMesh& mesh, const SymmetryOptions& opts) {
  const MeshQuery query(mesh);
  const SymmetryPlane plane;
  const auto samples = sample_surface(mesh, opts.samples, opts.seed);
  // dist(reflect(s), M) equals dist(s, reflect(M)), so one pass covers both Chamfer directions.
  double sum = 0.0;
  for (const auto& s : samples) sum += query.closest_point(plane.reflect(s.position)).distance;
  const double extent = mesh.longest_extent();
  return (sum / static_cast<double>(samples.size())) / (extent > 0 ? extent : 1.0);
}

std::optional<SymmetryPlane> detect_bilateral_symmetry(const TriangleMesh& mesh, const SymmetryOptions& opts) {
  if (mesh.empty()) return std::nullopt;
  if (mirror_chamfer_distance(mesh, opts) < opts.threshold) return SymmetryPlane{};
  return std::nullopt;
}

TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b) {
  TriangleMesh out = a;
  const int base = static_cast<int>(a.vertices.size());
  out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (auto t : b.triangles) out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  if (a.vertex_normals.size() == a.vertices.size() && b.vertex_normals.size() == b.vertices.size()) {
    out.vertex_normals.insert(out.vertex_normals.end(), b.vertex_normals.begin(), b.vertex_normals.end());
  } else {
    out.compute_vertex_normals();
  }
  return out;
}

}  // namespace volrig
