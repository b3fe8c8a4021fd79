#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace volrig {

using Vec3 = Eigen::Vector3d;

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Indexed triangle soup. No welding or connectivity is assumed.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> vertex_normals;

  bool empty() const { return triangles.empty(); }
  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
  double longest_extent() const;
  double triangle_area(std::size_t t) const;
  Vec3 triangle_normal(std::size_t t) const;
  double total_area() const;

  /// Recomputes vertex normals as the area-weighted average of incident face normals.
  void compute_vertex_normals();
  /// Throws MeshError on out-of-range indices or non-finite coordinates.
  void validate() const;
};

/// p -> scale * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
  Vec3 inverse(const Vec3& p) const { return (p - translation) / scale; }
};

struct SurfaceSample {
  Vec3 position;
  Vec3 normal;
  std::size_t triangle_id = 0;
};

/// Plane {p : normal . p = offset}.
struct SymmetryPlane {
  Vec3 normal = Vec3::UnitX();
  double offset = 0.0;

  Vec3 reflect(const Vec3& p) const { return p - 2.0 * (normal.dot(p) - offset) * normal; }
};

/// Reads a Wavefront OBJ (v, vn, f). n-gons are fan-triangulated.
TriangleMesh load_mesh(const std::filesystem::path& path);
TriangleMesh parse_obj(const std::string& text);
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

struct NormalizedMesh {
  TriangleMesh mesh;
  SimilarityTransform transform;  // original -> normalized
};

/// Grounds the mesh on the x-z plane (min y = 0), moves the area-weighted
/// surface centroid's x-z projection to the origin and scales the longest
/// axis-aligned extent to 1.
NormalizedMesh normalize_mesh(const TriangleMesh& mesh);

/// Area-uniform surface samples; deterministic for a given seed.
std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

/// Mean length over the three edges of every triangle.
double average_edge_length(const TriangleMesh& mesh);

/// Nearest positive hit distance, or nothing.
std::optional<double> ray_mesh_intersect(const TriangleMesh& mesh, const Vec3& origin, const Vec3& dir);

struct SymmetryOptions {
  std::size_t samples = 2000;
  double threshold = 0.02;  // fraction of the longest extent
  std::uint64_t seed = 7;
};

/// Tests the plane x = 0 and returns it when the reflected surface matches the original.
std::optional<SymmetryPlane> detect_bilateral_symmetry(const TriangleMesh& mesh, const SymmetryOptions& opts = {});

/// Symmetric Chamfer distance between the surface and its mirror image across x = 0,
/// as a fraction of the longest extent.
double mirror_chamfer_distance(const TriangleMesh& mesh, const SymmetryOptions& opts = {});

/// Concatenates two soups.
TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b);

}  // namespace volrig
