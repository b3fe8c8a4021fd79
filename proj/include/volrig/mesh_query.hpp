#pragma once

#include "volrig/mesh.hpp"

#include <optional>
#include <vector>

namespace volrig {

struct RayHit {
  double distance;
  std::size_t triangle;
};

struct ClosestPoint {
  Vec3 point;
  double distance;
  std::size_t triangle;
};

/// Bounding-volume hierarchy over a mesh for ray, closest-point and inside/outside
/// queries. Holds a reference to the mesh, which must outlive it.
class MeshQuery {
 public:
  explicit MeshQuery(const TriangleMesh& mesh);

  const TriangleMesh& mesh() const { return *mesh_; }

  /// Nearest hit with t > epsilon, epsilon = 1e-6 * longest extent. Hits at the same
  /// distance resolve to the smallest triangle index.
  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir) const;

  ClosestPoint closest_point(const Vec3& p) const;

  /// Generalized winding number; about 1 inside closed outward-oriented surfaces.
  double winding_number(const Vec3& p) const;
  bool inside(const Vec3& p) const { return winding_number(p) > 0.5; }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };

  int build(int begin, int end);
  void raycast_rec(int node, const Vec3& o, const Vec3& d, const Vec3& inv, double& best_t,
                   std::size_t& best_tri) const;
  void closest_rec(int node, const Vec3& p, ClosestPoint& best) const;

  const TriangleMesh* mesh_;
  double epsilon_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
};

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Moller-Trumbore with inclusive edges; returns t or nothing.
std::optional<double> intersect_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

}  // namespace volrig
