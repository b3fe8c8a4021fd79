#include "volrig/mesh_query.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace volrig {

namespace {

bool ray_box(const Vec3& o, const Vec3& inv, const Vec3& lo, const Vec3& hi, double tmax) {
  double t0 = 0.0, t1 = tmax;
  for (int a = 0; a < 3; ++a) {
    double tn = (lo[a] - o[a]) * inv[a];
    double tf = (hi[a] - o[a]) * inv[a];
    if (std::isnan(tn) || std::isnan(tf)) {
      // Ray parallel to and on the slab boundary.
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return false;
  }
  return true;
}

double box_distance2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
  return d.squaredNorm();
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = va + vb + vc;
  if (denom <= 0) {
    // Degenerate triangle: fall back to the closest edge point.
    auto seg = [&](const Vec3& u, const Vec3& v) {
      const Vec3 uv = v - u;
      const double l2 = uv.squaredNorm();
      const double t = l2 > 0 ? std::clamp((p - u).dot(uv) / l2, 0.0, 1.0) : 0.0;
      return Vec3(u + t * uv);
    };
    Vec3 best = seg(a, b);
    for (const Vec3& q : {seg(b, c), seg(c, a)})
      if ((q - p).squaredNorm() < (best - p).squaredNorm()) best = q;
    return best;
  }
  const double v = vb / denom, w = vc / denom;
  return a + ab * v + ac * w;
}

std::optional<double> intersect_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  const double scale = e1.norm() * e2.norm();
  if (std::abs(det) <= 1e-14 * scale) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return e2.dot(qv) * inv;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double l2 = ab.dot(ab);
  const double s = (p - a).dot(ab);
  if (l2 == 0.0 || s <= 0.0) return (p - a).norm();
  if (s >= l2) return (p - b).norm();
  return (p - (a + (s / l2) * ab)).norm();
}

MeshQuery::MeshQuery(const TriangleMesh& mesh) : mesh_(&mesh) {
  epsilon_ = 1e-6 * std::max(mesh.longest_extent(), 1e-12);
  const int n = static_cast<int>(mesh.triangles.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  centroids_.resize(n);
  for (int t = 0; t < n; ++t) {
    const auto& tri = mesh.triangles[t];
    centroids_[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
  }
  if (n > 0) {
    nodes_.reserve(2 * n);
    build(0, n);
  }
}

int MeshQuery::build(int begin, int end) {
  Node node;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    for (int k : mesh_->triangles[order_[i]]) {
      node.lo = node.lo.cwiseMin(mesh_->vertices[k]);
      node.hi = node.hi.cwiseMax(mesh_->vertices[k]);
    }
  }
  node.begin = begin;
  node.end = end;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= 4) return id;
  Vec3 clo = centroids_[order_[begin]], chi = clo;
  for (int i = begin; i < end; ++i) {
    clo = clo.cwiseMin(centroids_[order_[i]]);
    chi = chi.cwiseMax(centroids_[order_[i]]);
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double ca = centroids_[a][axis], cb = centroids_[b][axis];
    return ca < cb || (ca == cb && a < b);
  });
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

std::optional<RayHit> MeshQuery::raycast(const Vec3& origin, const Vec3& dir) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  double best_t = std::numeric_limits<double>::infinity();
  std::size_t best_tri = std::numeric_limits<std::size_t>::max();
  raycast_rec(0, origin, dir, inv, best_t, best_tri);
  if (!std::isfinite(best_t)) return std::nullopt;
  return RayHit{best_t, best_tri};
}

void MeshQuery::raycast_rec(int id, const Vec3& o, const Vec3& d, const Vec3& inv, double& best_t,
                            std::size_t& best_tri) const {
  const Node& node = nodes_[id];
  // Inflate slightly so hits exactly on the box boundary are not culled.
  const Vec3 pad = Vec3::Constant(epsilon_);
  if (!ray_box(o, inv, node.lo - pad, node.hi + pad, std::isfinite(best_t) ? best_t + epsilon_ : 1e300)) return;
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const std::size_t t = static_cast<std::size_t>(order_[i]);
      const auto& tri = mesh_->triangles[t];
      const auto hit = intersect_triangle(o, d, mesh_->vertices[tri[0]], mesh_->vertices[tri[1]], mesh_->vertices[tri[2]]);
      if (!hit || *hit <= epsilon_) continue;
      if (*hit < best_t || (*hit == best_t && t < best_tri)) {
        best_t = *hit;
        best_tri = t;
      }
    }
    return;
  }
  raycast_rec(node.left, o, d, inv, best_t, best_tri);
  raycast_rec(node.right, o, d, inv, best_t, best_tri);
}

ClosestPoint MeshQuery::closest_point(const Vec3& p) const {
  ClosestPoint best{Vec3::Zero(), std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
  if (!nodes_.empty()) closest_rec(0, p, best);
  return best;
}

void MeshQuery::closest_rec(int id, const Vec3& p, ClosestPoint& best) const {
  const Node& node = nodes_[id];
  if (box_distance2(p, node.lo, node.hi) > best.distance * best.distance) return;
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const std::size_t t = static_cast<std::size_t>(order_[i]);
      const auto& tri = mesh_->triangles[t];
      const Vec3 q = closest_point_on_triangle(p, mesh_->vertices[tri[0]], mesh_->vertices[tri[1]], mesh_->vertices[tri[2]]);
      const double dist = (q - p).norm();
      if (dist < best.distance || (dist == best.distance && t < best.triangle)) best = {q, dist, t};
    }
    return;
  }
  const double dl = box_distance2(p, nodes_[node.left].lo, nodes_[node.left].hi);
  const double dr = box_distance2(p, nodes_[node.right].lo, nodes_[node.right].hi);
  if (dl <= dr) {
    closest_rec(node.left, p, best);
    closest_rec(node.right, p, best);
  } else {
    closest_rec(node.right, p, best);
    closest_rec(node.left, p, best);
  }
}

double MeshQuery::winding_number(const Vec3& p) const {
  // Van Oosterom-Strackee solid angle per triangle.
  double total = 0.0;
  for (const auto& tri : mesh_->triangles) {
    const Vec3 a = mesh_->vertices[tri[0]] - p;
    const Vec3 b = mesh_->vertices[tri[1]] - p;
    const Vec3 c = mesh_->vertices[tri[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

}  // namespace volrig
