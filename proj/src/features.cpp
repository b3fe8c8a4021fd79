#include "volrig/features.hpp"

#include "volrig/kdtree.hpp"
#include "volrig/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace volrig {

namespace {

constexpr std::array<std::array<int, 3>, 6> kNeighbors6 = {
    {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};

void orthonormal_frame(const Vec3& n, Vec3& t1, Vec3& t2) {
  int axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  t1 = n.cross(Vec3::Unit(axis)).normalized();
  t2 = n.cross(t1);
}

bool axis_test(const Vec3& axis, const Vec3& v0, const Vec3& v1, const Vec3& v2, const Vec3& half) {
  const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
  const double r = half.x() * std::abs(axis.x()) + half.y() * std::abs(axis.y()) + half.z() * std::abs(axis.z());
  return !(std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r);
}

}  // namespace

std::size_t Voxelization::surface_count() const {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), VoxelClass::Surface));
}

std::size_t Voxelization::interior_count() const {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), VoxelClass::Interior));
}

bool triangle_box_overlap(const Vec3& box_center, const Vec3& half, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v0 = a - box_center, v1 = b - box_center, v2 = c - box_center;
  // Box face normals.
  for (int k = 0; k < 3; ++k) {
    if (std::min({v0[k], v1[k], v2[k]}) > half[k] || std::max({v0[k], v1[k], v2[k]}) < -half[k]) return false;
  }
  const Vec3 e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;
  // Triangle plane.
  const Vec3 normal = e0.cross(e1);
  if (!axis_test(normal, v0, v1, v2, half)) return false;
  // Nine edge cross products.
  for (const Vec3& e : {e0, e1, e2}) {
    for (int k = 0; k < 3; ++k) {
      const Vec3 axis = Vec3::Unit(k).cross(e);
      if (axis.squaredNorm() == 0.0) continue;
      if (!axis_test(axis, v0, v1, v2, half)) return false;
    }
  }
  return true;
}

Voxelization voxelize(const TriangleMesh& mesh, int resolution) {
  return voxelize(mesh, VoxelGrid::around(mesh, resolution));
}

Voxelization voxelize(const TriangleMesh& mesh, const VoxelGrid& grid) {
  const int r = grid.resolution;
  Voxelization vox;
  vox.grid = grid;
  vox.classes.assign(grid.count(), VoxelClass::Exterior);
  const Vec3 half = Vec3::Constant(0.5 * grid.cell_size * (1.0 + 1e-9));

  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const Vec3 lo = a.cwiseMin(b).cwiseMin(c), hi = a.cwiseMax(b).cwiseMax(c);
    Index3 clo = grid.cell_of(lo - half * 1e-6), chi = grid.cell_of(hi + half * 1e-6);
    if (!grid.contains(clo) || !grid.contains(chi)) throw MeshError("mesh extends beyond the voxel grid");
    for (int k = clo.z(); k <= chi.z(); ++k)
      for (int j = clo.y(); j <= chi.y(); ++j)
        for (int i = clo.x(); i <= chi.x(); ++i) {
          const std::size_t idx = grid.index(i, j, k);
          if (vox.classes[idx] == VoxelClass::Surface) continue;
          if (triangle_box_overlap(grid.center(Index3(i, j, k)), half, a, b, c)) vox.classes[idx] = VoxelClass::Surface;
        }
  }

  // Flood the exterior from every non-surface boundary cell.
  std::vector<std::uint8_t> reached(grid.count(), 0);
  std::deque<std::size_t> queue;
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        if (i != 0 && j != 0 && k != 0 && i != r - 1 && j != r - 1 && k != r - 1) continue;
        const std::size_t idx = grid.index(i, j, k);
        if (vox.classes[idx] != VoxelClass::Surface && !reached[idx]) {
          reached[idx] = 1;
          queue.push_back(idx);
        }
      }
  while (!queue.empty()) {
    const std::size_t idx = queue.front();
    queue.pop_front();
    const Index3 c = grid.coords(idx);
    for (const auto& d : kNeighbors6) {
      const Index3 n = c + Index3(d[0], d[1], d[2]);
      if (!grid.contains(n)) continue;
      const std::size_t ni = grid.index(n);
      if (reached[ni] || vox.classes[ni] == VoxelClass::Surface) continue;
      reached[ni] = 1;
      queue.push_back(ni);
    }
  }

  vox.mask.grid = grid;
  vox.mask.data.assign(grid.count(), 0);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    if (vox.classes[i] != VoxelClass::Surface && !reached[i]) vox.classes[i] = VoxelClass::Interior;
    vox.mask.data[i] = vox.classes[i] != VoxelClass::Exterior ? 1 : 0;
  }
  return vox;
}

std::vector<double> fast_march(const VoxelGrid& grid, const std::vector<double>& seed_values,
                               const std::vector<std::uint8_t>& known_in) {
  const double h = grid.cell_size;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(grid.count(), inf);
  std::vector<std::uint8_t> known(grid.count(), 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  for (std::size_t i = 0; i < grid.count(); ++i) {
    if (known_in[i]) {
      dist[i] = std::abs(seed_values[i]);
      known[i] = 1;
    }
  }

  auto solve = [&](const Index3& c) {
    std::array<double, 3> a{inf, inf, inf};
    for (int axis = 0; axis < 3; ++axis) {
      for (int s : {-1, 1}) {
        Index3 n = c;
        n[axis] += s;
        if (!grid.contains(n)) continue;
        const std::size_t ni = grid.index(n);
        if (known[ni]) a[axis] = std::min(a[axis], dist[ni]);
      }
    }
    std::sort(a.begin(), a.end());
    double u = a[0] + h;
    if (u > a[1]) {
      const double diff = a[0] - a[1];
      u = 0.5 * (a[0] + a[1] + std::sqrt(std::max(0.0, 2.0 * h * h - diff * diff)));
      if (u > a[2]) {
        const double s = a[0] + a[1] + a[2];
        const double s2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
        u = (s + std::sqrt(std::max(0.0, s * s - 3.0 * (s2 - h * h)))) / 3.0;
      }
    }
    return u;
  };

  auto relax_neighbors = [&](std::size_t idx) {
    const Index3 c = grid.coords(idx);
    for (const auto& d : kNeighbors6) {
      const Index3 n = c + Index3(d[0], d[1], d[2]);
      if (!grid.contains(n)) continue;
      const std::size_t ni = grid.index(n);
      if (known[ni]) continue;
      const double u = solve(n);
      if (u < dist[ni]) {
        dist[ni] = u;
        heap.push({u, ni});
      }
    }
  };

  for (std::size_t i = 0; i < grid.count(); ++i)
    if (known[i]) relax_neighbors(i);
  while (!heap.empty()) {
    const auto [value, idx] = heap.top();
    heap.pop();
    if (known[idx] || value != dist[idx]) continue;
    known[idx] = 1;
    relax_neighbors(idx);
  }
  return dist;
}

Volume compute_sdf(const MeshQuery& query, const Voxelization& vox) {
  const VoxelGrid& grid = vox.grid;
  std::vector<std::size_t> surface;
  for (std::size_t i = 0; i < grid.count(); ++i)
    if (vox.is_surface(i)) surface.push_back(i);

  std::vector<double> seed(grid.count(), 0.0);
  std::vector<std::uint8_t> known(grid.count(), 0);
  parallel_for(surface.size(), [&](std::size_t s) {
    const std::size_t idx = surface[s];
    const Vec3 p = grid.center(idx);
    const double d = query.closest_point(p).distance;
    seed[idx] = query.inside(p) ? -d : d;
  });
  for (std::size_t idx : surface) known[idx] = 1;

  const std::vector<double> dist = fast_march(grid, seed, known);
  Volume sdf(grid);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    switch (vox.classes[i]) {
      case VoxelClass::Surface: sdf[i] = static_cast<float>(seed[i]); break;
      case VoxelClass::Interior: sdf[i] = static_cast<float>(-dist[i]); break;
      case VoxelClass::Exterior: sdf[i] = static_cast<float>(dist[i]); break;
    }
  }
  return sdf;
}

std::vector<CurvatureEstimate> compute_curvatures(const std::vector<SurfaceSample>& samples, int neighbors) {
  std::vector<Vec3> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back(s.position);
  const KdTree tree(std::move(pts));
  std::vector<CurvatureEstimate> out(samples.size());

  parallel_for(samples.size(), [&](std::size_t i) {
    const auto nb = tree.knn(samples[i].position, static_cast<std::size_t>(neighbors));
    Vec3 t1, t2;
    const Vec3 n = samples[i].normal;
    orthonormal_frame(n, t1, t2);
    Eigen::MatrixXd a(nb.size(), 3);
    Eigen::VectorXd z(nb.size());
    double scale = 0.0;
    for (std::size_t r = 0; r < nb.size(); ++r) {
      const Vec3 d = tree.point(nb[r]) - samples[i].position;
      const double x = d.dot(t1), y = d.dot(t2);
      a.row(static_cast<Eigen::Index>(r)) << x * x, x * y, y * y;
      z[static_cast<Eigen::Index>(r)] = d.dot(n);
      scale = std::max(scale, x * x + y * y);
    }
    if (nb.size() < 3 || scale == 0.0) {
      out[i].degenerate = true;
      return;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a / scale, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv[2] <= 1e-8 * sv[0]) {
      out[i].degenerate = true;
      return;
    }
    // (A / s) c = z / s has the same solution as A c = z.
    const Eigen::Vector3d coef = svd.solve(z / scale);
    Eigen::Matrix2d shape;
    shape << 2.0 * coef[0], coef[1], coef[1], 2.0 * coef[2];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(shape);
    // Outward normals: a convex surface bends away from the normal, so negate.
    const Eigen::Vector2d ev = -es.eigenvalues();
    out[i].k1 = std::max(ev[0], ev[1]);
    out[i].k2 = std::min(ev[0], ev[1]);
  });
  return out;
}

std::vector<DiameterEstimate> compute_local_shape_diameter(const MeshQuery& query,
                                                           const std::vector<SurfaceSample>& samples,
                                                           const DiameterOptions& opts) {
  const double half_angle = 0.5 * opts.cone_degrees * std::numbers::pi / 180.0;
  std::vector<DiameterEstimate> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const Vec3 m = -samples[i].normal;
    Vec3 t1, t2;
    orthonormal_frame(m, t1, t2);
    const Vec3 origin = samples[i].position + opts.inward_offset * m;
    std::vector<double> hits;
    hits.reserve(static_cast<std::size_t>(opts.rays));
    for (int r = 0; r < opts.rays; ++r) {
      const double phi = 2.0 * std::numbers::pi * r / opts.rays;
      const Vec3 dir =
          (std::cos(half_angle) * m + std::sin(half_angle) * (std::cos(phi) * t1 + std::sin(phi) * t2)).normalized();
      if (const auto hit = query.raycast(origin, dir)) hits.push_back(hit->distance + opts.inward_offset);
    }
    if (hits.empty()) {
      out[i] = {0.0, true};
      return;
    }
    std::sort(hits.begin(), hits.end());
    const std::size_t n = hits.size();
    out[i].value = n % 2 ? hits[n / 2] : 0.5 * (hits[n / 2 - 1] + hits[n / 2]);
  });
  return out;
}

std::vector<Volume> splat_surface_features(const Voxelization& vox, const std::vector<SurfaceSample>& samples,
                                           const std::vector<std::vector<double>>& features) {
  const VoxelGrid& grid = vox.grid;
  const std::size_t nf = features.size();
  for (const auto& f : features)
    if (f.size() != samples.size()) throw std::invalid_argument("feature/sample count mismatch");

  std::vector<double> sums(grid.count() * nf, 0.0);
  std::vector<std::uint32_t> counts(grid.count(), 0);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Index3 c = grid.cell_of(samples[s].position);
    if (!grid.contains(c)) continue;
    const std::size_t idx = grid.index(c);
    if (!vox.is_surface(idx)) continue;
    ++counts[idx];
    for (std::size_t f = 0; f < nf; ++f) sums[idx * nf + f] += features[f][s];
  }

  std::vector<Volume> out(nf, Volume(grid));
  std::vector<std::size_t> filled;
  std::vector<Vec3> filled_centers;
  for (std::size_t i = 0; i < grid.count(); ++i) {
    if (counts[i] == 0) continue;
    filled.push_back(i);
    filled_centers.push_back(grid.center(i));
    for (std::size_t f = 0; f < nf; ++f) out[f][i] = static_cast<float>(sums[i * nf + f] / counts[i]);
  }
  if (filled.empty()) return out;

  const KdTree tree(std::move(filled_centers));
  for (std::size_t i = 0; i < grid.count(); ++i) {
    if (!vox.is_surface(i) || counts[i] != 0) continue;
    const std::size_t src = filled[tree.nearest(grid.center(i))];
    for (std::size_t f = 0; f < nf; ++f) out[f][i] = out[f][src];
  }
  return out;
}

Volume compute_vertex_density(const TriangleMesh& mesh, const VoxelGrid& grid, double bandwidth_factor) {
  return compute_vertex_density_with_bandwidth(mesh, grid, bandwidth_factor * average_edge_length(mesh));
}

Volume compute_vertex_density_with_bandwidth(const TriangleMesh& mesh, const VoxelGrid& grid, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("density bandwidth must be positive");
  const int r = grid.resolution;
  const double cutoff = 3.0 * h;
  const double inv2h2 = 1.0 / (2.0 * h * h);

  // Vertices touching each z slice, in vertex order so per-cell sums have a fixed order.
  std::vector<std::vector<std::size_t>> by_slice(static_cast<std::size_t>(r));
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const double gz = grid.to_grid(mesh.vertices[v]).z();
    const double span = cutoff / grid.cell_size;
    const int k0 = std::max(0, static_cast<int>(std::ceil(gz - span)));
    const int k1 = std::min(r - 1, static_cast<int>(std::floor(gz + span)));
    for (int k = k0; k <= k1; ++k) by_slice[static_cast<std::size_t>(k)].push_back(v);
  }

  Volume out(grid);
  parallel_for(static_cast<std::size_t>(r), [&](std::size_t ks) {
    const int k = static_cast<int>(ks);
    std::vector<double> acc(static_cast<std::size_t>(r) * r, 0.0);
    const double span = cutoff / grid.cell_size;
    for (std::size_t v : by_slice[ks]) {
      const Vec3& p = mesh.vertices[v];
      const Vec3 g = grid.to_grid(p);
      const int j0 = std::max(0, static_cast<int>(std::ceil(g.y() - span)));
      const int j1 = std::min(r - 1, static_cast<int>(std::floor(g.y() + span)));
      const int i0 = std::max(0, static_cast<int>(std::ceil(g.x() - span)));
      const int i1 = std::min(r - 1, static_cast<int>(std::floor(g.x() + span)));
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          const double d2 = (grid.center(Index3(i, j, k)) - p).squaredNorm();
          if (d2 > cutoff * cutoff) continue;
          acc[static_cast<std::size_t>(j) * r + i] += std::exp(-d2 * inv2h2);
        }
    }
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) out.at(Index3(i, j, k)) = static_cast<float>(acc[static_cast<std::size_t>(j) * r + i]);
  });
  return out;
}

Volume ShapeChannels::channel(int c) const {
  Volume v(grid);
  for (std::size_t i = 0; i < grid.count(); ++i) v[i] = data[i * kCount + c];
  return v;
}

ShapeChannels assemble_channels(const Voxelization& vox, const Volume& sdf, const Volume& k1, const Volume& k2,
                                const Volume& lsd, const Volume& lvd) {
  const std::array<const Volume*, ShapeChannels::kCount> parts = {&sdf, &k1, &k2, &lsd, &lvd};
  for (int c = 0; c < ShapeChannels::kCount; ++c) {
    if (!(parts[c]->grid == vox.grid) || parts[c]->values.size() != vox.grid.count())
      throw std::invalid_argument(std::string("channel '") + ShapeChannels::kNames[c] + "' is on a different grid");
  }
  if (vox.surface_count() == 0) throw std::invalid_argument("no surface voxels; cannot build shape channels");
  ShapeChannels out;
  out.grid = vox.grid;
  out.data.resize(vox.grid.count() * ShapeChannels::kCount);
  for (std::size_t i = 0; i < vox.grid.count(); ++i) {
    for (int c = 0; c < ShapeChannels::kCount; ++c) {
      float v = (*parts[c])[i];
      // Geometric surface channels are defined on surface cells only.
      if (c >= 1 && c <= 3 && !vox.is_surface(i)) v = 0.0f;
      if (!std::isfinite(v)) throw std::runtime_error("non-finite feature value");
      out.data[i * ShapeChannels::kCount + c] = v;
    }
  }
  return out;
}

Features featurize(const TriangleMesh& mesh, const FeatureOptions& opts) {
  const Voxelization vox = voxelize(mesh, opts.resolution);
  const MeshQuery query(mesh);
  const Volume sdf = compute_sdf(query, vox);
  const auto samples = sample_surface(mesh, opts.samples, opts.seed);
  const auto curv = compute_curvatures(samples, opts.curvature_neighbors);
  const auto lsd = compute_local_shape_diameter(query, samples, opts.diameter);
  std::vector<std::vector<double>> per_sample(3, std::vector<double>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    per_sample[0][i] = curv[i].k1;
    per_sample[1][i] = curv[i].k2;
    per_sample[2][i] = lsd[i].value;
  }
  const auto splat = splat_surface_features(vox, samples, per_sample);
  const Volume lvd = compute_vertex_density(mesh, vox.grid, opts.density_bandwidth_factor);
  return Features{assemble_channels(vox, sdf, splat[0], splat[1], splat[2], lvd), vox.mask};
}

std::vector<ChannelStats> channel_stats(const Features& f) {
  std::vector<ChannelStats> out;
  const std::size_t n = f.channels.grid.count();
  for (int c = 0; c < ShapeChannels::kCount; ++c) {
    ChannelStats s{ShapeChannels::kNames[c], std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double v = f.channels.at(i, c);
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      s.mean += v;
    }
    s.mean /= static_cast<double>(n);
    out.push_back(s);
  }
  ChannelStats m{"mask", 0.0, 1.0, static_cast<double>(f.mask.count()) / static_cast<double>(n)};
  out.push_back(m);
  return out;
}

}  // namespace volrig
