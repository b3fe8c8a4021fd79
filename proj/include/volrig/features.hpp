#pragma once

#include "volrig/mesh.hpp"
#include "volrig/mesh_query.hpp"
#include "volrig/volume.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace volrig {

enum class VoxelClass : std::uint8_t { Exterior = 0, Surface = 1, Interior = 2 };

struct Voxelization {
  VoxelGrid grid;
  std::vector<VoxelClass> classes;
  OccupancyMask mask;

  bool is_surface(std::size_t i) const { return classes[i] == VoxelClass::Surface; }
  std::size_t surface_count() const;
  std::size_t interior_count() const;
};

/// Conservative triangle/axis-aligned-box overlap (separating axis test).
bool triangle_box_overlap(const Vec3& box_center, const Vec3& half_size, const Vec3& a, const Vec3& b, const Vec3& c);

/// Surface cells are those touched by a triangle; the exterior is flood-filled from the grid
/// boundary through non-surface cells (6-connectivity) and everything else is interior.
Voxelization voxelize(const TriangleMesh& mesh, const VoxelGrid& grid);
Voxelization voxelize(const TriangleMesh& mesh, int resolution);

/// Signed distance, negative inside. Exact at surface cells, first-order fast marching elsewhere.
Volume compute_sdf(const MeshQuery& query, const Voxelization& vox);

/// First-order upwind fast marching of |grad phi| = 1 from the cells flagged in `known`,
/// whose unsigned values seed the front. Returns unsigned distances.
std::vector<double> fast_march(const VoxelGrid& grid, const std::vector<double>& seed_values,
                               const std::vector<std::uint8_t>& known);

struct CurvatureEstimate {
  double k1 = 0.0;  // k1 >= k2; convex regions are positive
  double k2 = 0.0;
  bool degenerate = false;
};

/// Quadric z = a x^2 + b xy + c y^2 fitted in each sample's normal frame over its
/// `neighbors` nearest samples.
std::vector<CurvatureEstimate> compute_curvatures(const std::vector<SurfaceSample>& samples, int neighbors = 30);

struct DiameterEstimate {
  double value = 0.0;
  bool missed = false;  // every ray missed
};

struct DiameterOptions {
  int rays = 8;
  double cone_degrees = 30.0;  // full aperture
  double inward_offset = 1e-4;
};

/// Median inward ray length in a cone around the reversed normal.
std::vector<DiameterEstimate> compute_local_shape_diameter(const MeshQuery& query,
                                                           const std::vector<SurfaceSample>& samples,
                                                           const DiameterOptions& opts = {});

/// Per-cell mean of per-sample features over surface cells; sample-free surface cells copy the
/// nearest sample-bearing surface cell; all other cells are 0.
std::vector<Volume> splat_surface_features(const Voxelization& vox, const std::vector<SurfaceSample>& samples,
                                           const std::vector<std::vector<double>>& features);

/// Unnormalized Gaussian KDE of mesh vertices, bandwidth = factor * average edge length,
/// truncated at three bandwidths.
Volume compute_vertex_density(const TriangleMesh& mesh, const VoxelGrid& grid, double bandwidth_factor = 10.0);
Volume compute_vertex_density_with_bandwidth(const TriangleMesh& mesh, const VoxelGrid& grid, double bandwidth);

/// R x R x R x 5 input tensor, channel order SDF, k1, k2, LSD, LVD; channel-last.
struct ShapeChannels {
  static constexpr int kCount = 5;
  static constexpr std::array<const char*, kCount> kNames = {"sdf", "k1", "k2", "lsd", "lvd"};

  VoxelGrid grid;
  std::vector<float> data;

  float at(std::size_t voxel, int channel) const { return data[voxel * kCount + channel]; }
  Volume channel(int c) const;
};

ShapeChannels assemble_channels(const Voxelization& vox, const Volume& sdf, const Volume& k1, const Volume& k2,
                                const Volume& lsd, const Volume& lvd);

struct FeatureOptions {
  int resolution = 88;
  std::size_t samples = 16000;
  std::uint64_t seed = 1;
  int curvature_neighbors = 30;
  DiameterOptions diameter;
  double density_bandwidth_factor = 10.0;
};

struct Features {
  ShapeChannels channels;
  OccupancyMask mask;
};

/// Full featurization of a normalized mesh.
Features featurize(const TriangleMesh& mesh, const FeatureOptions& opts);

/// Channel/mask statistics for logging.
struct ChannelStats {
  std::string name;
  double min, max, mean;
};
std::vector<ChannelStats> channel_stats(const Features& f);

}  // namespace volrig
