#pragma once

#include "volrig/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace volrig {

using Index3 = Eigen::Vector3i;

/// Regular cubic grid. Cell (i, j, k) spans origin + [i, i+1) * cell_size along x
/// (likewise j/y, k/z); storage is x-fastest: index = (k * R + j) * R + i.
struct VoxelGrid {
  int resolution = 88;
  Vec3 origin = Vec3::Zero();
  double cell_size = 1.0;

  static constexpr int kPadding = 2;

  /// Cube around the mesh bounding box with kPadding empty cells on each side.
  static VoxelGrid around(const TriangleMesh& mesh, int resolution);

  std::size_t count() const {
    const auto r = static_cast<std::size_t>(resolution);
    return r * r * r;
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * resolution + j) * resolution + i;
  }
  std::size_t index(const Index3& c) const { return index(c.x(), c.y(), c.z()); }
  Index3 coords(std::size_t idx) const {
    const auto r = static_cast<std::size_t>(resolution);
    return Index3(static_cast<int>(idx % r), static_cast<int>((idx / r) % r), static_cast<int>(idx / (r * r)));
  }
  bool contains(const Index3& c) const {
    return (c.array() >= 0).all() && (c.array() < resolution).all();
  }
  Vec3 center(const Index3& c) const { return origin + (c.cast<double>() + Vec3::Constant(0.5)) * cell_size; }
  Vec3 center(std::size_t idx) const { return center(coords(idx)); }
  /// Continuous grid coordinates in which cell centers sit at integers.
  Vec3 to_grid(const Vec3& p) const { return (p - origin) / cell_size - Vec3::Constant(0.5); }
  Vec3 from_grid(const Vec3& g) const { return origin + (g + Vec3::Constant(0.5)) * cell_size; }
  /// Cell containing p (not clamped).
  Index3 cell_of(const Vec3& p) const;

  bool operator==(const VoxelGrid& o) const {
    return resolution == o.resolution && origin == o.origin && cell_size == o.cell_size;
  }
};

/// One scalar per cell.
struct Volume {
  VoxelGrid grid;
  std::vector<float> values;

  Volume() = default;
  explicit Volume(const VoxelGrid& g, float fill = 0.0f) : grid(g), values(g.count(), fill) {}

  float& operator[](std::size_t i) { return values[i]; }
  float operator[](std::size_t i) const { return values[i]; }
  float& at(const Index3& c) { return values[grid.index(c)]; }
  float at(const Index3& c) const { return values[grid.index(c)]; }

  /// Trilinear interpolation at a world position, clamped to the grid.
  double sample(const Vec3& p) const;
};

/// Surface-plus-interior cells; N_s is count().
struct OccupancyMask {
  VoxelGrid grid;
  std::vector<std::uint8_t> data;

  std::size_t count() const;
  bool operator[](std::size_t i) const { return data[i] != 0; }
};

struct DumpChannel {
  std::string name;
  const Volume* volume;
};

/// Writes raw little-endian float32 files (x-fastest) plus header.json into dir.
void write_volume_dump(const std::filesystem::path& dir, const std::vector<DumpChannel>& channels);

struct LoadedDump {
  VoxelGrid grid;
  std::vector<std::string> names;
  std::vector<Volume> volumes;
};
LoadedDump read_volume_dump(const std::filesystem::path& dir);

/// 8-bit PGM of one axis-aligned slice, linearly rescaled to [0, 255].
void write_pgm_slice(const Volume& volume, int axis, int slice, const std::filesystem::path& path);

}  // namespace volrig
