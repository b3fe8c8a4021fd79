#include "volrig/volume.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace volrig {

namespace {

void write_le_floats(std::ostream& out, const std::vector<float>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
}

std::vector<float> read_le_floats(std::istream& in, std::size_t n) {
  std::vector<float> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw std::runtime_error("truncated raw volume file");
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = __builtin_bswap32(bits);
      std::memcpy(&v, &bits, 4);
    }
  }
  return values;
}

}  // namespace

VoxelGrid VoxelGrid::around(const TriangleMesh& mesh, int resolution) {
  if (resolution < 8) throw std::invalid_argument("grid resolution must be at least 8");
  if (mesh.vertices.empty()) throw MeshError("cannot build a grid around an empty mesh");
  const Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw MeshError("degenerate mesh: zero extent on all axes");
  VoxelGrid g;
  g.resolution = resolution;
  g.cell_size = extent / static_cast<double>(resolution - 2 * kPadding);
  const Vec3 mid = 0.5 * (lo + hi);
  g.origin = mid - Vec3::Constant(0.5 * resolution * g.cell_size);
  return g;
}

Index3 VoxelGrid::cell_of(const Vec3& p) const {
  const Vec3 g = (p - origin) / cell_size;
  return Index3(static_cast<int>(std::floor(g.x())), static_cast<int>(std::floor(g.y())),
                static_cast<int>(std::floor(g.z())));
}

double Volume::sample(const Vec3& p) const {
  const int r = grid.resolution;
  const Vec3 g = grid.to_grid(p).cwiseMax(Vec3::Zero()).cwiseMin(Vec3::Constant(r - 1));
  const Index3 base(std::min(static_cast<int>(std::floor(g.x())), r - 2),
                    std::min(static_cast<int>(std::floor(g.y())), r - 2),
                    std::min(static_cast<int>(std::floor(g.z())), r - 2));
  const Vec3 f = g - base.cast<double>();
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? f.x() : 1.0 - f.x()) * (dy ? f.y() : 1.0 - f.y()) * (dz ? f.z() : 1.0 - f.z());
        if (w == 0.0) continue;
        acc += w * values[grid.index(base.x() + dx, base.y() + dy, base.z() + dz)];
      }
  return acc;
}

std::size_t OccupancyMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

void write_volume_dump(const std::filesystem::path& dir, const std::vector<DumpChannel>& channels) {
  if (channels.empty()) throw std::invalid_argument("nothing to dump");
  std::filesystem::create_directories(dir);
  const VoxelGrid& grid = channels.front().volume->grid;
  nlohmann::json header;
  header["resolution"] = grid.resolution;
  header["origin"] = {grid.origin.x(), grid.origin.y(), grid.origin.z()};
  header["cell_size"] = grid.cell_size;
  header["dtype"] = "float32";
  header["byte_order"] = "little";
  header["layout"] = "x-fastest";
  header["channels"] = nlohmann::json::array();
  for (const auto& ch : channels) {
    if (!(ch.volume->grid == grid)) throw std::invalid_argument("channel '" + ch.name + "' is on a different grid");
    const std::string file = ch.name + ".raw";
    std::ofstream out(dir / file, std::ios::binary);
    write_le_floats(out, ch.volume->values);
    if (!out) throw std::runtime_error("failed writing " + (dir / file).string());
    header["channels"].push_back({{"name", ch.name}, {"file", file}});
  }
  std::ofstream hout(dir / "header.json");
  hout << header.dump(2) << '\n';
}

LoadedDump read_volume_dump(const std::filesystem::path& dir) {
  std::ifstream hin(dir / "header.json");
  if (!hin) throw std::runtime_error("missing header.json in " + dir.string());
  const auto header = nlohmann::json::parse(hin);
  LoadedDump out;
  out.grid.resolution = header.at("resolution").get<int>();
  const auto o = header.at("origin");
  out.grid.origin = Vec3(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
  out.grid.cell_size = header.at("cell_size").get<double>();
  for (const auto& ch : header.at("channels")) {
    std::ifstream in(dir / ch.at("file").get<std::string>(), std::ios::binary);
    if (!in) throw std::runtime_error("missing channel file " + ch.at("file").get<std::string>());
    Volume v(out.grid);
    v.values = read_le_floats(in, out.grid.count());
    out.names.push_back(ch.at("name").get<std::string>());
    out.volumes.push_back(std::move(v));
  }
  return out;
}

void write_pgm_slice(const Volume& volume, int axis, int slice, const std::filesystem::path& path) {
  const int r = volume.grid.resolution;
  if (axis < 0 || axis > 2) throw std::invalid_argument("axis must be 0, 1 or 2");
  if (slice < 0 || slice >= r) throw std::invalid_argument("slice index out of range");
  std::vector<float> img(static_cast<std::size_t>(r) * r);
  for (int v = 0; v < r; ++v)
    for (int u = 0; u < r; ++u) {
      Index3 c;
      c[axis] = slice;
      c[(axis + 1) % 3] = u;
      c[(axis + 2) % 3] = v;
      img[static_cast<std::size_t>(r - 1 - v) * r + u] = volume.at(c);
    }
  const auto [mn, mx] = std::minmax_element(img.begin(), img.end());
  const float lo = *mn, span = *mx - *mn;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << r << ' ' << r << "\n255\n";
  for (float v : img) {
    const float t = span > 0 ? (v - lo) / span : 0.0f;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0f * t))));
  }
}

}  // namespace volrig
