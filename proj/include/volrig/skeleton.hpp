#pragma once

#include "volrig/mesh.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace volrig {

class SkeletonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Joint {
  std::string name;
  Vec3 position;
};

/// Tree of joints; edges are (parent, child) pairs.
struct Skeleton {
  std::vector<Joint> joints;
  std::vector<std::pair<int, int>> edges;
  int root = 0;

  /// Throws SkeletonError unless edges form a tree rooted at `root`.
  void validate() const;
  std::vector<int> parents() const;  // -1 for the root
  std::vector<std::vector<int>> children() const;
  /// Joint indices of the subtree below j (excluding j).
  std::vector<int> descendants(int j) const;
  int find(const std::string& name) const;
};

/// Mesh and skeleton in the same frame.
struct RiggedCharacter {
  TriangleMesh mesh;
  Skeleton skeleton;
};

/// Text rig format, one record per line:
///   mesh <relative-path>
///   joint <name> <x> <y> <z>
///   root <name>
///   bone <parent-name> <child-name>
struct RigFile {
  std::string mesh_path;
  Skeleton skeleton;
};

RigFile parse_rig(const std::string& text);
RigFile read_rig_file(const std::filesystem::path& path);
void write_rig_file(const std::filesystem::path& path, const Skeleton& skeleton, const std::string& mesh_path);

/// Reads a rig and its companion OBJ, normalizes the mesh and maps the joints with the same transform.
RiggedCharacter load_rig(const std::filesystem::path& path);

/// Writes <dir>/<name>.obj and <dir>/<name>.rig with full precision.
std::filesystem::path save_rig(const RiggedCharacter& character, const std::filesystem::path& dir, const std::string& name);

/// Applies a similarity transform to every joint.
Skeleton transform_skeleton(const Skeleton& s, const SimilarityTransform& xf);

/// Undirected edge set as sorted (min, max) pairs.
std::vector<std::pair<int, int>> undirected_edges(const Skeleton& s);

}  // namespace volrig
