#include "volrig/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace volrig {

void Skeleton::validate() const {
  const int n = static_cast<int>(joints.size());
  if (n == 0) throw SkeletonError("skeleton has no joints");
  if (root < 0 || root >= n) throw SkeletonError("root index out of range");
  for (const auto& j : joints)
    if (!j.position.allFinite()) throw SkeletonError("joint '" + j.name + "' has a non-finite position");
  if (static_cast<int>(edges.size()) != n - 1)
    throw SkeletonError("a tree over " + std::to_string(n) + " joints needs " + std::to_string(n - 1) + " bones, got " +
                        std::to_string(edges.size()));
  std::vector<int> parent(n, -1);
  for (const auto& [p, c] : edges) {
    if (p < 0 || p >= n || c < 0 || c >= n) throw SkeletonError("bone references a missing joint");
    if (p == c) throw SkeletonError("bone connects a joint to itself");
    if (c == root) throw SkeletonError("root joint has a parent");
    if (parent[c] != -1) throw SkeletonError("joint '" + joints[c].name + "' has two parents");
    parent[c] = p;
  }
  // Every joint must reach the root without revisiting.
  for (int j = 0; j < n; ++j) {
    int cur = j, steps = 0;
    while (cur != root) {
      cur = parent[cur];
      if (cur < 0 || ++steps > n) throw SkeletonError("bones contain a cycle or a disconnected component");
    }
  }
}

std::vector<int> Skeleton::parents() const {
  std::vector<int> p(joints.size(), -1);
  for (const auto& [a, b] : edges) p[b] = a;
  return p;
}

std::vector<std::vector<int>> Skeleton::children() const {
  std::vector<std::vector<int>> c(joints.size());
  for (const auto& [a, b] : edges) c[a].push_back(b);
  return c;
}

std::vector<int> Skeleton::descendants(int j) const {
  const auto ch = children();
  std::vector<int> out, stack = ch[j];
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    out.push_back(v);
    stack.insert(stack.end(), ch[v].begin(), ch[v].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int Skeleton::find(const std::string& name) const {
  for (std::size_t i = 0; i < joints.size(); ++i)
    if (joints[i].name == name) return static_cast<int>(i);
  return -1;
}

RigFile parse_rig(const std::string& text) {
  RigFile rig;
  std::map<std::string, int> index;
  std::vector<std::pair<std::string, std::string>> bones;
  std::string root_name;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  auto fail = [&](const std::string& msg) { throw SkeletonError("rig line " + std::to_string(line) + ": " + msg); };
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "mesh") {
      if (!(ls >> rig.mesh_path)) fail("mesh record needs a path");
    } else if (tag == "joint") {
      std::string name, xs, ys, zs;
      if (!(ls >> name >> xs >> ys >> zs)) fail("joint record needs a name and 3 coordinates");
      if (index.count(name)) fail("duplicate joint '" + name + "'");
      try {
        index[name] = static_cast<int>(rig.skeleton.joints.size());
        rig.skeleton.joints.push_back({name, Vec3(std::stod(xs), std::stod(ys), std::stod(zs))});
      } catch (const std::exception&) {
        fail("invalid joint coordinates");
      }
    } else if (tag == "root") {
      if (!(ls >> root_name)) fail("root record needs a joint name");
    } else if (tag == "bone") {
      std::string p, c;
      if (!(ls >> p >> c)) fail("bone record needs two joint names");
      bones.emplace_back(p, c);
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  for (const auto& [p, c] : bones) {
    const auto ip = index.find(p), ic = index.find(c);
    if (ip == index.end() || ic == index.end()) throw SkeletonError("bone " + p + " -> " + c + " references an unknown joint");
    rig.skeleton.edges.emplace_back(ip->second, ic->second);
  }
  if (root_name.empty()) {
    rig.skeleton.root = 0;
  } else {
    const auto it = index.find(root_name);
    if (it == index.end()) throw SkeletonError("root '" + root_name + "' is not a joint");
    rig.skeleton.root = it->second;
  }
  rig.skeleton.validate();
  return rig;
}

RigFile read_rig_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SkeletonError("cannot open rig file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_rig(ss.str());
  } catch (const SkeletonError& e) {
    throw SkeletonError(path.string() + ": " + e.what());
  }
}

void write_rig_file(const std::filesystem::path& path, const Skeleton& skeleton, const std::string& mesh_path) {
  skeleton.validate();
  std::ofstream out(path);
  if (!out) throw SkeletonError("cannot write rig file: " + path.string());
  out << std::setprecision(17);
  if (!mesh_path.empty()) out << "mesh " << mesh_path << '\n';
  for (const auto& j : skeleton.joints)
    out << "joint " << j.name << ' ' << j.position.x() << ' ' << j.position.y() << ' ' << j.position.z() << '\n';
  out << "root " << skeleton.joints[skeleton.root].name << '\n';
  for (const auto& [p, c] : skeleton.edges) out << "bone " << skeleton.joints[p].name << ' ' << skeleton.joints[c].name << '\n';
  if (!out) throw SkeletonError("failed writing rig file: " + path.string());
}

Skeleton transform_skeleton(const Skeleton& s, const SimilarityTransform& xf) {
  Skeleton out = s;
  for (auto& j : out.joints) j.position = xf.apply(j.position);
  return out;
}

RiggedCharacter load_rig(const std::filesystem::path& path) {
  const RigFile rig = read_rig_file(path);
  if (rig.mesh_path.empty()) throw SkeletonError(path.string() + ": rig has no mesh record");
  std::filesystem::path mesh_path = rig.mesh_path;
  if (mesh_path.is_relative()) mesh_path = path.parent_path() / mesh_path;
  const auto normalized = normalize_mesh(load_mesh(mesh_path));
  return {normalized.mesh, transform_skeleton(rig.skeleton, normalized.transform)};
}

std::filesystem::path save_rig(const RiggedCharacter& character, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  save_mesh(character.mesh, dir / (name + ".obj"));
  const auto rig_path = dir / (name + ".rig");
  write_rig_file(rig_path, character.skeleton, name + ".obj");
  return rig_path;
}

std::vector<std::pair<int, int>> undirected_edges(const Skeleton& s) {
  std::vector<std::pair<int, int>> out;
  for (auto [a, b] : s.edges) out.emplace_back(std::min(a, b), std::max(a, b));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace volrig
