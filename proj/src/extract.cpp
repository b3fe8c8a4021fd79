#include "volrig/extract.hpp"

#include "volrig/checkpoint.hpp"
#include "volrig/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace volrig {

void NMSConfig::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("soft-NMS sigma must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("soft-NMS threshold must be in (0, 1)");
}

Volume symmetrize_map(const Volume& map, const SymmetryPlane& plane) {
  Volume out(map.grid);
  parallel_for(map.values.size(), [&](std::size_t i) {
    const Vec3 r = plane.reflect(map.grid.center(i));
    out.values[i] = static_cast<float>(0.5 * (static_cast<double>(map.values[i]) + map.sample(r)));
  });
  return out;
}

NMSDecay parse_nms_decay(const std::string& s) {
  if (s == "multiplicative") return NMSDecay::Multiplicative;
  if (s == "subtractive") return NMSDecay::Subtractive;
  throw std::invalid_argument("unknown soft-NMS decay '" + s + "' (expected multiplicative or subtractive)");
}

std::string to_string(NMSDecay d) { return d == NMSDecay::Multiplicative ? "multiplicative" : "subtractive"; }

void center_on_plane(std::vector<JointCandidate>& joints, const SymmetryPlane& plane, double cell_size) {
  for (auto& j : joints) {
    const double d = plane.normal.dot(j.position) - plane.offset;
    if (std::abs(d) <= 0.5 * cell_size * (1.0 + 1e-9)) j.position -= d * plane.normal;
  }
}

std::vector<JointCandidate> soft_nms(const Volume& joint_map, const OccupancyMask& mask, const NMSConfig& cfg) {
  cfg.validate();
  const auto& grid = joint_map.grid;
  if (!(mask.grid == grid)) throw std::invalid_argument("soft_nms: map and mask grids differ");
  std::vector<double> cur(joint_map.values.begin(), joint_map.values.end());
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (mask[i]) cells.push_back(i);
  auto lex = [&](std::size_t idx) {
    const Index3 c = grid.coords(idx);
    return std::make_tuple(c.x(), c.y(), c.z());
  };

  const double radius = 3.0 * cfg.sigma;
  const int reach = static_cast<int>(std::floor(radius));
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  std::vector<JointCandidate> out;
  while (!cells.empty()) {
    std::size_t best = cells.front();
    for (std::size_t idx : cells)
      if (cur[idx] > cur[best] || (cur[idx] == cur[best] && lex(idx) < lex(best))) best = idx;
    if (cur[best] < cfg.threshold) break;
    const Index3 c = grid.coords(best);
    out.push_back({c, grid.center(c), cur[best]});
    for (int dz = -reach; dz <= reach; ++dz)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const Index3 n = c + Index3(dx, dy, dz);
          const double d2 = dx * dx + dy * dy + dz * dz;
          if (!grid.contains(n) || d2 > radius * radius) continue;
          double& v = cur[grid.index(n)];
          const double g = std::exp(-d2 * inv);
          v = cfg.decay == NMSDecay::Multiplicative ? v * (1.0 - g) : std::max(0.0, v - g);
        }
  }
  return out;
}

std::vector<Index3> traverse_voxels(const Index3& a, const Index3& b) {
  // Centers sit at integers and faces at half-integers, so the parameter of the s-th
  // crossing along axis q is (2s + 1) / (2 |d_q|); comparisons stay in integers.
  const Index3 d = b - a;
  std::array<long, 3> len{}, taken{};
  std::array<int, 3> step{};
  for (int q = 0; q < 3; ++q) {
    len[q] = std::abs(d[q]);
    step[q] = d[q] > 0 ? 1 : -1;
  }
  std::vector<Index3> out{a};
  Index3 cur = a;
  while (taken[0] < len[0] || taken[1] < len[1] || taken[2] < len[2]) {
    int first = -1;
    for (int q = 0; q < 3; ++q) {
      if (taken[q] >= len[q]) continue;
      // (2 t_q + 1) / len_q < (2 t_f + 1) / len_f
      if (first < 0 || (2 * taken[q] + 1) * len[first] < (2 * taken[first] + 1) * len[q]) first = q;
    }
    const long num = 2 * taken[first] + 1, den = len[first];
    for (int q = 0; q < 3; ++q) {
      if (taken[q] >= len[q]) continue;
      if ((2 * taken[q] + 1) * den == num * len[q]) {
        cur[q] += step[q];
        ++taken[q];
      }
    }
    out.push_back(cur);
  }
  return out;
}

double edge_cost(const Volume& bone_map, const OccupancyMask& mask, const JointCandidate& a, const JointCandidate& b) {
  auto key = [](const Index3& v) { return std::make_tuple(v.x(), v.y(), v.z()); };
  const bool swap = key(b.voxel) < key(a.voxel);
  const Index3& from = swap ? b.voxel : a.voxel;
  const Index3& to = swap ? a.voxel : b.voxel;
  double w = 0.0;
  for (const Index3& v : traverse_voxels(from, to)) {
    if (!bone_map.grid.contains(v)) {
      w += kExteriorCost;
      continue;
    }
    const std::size_t i = bone_map.grid.index(v);
    if (!mask[i])
      w += kExteriorCost;
    else
      w -= std::log(std::clamp(static_cast<double>(bone_map.values[i]), 1e-7, 1.0));
  }
  return w;
}

std::vector<std::pair<int, int>> prim_mst(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  std::vector<std::pair<int, int>> edges;
  if (n <= 1) return edges;
  std::vector<char> in(n, 0);
  in[0] = 1;
  for (int added = 1; added < n; ++added) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> pick{-1, -1};
    for (int u = 0; u < n; ++u) {
      if (!in[u]) continue;
      for (int v = 0; v < n; ++v) {
        if (in[v]) continue;
        const std::pair<int, int> e{std::min(u, v), std::max(u, v)};
        if (cost[u][v] < best || (cost[u][v] == best && e < pick)) best = cost[u][v], pick = e;
      }
    }
    in[pick.first] = in[pick.second] = 1;
    edges.push_back(pick);
  }
  return edges;
}

double tree_cost(const std::vector<std::vector<double>>& cost, const std::vector<std::pair<int, int>>& edges) {
  // Ascending weights: every minimum tree has the same weight multiset, hence the same sum.
  std::vector<double> w;
  for (const auto& [a, b] : edges) w.push_back(cost[a][b]);
  std::sort(w.begin(), w.end());
  double total = 0.0;
  for (double x : w) total += x;
  return total;
}

Skeleton build_skeleton(const std::vector<JointCandidate>& joints, const Volume& bone_map, const OccupancyMask& mask) {
  const int n = static_cast<int>(joints.size());
  if (n == 0) throw EmptySkeletonError("no joints to connect");
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [a, b] = pairs[p];
    cost[a][b] = cost[b][a] = edge_cost(bone_map, mask, joints[a], joints[b]);
  });
  const auto tree = prim_mst(cost);

  Vec3 centroid = Vec3::Zero();
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask[i]) centroid += mask.grid.center(i), ++count;
  if (count) centroid /= static_cast<double>(count);

  Skeleton s;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    s.joints.push_back({"joint_" + std::to_string(j), joints[j].position});
    const double d = (joints[j].position - centroid).squaredNorm();
    if (d < best) best = d, s.root = j;
  }
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : tree) adj[a].push_back(b), adj[b].push_back(a);
  for (auto& l : adj) std::sort(l.begin(), l.end());
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(s.root);
  seen[s.root] = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) seen[v] = 1, s.edges.emplace_back(u, v), q.push(v);
  }
  s.validate();
  return s;
}

Predictor::Predictor(const std::filesystem::path& checkpoint, int resolution) {
  const auto manifest = nn::read_checkpoint_metadata(checkpoint);
  const auto& meta = manifest.at("metadata");
  const auto cfg = NetworkConfig::from_json(meta.at("network"));
  if (resolution > 0 && resolution != cfg.resolution)
    throw std::invalid_argument("checkpoint was trained at resolution " + std::to_string(cfg.resolution) +
                                " but resolution " + std::to_string(resolution) + " was requested");
  const auto& f = meta.at("features");
  features_.resolution = cfg.resolution;
  features_.samples = f.value("samples", features_.samples);
  features_.seed = f.value("seed", features_.seed);
  features_.curvature_neighbors = f.value("curvature_neighbors", features_.curvature_neighbors);
  features_.density_bandwidth_factor = f.value("density_bandwidth_factor", features_.density_bandwidth_factor);
  owned_ = std::make_shared<HourglassNetwork>(cfg, 0);
  auto state = owned_->state();
  nn::load_checkpoint(checkpoint, state);
  network_ = owned_.get();
}

Predictor::Predictor(HourglassNetwork& network, const FeatureOptions& features)
    : network_(&network), features_(features) {
  if (features_.resolution != network.config().resolution)
    throw std::invalid_argument("feature resolution does not match the network");
}

Prediction Predictor::predict(const TriangleMesh& mesh, const PredictOptions& opts) const {
  opts.nms.validate();
  Prediction p;
  const auto normalized = normalize_mesh(mesh);
  p.transform = normalized.transform;
  p.features = featurize(normalized.mesh, features_);
  StackOutputs out;
  {
    nn::NoGradGuard guard;
    Rng unused(0);
    const auto input = make_input_tensor(features_.resolution, ShapeChannels::kCount, p.features.channels.data);
    out = network_->forward(input, opts.granularity, nn::Mode::Eval, unused);
  }
  const auto& grid = p.features.channels.grid;
  p.joint_map = Volume(grid);
  p.bone_map = Volume(grid);
  const auto j = out.joint.back().values(), b = out.bone.back().values();
  std::copy(j.begin(), j.end(), p.joint_map.values.begin());
  std::copy(b.begin(), b.end(), p.bone_map.values.begin());
  if (opts.symmetrize) p.symmetry = detect_bilateral_symmetry(normalized.mesh);
  if (p.symmetry) {
    p.joint_map = symmetrize_map(p.joint_map, *p.symmetry);
    p.bone_map = symmetrize_map(p.bone_map, *p.symmetry);
  }
  p.candidates = soft_nms(p.joint_map, p.features.mask, opts.nms);
  if (p.symmetry) center_on_plane(p.candidates, *p.symmetry, grid.cell_size);
  if (p.candidates.empty())
    throw EmptySkeletonError("no voxel reached the joint threshold " + std::to_string(opts.nms.threshold));
  p.normalized_skeleton = build_skeleton(p.candidates, p.bone_map, p.features.mask);
  p.skeleton = p.normalized_skeleton;
  for (auto& jt : p.skeleton.joints) jt.position = p.transform.inverse(jt.position);
  return p;
}

}  // namespace volrig
