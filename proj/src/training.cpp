#include "volrig/training.hpp"

#include "volrig/checkpoint.hpp"
#include "volrig/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace volrig {

namespace {

void splat_max(Volume& vol, const Vec3& g, double sigma) {
  const auto& grid = vol.grid;
  const double radius = 4.0 * sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::ceil(g[a] - radius)));
    hi[a] = std::min(grid.resolution - 1, static_cast<int>(std::floor(g[a] + radius)));
  }
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) {
        const double d2 = (Vec3(i, j, k) - g).squaredNorm();
        if (d2 > radius * radius) continue;
        float& cell = vol[grid.index(i, j, k)];
        cell = std::max(cell, static_cast<float>(std::exp(-d2 * inv)));
      }
}

std::vector<std::pair<Vec3, Vec3>> bone_segments(const Skeleton& s) {
  std::vector<std::pair<Vec3, Vec3>> out;
  for (const auto& [p, c] : s.edges) out.emplace_back(s.joints[p].position, s.joints[c].position);
  return out;
}

double solid_angle(const Vec3& p, const Vec3& a0, const Vec3& b0, const Vec3& c0) {
  const Vec3 a = a0 - p, b = b0 - p, c = c0 - p;
  const double la = a.norm(), lb = b.norm(), lc = c.norm();
  const double num = a.dot(b.cross(c));
  const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
  return 2.0 * std::atan2(num, den);
}

template <class T>
void hash_bytes(std::uint64_t& h, const T& v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  for (unsigned char b : buf) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
}

constexpr char kCacheMagic[8] = {'V', 'R', 'F', 'E', 'A', 'T', '0', '1'};

std::optional<Features> read_feature_cache(const std::filesystem::path& path, const VoxelGrid& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  VoxelGrid g;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&g.resolution), sizeof g.resolution);
  in.read(reinterpret_cast<char*>(g.origin.data()), 3 * sizeof(double));
  in.read(reinterpret_cast<char*>(&g.cell_size), sizeof g.cell_size);
  if (!in || std::memcmp(magic, kCacheMagic, 8) != 0 || !(g == expected)) return std::nullopt;
  Features f;
  f.channels.grid = g;
  f.channels.data.resize(g.count() * ShapeChannels::kCount);
  f.mask.grid = g;
  f.mask.data.resize(g.count());
  in.read(reinterpret_cast<char*>(f.channels.data.data()),
          static_cast<std::streamsize>(f.channels.data.size() * sizeof(float)));
  in.read(reinterpret_cast<char*>(f.mask.data.data()), static_cast<std::streamsize>(f.mask.data.size()));
  if (!in) return std::nullopt;
  return f;
}

void write_feature_cache(const std::filesystem::path& path, const Features& f) {
  static_assert(std::endian::native == std::endian::little, "feature cache assumes a little-endian host");
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    const auto& g = f.channels.grid;
    out.write(kCacheMagic, 8);
    out.write(reinterpret_cast<const char*>(&g.resolution), sizeof g.resolution);
    out.write(reinterpret_cast<const char*>(g.origin.data()), 3 * sizeof(double));
    out.write(reinterpret_cast<const char*>(&g.cell_size), sizeof g.cell_size);
    out.write(reinterpret_cast<const char*>(f.channels.data.data()),
              static_cast<std::streamsize>(f.channels.data.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(f.mask.data.data()), static_cast<std::streamsize>(f.mask.data.size()));
    if (!out) throw std::runtime_error("failed writing feature cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

TargetMaps make_target_maps(const Skeleton& skeleton, const VoxelGrid& grid, double sigma, double bone_spacing) {
  if (!(sigma > 0.0) || !(bone_spacing > 0.0)) throw std::invalid_argument("heatmap sigma and bone spacing must be positive");
  TargetMaps t{Volume(grid), Volume(grid)};
  std::vector<Vec3> g(skeleton.joints.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = grid.to_grid(skeleton.joints[j].position);
    if ((g[j].array() < -0.5).any() || (g[j].array() > grid.resolution - 0.5).any())
      throw std::out_of_range("joint '" + skeleton.joints[j].name + "' lies outside the voxel grid");
    splat_max(t.joint, g[j], sigma);
  }
  for (const auto& [p, c] : skeleton.edges) {
    const Vec3 a = g[p], b = g[c];
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len / bone_spacing)));
    for (int s = 0; s <= steps; ++s) splat_max(t.bone, a + (b - a) * (static_cast<double>(s) / steps), sigma);
  }
  return t;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

GranularityParam granularity_from_diameters(const std::vector<double>& diameters) {
  if (diameters.empty()) throw std::invalid_argument("granularity label needs surface samples");
  return GranularityParam(std::clamp(percentile_nearest_rank(diameters, 5.0), 0.0, 1.0));
}

GranularityParam compute_granularity_label(const RiggedCharacter& character, std::size_t samples, std::uint64_t seed) {
  const auto pts = sample_surface(character.mesh, samples, seed);
  const MeshQuery query(character.mesh);
  const auto lsd = compute_local_shape_diameter(query, pts);
  std::vector<double> values;
  for (const auto& d : lsd)
    if (!d.missed) values.push_back(d.value);
  return granularity_from_diameters(values);
}

RiggedCharacter apply_scale(const RiggedCharacter& character, const Vec3& scale) {
  RiggedCharacter out = character;
  for (auto& v : out.mesh.vertices) v = v.cwiseProduct(scale);
  for (auto& j : out.skeleton.joints) j.position = j.position.cwiseProduct(scale);
  out.mesh.compute_vertex_normals();
  return out;
}

RiggedCharacter rotate_subtree(const RiggedCharacter& character, int joint, const Eigen::Matrix3d& rotation) {
  const Skeleton& sk = character.skeleton;
  if (joint < 0 || joint >= static_cast<int>(sk.joints.size()) || joint == sk.root)
    throw std::invalid_argument("rotate_subtree needs a non-root joint");
  const Vec3 pivot = sk.joints[joint].position;
  const auto desc = sk.descendants(joint);
  std::vector<char> moving_joint(sk.joints.size(), 0);
  moving_joint[joint] = 1;
  for (int d : desc) moving_joint[d] = 1;

  // Bones hanging below the pivot move; the rest stay.
  const auto segs = bone_segments(sk);
  std::vector<int> moving, fixed, incident_child;
  int parent_bone = -1;
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto [p, c] = sk.edges[e];
    if (moving_joint[p]) {
      moving.push_back(static_cast<int>(e));
      if (p == joint) incident_child.push_back(static_cast<int>(e));
    } else {
      fixed.push_back(static_cast<int>(e));
      if (c == joint) parent_bone = static_cast<int>(e);
    }
  }

  RiggedCharacter out = character;
  auto rotate = [&](const Vec3& v) { return Vec3(pivot + rotation * (v - pivot)); };
  for (int d : desc) out.skeleton.joints[d].position = rotate(sk.joints[d].position);
  if (moving.empty()) return out;

  auto dist = [&](const Vec3& v, int e) { return point_segment_distance(v, segs[e].first, segs[e].second); };
  const auto n = character.mesh.vertices.size();
  parallel_for(n, [&](std::size_t i) {
    const Vec3& v = character.mesh.vertices[i];
    double best = std::numeric_limits<double>::infinity();
    int nearest = -1;
    for (std::size_t e = 0; e < segs.size(); ++e) {
      const double d = dist(v, static_cast<int>(e));
      if (d < best) best = d, nearest = static_cast<int>(e);
    }
    const bool near_child = std::find(incident_child.begin(), incident_child.end(), nearest) != incident_child.end();
    double w;
    if (nearest == parent_bone || near_child) {
      double dc = std::numeric_limits<double>::infinity();
      for (int e : incident_child) dc = std::min(dc, dist(v, e));
      const double dp = dist(v, parent_bone);
      const double sum = dp * dp + dc * dc;
      w = sum > 0.0 ? dp * dp / sum : 0.5;
    } else {
      w = std::find(moving.begin(), moving.end(), nearest) != moving.end() ? 1.0 : 0.0;
    }
    if (w > 0.0) out.mesh.vertices[i] = v + w * (rotate(v) - v);
  });
  out.mesh.compute_vertex_normals();
  return out;
}

RiggedCharacter renormalize(const RiggedCharacter& character) {
  const auto n = normalize_mesh(character.mesh);
  return {n.mesh, transform_skeleton(character.skeleton, n.transform)};
}

double penetration_fraction(const RiggedCharacter& character, std::size_t samples, std::uint64_t seed) {
  const auto& mesh = character.mesh;
  const auto& sk = character.skeleton;
  const auto segs = bone_segments(sk);
  if (segs.size() < 3) return 0.0;
  std::vector<int> label(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 c = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < segs.size(); ++e) {
      const double d = point_segment_distance(c, segs[e].first, segs[e].second);
      if (d < best) best = d, label[t] = static_cast<int>(e);
    }
  }
  auto adjacent = [&](int a, int b) {
    const auto [p0, c0] = sk.edges[a];
    const auto [p1, c1] = sk.edges[b];
    return a == b || p0 == p1 || p0 == c1 || c0 == p1 || c0 == c1;
  };
  const auto pts = sample_surface(mesh, samples, seed);
  std::vector<std::uint8_t> hit(pts.size(), 0);
  parallel_for(pts.size(), [&](std::size_t s) {
    const int own = label[pts[s].triangle_id];
    std::vector<double> wind(segs.size(), 0.0);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      if (adjacent(own, label[t])) continue;
      const auto& tri = mesh.triangles[t];
      wind[label[t]] += solid_angle(pts[s].position, mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    }
    for (double w : wind)
      if (w / (4.0 * std::numbers::pi) > 0.5) hit[s] = 1;
  });
  std::size_t count = 0;
  for (auto h : hit) count += h;
  return static_cast<double>(count) / static_cast<double>(pts.size());
}

std::vector<RiggedCharacter> augment(const RiggedCharacter& character, std::uint64_t seed, int count,
                                     const AugmentOptions& opts) {
  if (count < 0 || count > 5) throw std::invalid_argument("augmentation count must be in [0, 5]");
  const auto& sk = character.skeleton;
  const auto plane = detect_bilateral_symmetry(character.mesh);
  const auto kids = sk.children();
  std::vector<int> pivots;
  for (int j = 0; j < static_cast<int>(sk.joints.size()); ++j)
    if (j != sk.root && !kids[j].empty()) pivots.push_back(j);

  auto mirror_of = [&](int j) -> int {
    if (!plane) return -1;
    const Vec3 r = plane->reflect(sk.joints[j].position);
    int best = -1;
    double best_d = 0.02 * character.mesh.longest_extent();
    for (int m = 0; m < static_cast<int>(sk.joints.size()); ++m) {
      const double d = (sk.joints[m].position - r).norm();
      if (d < best_d) best_d = d, best = m;
    }
    if (best == j || best == sk.root) return -1;
    const auto dj = sk.descendants(j), dm = sk.descendants(best);
    if (std::binary_search(dj.begin(), dj.end(), best) || std::binary_search(dm.begin(), dm.end(), j)) return -1;
    return best;
  };

  std::vector<RiggedCharacter> out;
  Rng rng(seed);
  for (int v = 0; v < count; ++v) {
    for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
      Rng r = rng.split(static_cast<std::uint64_t>(v) * 1000 + attempt);
      RiggedCharacter cand;
      if (pivots.empty() || r.uniform() < 0.5) {
        const Vec3 s(r.uniform(opts.min_scale, opts.max_scale), r.uniform(opts.min_scale, opts.max_scale),
                     r.uniform(opts.min_scale, opts.max_scale));
        cand = apply_scale(character, s);
      } else {
        const int j = pivots[r.below(pivots.size())];
        Vec3 axis(r.normal(), r.normal(), r.normal());
        axis.normalize();
        const double angle = r.uniform(opts.min_angle_deg, opts.max_angle_deg) * std::numbers::pi / 180.0;
        const Eigen::Matrix3d rot = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
        cand = rotate_subtree(character, j, rot);
        if (const int m = mirror_of(j); m >= 0) {
          const Vec3 n = plane->normal;
          const Eigen::Matrix3d refl = Eigen::Matrix3d::Identity() - 2.0 * n * n.transpose();
          cand = rotate_subtree(cand, m, refl * rot * refl);
        }
      }
      cand = renormalize(cand);
      if (penetration_fraction(cand) <= opts.max_penetration) {
        out.push_back(std::move(cand));
        break;
      }
    }
  }
  return out;
}

namespace {

std::vector<nn::Tensor> module_losses(const StackOutputs& outputs, const TargetMaps& targets, const OccupancyMask& mask) {
  if (!(targets.joint.grid == mask.grid) || !(targets.bone.grid == mask.grid))
    throw nn::ShapeError("target maps and mask use different grids");
  std::vector<nn::Tensor> out;
  for (std::size_t m = 0; m < outputs.joint.size(); ++m) {
    auto lj = nn::masked_bce(outputs.joint[m], targets.joint.values, mask.data);
    auto lb = nn::masked_bce(outputs.bone[m], targets.bone.values, mask.data);
    out.push_back(nn::add(lj, lb));
  }
  return out;
}

nn::Tensor sum_terms(const std::vector<nn::Tensor>& terms) {
  nn::Tensor total = terms.at(0);
  for (std::size_t i = 1; i < terms.size(); ++i) total = nn::add(total, terms[i]);
  return total;
}

}  // namespace

nn::Tensor masked_loss(const StackOutputs& outputs, const TargetMaps& targets, const OccupancyMask& mask) {
  if (outputs.joint.empty()) throw std::invalid_argument("masked_loss needs at least one module output");
  return sum_terms(module_losses(outputs, targets, mask));
}

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (augmentations < 0 || augmentations > 5) throw std::invalid_argument("augmentation count must be in [0, 5]");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(heatmap_sigma > 0.0)) throw std::invalid_argument("heatmap variance must be positive");
  if (!(bone_spacing > 0.0)) throw std::invalid_argument("bone sample spacing must be positive");
  if (samples == 0) throw std::invalid_argument("surface sample count must be positive");
  network().validate();
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.resolution = resolution;
  n.num_modules = num_modules;
  n.dropout = dropout;
  return n;
}

FeatureOptions TrainConfig::features() const {
  FeatureOptions f;
  f.resolution = resolution;
  f.samples = samples;
  f.seed = feature_seed;
  return f;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},     {"seed", seed},
          {"lr", lr},                     {"batch_size", batch_size},
          {"resolution", resolution},     {"num_modules", num_modules},
          {"augmentations", augmentations}, {"heatmap_sigma", heatmap_sigma},
          {"bone_spacing", bone_spacing}, {"dropout", dropout},
          {"samples", samples},           {"feature_seed", feature_seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  c.iterations = j.value("iterations", c.iterations);
  c.seed = j.value("seed", c.seed);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.resolution = j.value("resolution", c.resolution);
  c.num_modules = j.value("num_modules", c.num_modules);
  c.augmentations = j.value("augmentations", c.augmentations);
  c.heatmap_sigma = j.value("heatmap_sigma", c.heatmap_sigma);
  c.bone_spacing = j.value("bone_spacing", c.bone_spacing);
  c.dropout = j.value("dropout", c.dropout);
  c.samples = j.value("samples", c.samples);
  c.feature_seed = j.value("feature_seed", c.feature_seed);
  return c;
}

nlohmann::json checkpoint_metadata(const TrainConfig& cfg) {
  const auto f = cfg.features();
  return {{"network", cfg.network().to_json()},
          {"features", {{"resolution", f.resolution}, {"samples", f.samples}, {"seed", f.seed},
                        {"curvature_neighbors", f.curvature_neighbors},
                        {"density_bandwidth_factor", f.density_bandwidth_factor}}},
          {"train", cfg.to_json()}};
}

std::uint64_t feature_cache_key(const TriangleMesh& mesh, const FeatureOptions& opts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& v : mesh.vertices) hash_bytes(h, v);
  for (const auto& t : mesh.triangles) hash_bytes(h, t);
  hash_bytes(h, opts.resolution);
  hash_bytes(h, opts.samples);
  hash_bytes(h, opts.seed);
  hash_bytes(h, opts.curvature_neighbors);
  hash_bytes(h, opts.diameter.rays);
  hash_bytes(h, opts.diameter.cone_degrees);
  hash_bytes(h, opts.diameter.inward_offset);
  hash_bytes(h, opts.density_bandwidth_factor);
  return h;
}

TrainingExample prepare_example(const RiggedCharacter& character, const TrainConfig& cfg, const std::string& name) {
  const auto fopts = cfg.features();
  TrainingExample ex;
  ex.name = name;
  std::optional<Features> cached;
  std::filesystem::path cache_path;
  if (!cfg.cache_dir.empty()) {
    std::ostringstream hex;
    hex << std::hex << feature_cache_key(character.mesh, fopts);
    cache_path = cfg.cache_dir / (hex.str() + ".feat");
    cached = read_feature_cache(cache_path, VoxelGrid::around(character.mesh, cfg.resolution));
  }
  if (cached) {
    ex.features = std::move(*cached);
  } else {
    ex.features = featurize(character.mesh, fopts);
    if (!cache_path.empty()) write_feature_cache(cache_path, ex.features);
  }
  ex.targets = make_target_maps(character.skeleton, ex.features.channels.grid, cfg.heatmap_sigma, cfg.bone_spacing);
  ex.granularity = compute_granularity_label(character, cfg.samples, cfg.feature_seed);
  return ex;
}

TrainResult train(const std::vector<RiggedCharacter>& dataset, const TrainConfig& cfg,
                  const std::vector<std::string>& names, const TrainCallback& on_iteration) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("training dataset is empty");

  std::vector<TrainingExample> examples;
  Rng aug_rng(cfg.seed ^ 0x5eedaa11ULL);
  for (std::size_t c = 0; c < dataset.size(); ++c) {
    const std::string base = c < names.size() ? names[c] : "shape" + std::to_string(c);
    examples.push_back(prepare_example(dataset[c], cfg, base));
    const auto variants = augment(dataset[c], aug_rng.next_u64(), cfg.augmentations);
    for (std::size_t v = 0; v < variants.size(); ++v)
      examples.push_back(prepare_example(variants[v], cfg, base + "#aug" + std::to_string(v)));
  }
  std::vector<nn::Tensor> inputs;
  for (const auto& ex : examples)
    inputs.push_back(make_input_tensor(cfg.resolution, ShapeChannels::kCount, ex.features.channels.data));

  TrainResult result;
  result.network = std::make_unique<HourglassNetwork>(cfg.network(), cfg.seed);
  auto& net = *result.network;
  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  nn::Adam<float> adam(net.parameters(), acfg);

  std::ofstream log;
  if (!cfg.loss_log.empty()) {
    if (cfg.loss_log.has_parent_path()) std::filesystem::create_directories(cfg.loss_log.parent_path());
    log.open(cfg.loss_log);
    if (!log) throw std::runtime_error("cannot write loss log " + cfg.loss_log.string());
  }

  Rng order_rng(cfg.seed ^ 0x0bd3e5ULL);
  Rng dropout_rng(cfg.seed ^ 0xd50b0a7ULL);
  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();
  auto next_example = [&] {
    if (cursor == order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
      cursor = 0;
    }
    return order[cursor++];
  };

  const auto inv_batch = nn::Tensor::scalar(static_cast<float>(1.0 / cfg.batch_size));
  for (int it = 0; it < cfg.iterations; ++it) {
    adam.zero_grad();
    IterationRecord rec{it, {}, 0.0, std::vector<double>(cfg.num_modules, 0.0)};
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t e = next_example();
      const auto& ex = examples[e];
      nn::Tensor loss;
      std::vector<nn::Tensor> terms;
      try {
        auto out = net.forward(inputs[e], ex.granularity, nn::Mode::Train, dropout_rng);
        terms = module_losses(out, ex.targets, ex.features.mask);
        loss = sum_terms(terms);
        if (cfg.batch_size > 1) loss = nn::mul(loss, inv_batch);
      } catch (const std::runtime_error& err) {
        throw std::runtime_error("iteration " + std::to_string(it) + " on '" + ex.name + "': " + err.what());
      }
      if (!std::isfinite(loss.item()))
        throw std::runtime_error("non-finite loss at iteration " + std::to_string(it) + " on '" + ex.name + "'");
      for (int m = 0; m < cfg.num_modules; ++m) rec.module_losses[m] += terms[m].item() / cfg.batch_size;
      rec.loss += loss.item();
      if (!rec.example.empty()) rec.example += ",";
      rec.example += ex.name;
      nn::backward(loss);
    }
    adam.step();
    if (log) {
      nlohmann::json j{{"iteration", rec.iteration}, {"example", rec.example}, {"loss", rec.loss},
                       {"module_losses", rec.module_losses}};
      log << j.dump() << '\n';
      log.flush();
    }
    if (on_iteration) on_iteration(rec);
    result.history.push_back(std::move(rec));
  }

  if (!cfg.checkpoint.empty()) nn::save_checkpoint(cfg.checkpoint, net.state(), checkpoint_metadata(cfg));
  return result;
}

}  // namespace volrig
