#include "volrig/synth.hpp"

#include "volrig/mesh_query.hpp"
#include "volrig/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace volrig {

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "biped") return SynthKind::Biped;
  if (s == "quadruped") return SynthKind::Quadruped;
  if (s == "star") return SynthKind::Star;
  throw std::invalid_argument("unknown synthetic kind '" + s + "' (expected biped, quadruped or star)");
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::Biped: return "biped";
    case SynthKind::Quadruped: return "quadruped";
    case SynthKind::Star: return "star";
  }
  return "unknown";
}

TriangleMesh mesh_level_set(const std::function<double(const Vec3&)>& f, const Vec3& lo, const Vec3& hi, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("lattice step must be positive");
  int n[3];
  for (int a = 0; a < 3; ++a) n[a] = std::max(1, static_cast<int>(std::ceil((hi[a] - lo[a]) / step)));
  // A box symmetric about x = 0 gets an exactly antisymmetric x lattice.
  const bool symmetric_x = lo.x() == -hi.x();
  if (symmetric_x) n[0] = 2 * std::max(1, static_cast<int>(std::ceil(hi.x() / step)));
  const long sx = n[0] + 1, sy = n[1] + 1;
  auto lattice_index = [&](long i, long j, long k) { return (k * sy + j) * sx + i; };
  auto position = [&](long idx) {
    const long i = idx % sx, j = (idx / sx) % sy, k = idx / (sx * sy);
    const double x = symmetric_x ? static_cast<double>(i - n[0] / 2) * step : lo.x() + i * step;
    return Vec3(x, lo.y() + j * step, lo.z() + k * step);
  };
  std::vector<double> value(static_cast<std::size_t>(sx * sy * (n[2] + 1)));
  for (std::size_t idx = 0; idx < value.size(); ++idx) {
    double v = f(position(static_cast<long>(idx)));
    if (v == 0.0) v = 1e-12;
    value[idx] = v;
  }

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto crossing = [&](long a, long b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(value.size()) + b;
    auto [it, fresh] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
    if (fresh) {
      // Interpolate from the inside endpoint so mirrored edges give mirrored points exactly.
      const long in = value[a] < 0.0 ? a : b, out = in == a ? b : a;
      const double t = value[in] / (value[in] - value[out]);
      mesh.vertices.push_back(position(in) + t * (position(out) - position(in)));
    }
    return it->second;
  };
  auto emit = [&](int p, int q, int r, const Vec3& outward) {
    const Vec3& a = mesh.vertices[p];
    const Vec3 nrm = (mesh.vertices[q] - a).cross(mesh.vertices[r] - a);
    if (nrm.squaredNorm() == 0.0) return;
    if (nrm.dot(outward) >= 0.0)
      mesh.triangles.push_back({p, q, r});
    else
      mesh.triangles.push_back({p, r, q});
  };

  static constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7}, {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};
  for (long k = 0; k < n[2]; ++k)
    for (long j = 0; j < n[1]; ++j)
      for (long i = 0; i < n[0]; ++i) {
        long corner[8];
        for (int c = 0; c < 8; ++c) corner[c] = lattice_index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
        // Cubes on the +x half use the mirror image of the split, so the mesh of an
        // x-symmetric function is itself symmetric. Shared faces still agree.
        const int flip = i >= n[0] / 2 ? 1 : 0;
        for (const auto& tet : kTets) {
          std::vector<long> in, out;
          for (int c : tet) (value[corner[c ^ flip]] < 0.0 ? in : out).push_back(corner[c ^ flip]);
          if (in.empty() || out.empty()) continue;
          Vec3 cin = Vec3::Zero(), cout = Vec3::Zero();
          for (long v : in) cin += position(v);
          for (long v : out) cout += position(v);
          const Vec3 outward = cout / static_cast<double>(out.size()) - cin / static_cast<double>(in.size());
          if (in.size() == 1 || out.size() == 1) {
            const auto& lone = in.size() == 1 ? in : out;
            const auto& rest = in.size() == 1 ? out : in;
            emit(crossing(lone[0], rest[0]), crossing(lone[0], rest[1]), crossing(lone[0], rest[2]), outward);
          } else {
            const int p0 = crossing(in[0], out[0]), p1 = crossing(in[0], out[1]);
            const int p2 = crossing(in[1], out[1]), p3 = crossing(in[1], out[0]);
            emit(p0, p1, p2, outward);
            emit(p0, p2, p3, outward);
          }
        }
      }
  mesh.compute_vertex_normals();
  return mesh;
}

TriangleMesh capsule_union_mesh(const std::vector<Capsule>& capsules, double step) {
  if (capsules.empty()) throw std::invalid_argument("capsule union needs at least one capsule");
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& c : capsules) {
    lo = lo.cwiseMin(c.a.cwiseMin(c.b) - Vec3::Constant(c.radius));
    hi = hi.cwiseMax(c.a.cwiseMax(c.b) + Vec3::Constant(c.radius));
  }
  // Lattice symmetric about x = 0 when the capsules are.
  const double pad = 2.0 * step;
  const double half_x = std::ceil((std::max(std::abs(lo.x()), std::abs(hi.x())) + pad) / step) * step;
  lo = Vec3(-half_x, lo.y() - pad, lo.z() - pad);
  hi = Vec3(half_x, hi.y() + pad, hi.z() + pad);
  auto f = [&](const Vec3& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : capsules) d = std::min(d, point_segment_distance(p, c.a, c.b) - c.radius);
    return d;
  };
  return mesh_level_set(f, lo, hi, step);
}

namespace {

struct Builder {
  Skeleton skeleton;
  std::vector<Capsule> capsules;

  int joint(const std::string& name, const Vec3& p) {
    skeleton.joints.push_back({name, p});
    return static_cast<int>(skeleton.joints.size()) - 1;
  }
  void bone(int p, int c, double radius) {
    skeleton.edges.emplace_back(p, c);
    capsules.push_back({skeleton.joints[p].position, skeleton.joints[c].position, radius});
  }
};

Vec3 mirror(const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); }

Builder biped(Rng& rng) {
  const double arm = rng.uniform(0.9, 1.1), leg = rng.uniform(0.9, 1.1), thick = rng.uniform(0.9, 1.1);
  Builder b;
  const int pelvis = b.joint("pelvis", Vec3(0, 0.5 * leg, 0));
  const int chest = b.joint("chest", Vec3(0, 0.5 * leg + 0.32, 0));
  const int head = b.joint("head", Vec3(0, 0.5 * leg + 0.56, 0));
  b.bone(pelvis, chest, 0.1 * thick);
  b.bone(chest, head, 0.08 * thick);
  for (int side : {1, -1}) {
    const std::string s = side > 0 ? "l_" : "r_";
    auto place = [&](const Vec3& p) { return side > 0 ? p : mirror(p); };
    const int elbow = b.joint(s + "elbow", place(Vec3(0.3 * arm, 0.5 * leg + 0.3, 0)));
    const int hand = b.joint(s + "hand", place(Vec3(0.55 * arm, 0.5 * leg + 0.28, 0)));
    b.bone(chest, elbow, 0.065 * thick);
    b.bone(elbow, hand, 0.06 * thick);
    const int knee = b.joint(s + "knee", place(Vec3(0.13, 0.26 * leg, 0.02)));
    const int foot = b.joint(s + "foot", place(Vec3(0.13, 0.07, 0)));
    b.bone(pelvis, knee, 0.075 * thick);
    b.bone(knee, foot, 0.07 * thick);
  }
  b.skeleton.root = pelvis;
  return b;
}

Builder quadruped(Rng& rng) {
  const double body = rng.uniform(0.9, 1.1), leg = rng.uniform(0.9, 1.1), thick = rng.uniform(0.9, 1.1);
  Builder b;
  const double y = 0.5 * leg;
  const int hips = b.joint("hips", Vec3(0, y, -0.32 * body));
  const int chest = b.joint("chest", Vec3(0, y, 0.32 * body));
  const int head = b.joint("head", Vec3(0, y + 0.22, 0.55 * body));
  b.bone(hips, chest, 0.11 * thick);
  b.bone(chest, head, 0.08 * thick);
  for (int side : {1, -1}) {
    auto place = [&](const Vec3& p) { return side > 0 ? p : mirror(p); };
    const std::string s = side > 0 ? "l" : "r";
    for (int front : {1, 0}) {
      const int top = front ? chest : hips;
      const double z = front ? 0.32 * body : -0.32 * body;
      const std::string n = s + (front ? "f_" : "h_");
      const int knee = b.joint(n + "knee", place(Vec3(0.16, 0.27 * leg, z)));
      const int foot = b.joint(n + "foot", place(Vec3(0.16, 0.07, z)));
      b.bone(top, knee, 0.07 * thick);
      b.bone(knee, foot, 0.065 * thick);
    }
  }
  b.skeleton.root = hips;
  return b;
}

Builder star(Rng& rng) {
  const double len = rng.uniform(0.9, 1.1), thick = rng.uniform(0.9, 1.1);
  Builder b;
  const Vec3 c(0, 0.6, 0);
  const int center = b.joint("center", c);
  // Five arms in the xy-plane, one pointing up, the rest in mirrored pairs.
  const double up = 18.0 * std::numbers::pi / 180.0, down = -54.0 * std::numbers::pi / 180.0;
  const Vec3 dirs[5] = {Vec3(0, 1, 0), Vec3(std::cos(up), std::sin(up), 0), Vec3(-std::cos(up), std::sin(up), 0),
                        Vec3(std::cos(down), std::sin(down), 0), Vec3(-std::cos(down), std::sin(down), 0)};
  const char* names[5] = {"top", "l_upper", "r_upper", "l_lower", "r_lower"};
  for (int a = 0; a < 5; ++a) {
    const Vec3& dir = dirs[a];
    const int mid = b.joint(std::string(names[a]) + "_mid", c + 0.27 * len * dir);
    const int tip = b.joint(std::string(names[a]) + "_tip", c + 0.52 * len * dir);
    b.bone(center, mid, 0.075 * thick);
    b.bone(mid, tip, 0.065 * thick);
  }
  b.capsules.push_back({c, c, 0.13 * thick});
  b.skeleton.root = center;
  return b;
}

void orient_convex(TriangleMesh& mesh, const Vec3& center) {
  for (auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3 n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
    const Vec3 c = (a + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    if (n.dot(c - center) < 0.0) std::swap(t[1], t[2]);
  }
  mesh.compute_vertex_normals();
}

}  // namespace

RiggedCharacter make_synthetic_character(SynthKind kind, std::uint64_t seed, double step) {
  Rng rng(seed);
  Builder b = kind == SynthKind::Biped ? biped(rng) : kind == SynthKind::Quadruped ? quadruped(rng) : star(rng);
  b.skeleton.validate();
  return {capsule_union_mesh(b.capsules, step), b.skeleton};
}

TriangleMesh make_uv_sphere(const Vec3& center, double radius, int stacks, int slices) {
  if (stacks < 2 || slices < 3) throw std::invalid_argument("sphere needs >= 2 stacks and >= 3 slices");
  TriangleMesh m;
  m.vertices.push_back(center + Vec3(0, radius, 0));
  for (int i = 1; i < stacks; ++i) {
    const double phi = std::numbers::pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double th = 2.0 * std::numbers::pi * j / slices;
      m.vertices.push_back(center + radius * Vec3(std::sin(phi) * std::cos(th), std::cos(phi), std::sin(phi) * std::sin(th)));
    }
  }
  m.vertices.push_back(center - Vec3(0, radius, 0));
  const int bottom = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) {
    m.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
    m.triangles.push_back({bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
    for (int i = 1; i + 1 < stacks; ++i) {
      m.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  orient_convex(m, center);
  return m;
}

TriangleMesh make_cylinder(const Vec3& a, const Vec3& b, double radius, int segments, int rings) {
  if (segments < 3 || rings < 1) throw std::invalid_argument("cylinder needs >= 3 segments and >= 1 ring");
  const Vec3 u = (b - a).normalized();
  const Vec3 e1 = u.unitOrthogonal(), e2 = u.cross(e1);
  TriangleMesh m;
  for (int r = 0; r <= rings; ++r)
    for (int s = 0; s < segments; ++s) {
      const double th = 2.0 * std::numbers::pi * s / segments;
      m.vertices.push_back(a + (b - a) * (static_cast<double>(r) / rings) + radius * (std::cos(th) * e1 + std::sin(th) * e2));
    }
  const int ca = static_cast<int>(m.vertices.size());
  m.vertices.push_back(a);
  m.vertices.push_back(b);
  auto at = [&](int r, int s) { return r * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) {
    for (int r = 0; r < rings; ++r) {
      m.triangles.push_back({at(r, s), at(r, s + 1), at(r + 1, s + 1)});
      m.triangles.push_back({at(r, s), at(r + 1, s + 1), at(r + 1, s)});
    }
    m.triangles.push_back({ca, at(0, s + 1), at(0, s)});
    m.triangles.push_back({ca + 1, at(rings, s), at(rings, s + 1)});
  }
  orient_convex(m, (a + b) / 2.0);
  return m;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int c = 0; c < 8; ++c)
    m.vertices.emplace_back(c & 1 ? hi.x() : lo.x(), c & 2 ? hi.y() : lo.y(), c & 4 ? hi.z() : lo.z());
  const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : faces) {
    m.triangles.push_back({f[0], f[1], f[2]});
    m.triangles.push_back({f[0], f[2], f[3]});
  }
  orient_convex(m, (lo + hi) / 2.0);
  return m;
}

}  // namespace volrig
