#include "support.hpp"

#include "volrig/kdtree.hpp"
#include "volrig/mesh.hpp"
#include "volrig/mesh_query.hpp"
#include "volrig/synth.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace volrig;

namespace {

const char* kCube =
    "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
    "f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 4 8 7 3\nf 1 5 8 4\nf 2 3 7 6\n";

TEST(Obj, SingleTriangle) {
  const auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  EXPECT_EQ(m.vertices.size(), 3u);
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
}

TEST(Obj, QuadIsFanTriangulated) {
  const auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  ASSERT_EQ(m.triangles.size(), 2u);
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
  EXPECT_EQ(m.triangles[1], (std::array<int, 3>{0, 2, 3}));
}

TEST(Obj, CubeAreaAndSlashesAndNegativeIndices) {
  const auto cube = parse_obj(kCube);
  EXPECT_EQ(cube.triangles.size(), 12u);
  EXPECT_NEAR(cube.total_area(), 6.0, 1e-12);
  const auto m = parse_obj("v 0 0 0\nv 2 0 0\nv 0 2 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n");
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
  EXPECT_NEAR(m.total_area(), 2.0, 1e-12);
}

TEST(Obj, ErrorsCarryLineNumbers) {
  try {
    parse_obj("v 0 0 0\nv 1 0 0\nv x 1 0\nf 1 2 3\n");
    FAIL();
  } catch (const MeshError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_obj("v 0 0 0\nf 1 2 3\n"), MeshError);
  EXPECT_THROW(parse_obj("v 0 0 0\n"), MeshError);
  EXPECT_THROW(load_mesh("/nonexistent/mesh.obj"), MeshError);
}

TEST(Obj, SaveLoadIsBitExact) {
  const auto dir = test::scratch_dir("obj");
  auto m = make_uv_sphere(Vec3(0.1, 0.2, 0.3), 0.7, 7, 9);
  save_mesh(m, dir / "s.obj");
  const auto back = load_mesh(dir / "s.obj");
  ASSERT_EQ(back.vertices.size(), m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
  EXPECT_EQ(back.triangles, m.triangles);
  std::filesystem::remove_all(dir);
}

TEST(Normalize, CubeOfSideFourAtOffset) {
  auto cube = parse_obj(kCube);
  for (auto& v : cube.vertices) v = 4.0 * v + Vec3(3, -2, 7);
  const auto n = normalize_mesh(cube);
  EXPECT_NEAR(n.mesh.bbox_min().y(), 0.0, 1e-12);
  EXPECT_NEAR(n.mesh.longest_extent(), 1.0, 1e-12);
  EXPECT_NEAR(n.mesh.bbox_min().x(), -0.5, 1e-12);
  EXPECT_NEAR(n.mesh.bbox_max().z(), 0.5, 1e-12);
  for (std::size_t i = 0; i < cube.vertices.size(); ++i)
    EXPECT_LT((n.transform.apply(cube.vertices[i]) - n.mesh.vertices[i]).norm(), 1e-12);
}

TEST(Normalize, BoxAndIdempotence) {
  const auto box = make_box(Vec3(0, 0, 0), Vec3(2, 1, 1));
  const auto n = normalize_mesh(box);
  const Vec3 ext = n.mesh.bbox_max() - n.mesh.bbox_min();
  EXPECT_NEAR(ext.x(), 1.0, 1e-12);
  EXPECT_NEAR(ext.y(), 0.5, 1e-12);
  EXPECT_NEAR(ext.z(), 0.5, 1e-12);
  const auto twice = normalize_mesh(n.mesh);
  for (std::size_t i = 0; i < box.vertices.size(); ++i) EXPECT_LT((twice.mesh.vertices[i] - n.mesh.vertices[i]).norm(), 1e-9);
}

TEST(Normalize, DegenerateMeshThrows) {
  TriangleMesh m;
  m.vertices = {Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)};
  m.triangles = {{0, 1, 2}};
  EXPECT_THROW(normalize_mesh(m), MeshError);
}

TEST(Sampling, AreaProportionalAndReproducible) {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0), Vec3(10, 0, 0), Vec3(11, 0, 0), Vec3(10, 1, 0)};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};
  const auto s = sample_surface(m, 10000, 5);
  int big = 0;
  for (const auto& p : s) {
    big += p.triangle_id == 0;
    EXPECT_NEAR(p.position.z(), 0.0, 1e-12);
    EXPECT_NEAR(p.normal.norm(), 1.0, 1e-12);
  }
  EXPECT_NEAR(big / 10000.0, 0.9, 0.9 * 0.05);
  const auto again = sample_surface(m, 10000, 5);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i].position, again[i].position);
}

TEST(Sampling, SphereCentroid) {
  const auto sphere = make_uv_sphere(Vec3::Zero(), 1.0, 24, 48);
  Vec3 c = Vec3::Zero();
  for (const auto& p : sample_surface(sphere, 5000, 3)) c += p.position;
  EXPECT_LT((c / 5000.0).norm(), 0.05);
}

TEST(EdgeLength, Examples) {
  TriangleMesh eq;
  eq.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, std::sqrt(3.0) / 2, 0)};
  eq.triangles = {{0, 1, 2}};
  EXPECT_NEAR(average_edge_length(eq), 1.0, 1e-12);
  eq.triangles.push_back({0, 1, 2});
  EXPECT_NEAR(average_edge_length(eq), 1.0, 1e-12);
  TriangleMesh right;
  right.vertices = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 4, 0)};
  right.triangles = {{0, 1, 2}};
  EXPECT_NEAR(average_edge_length(right), 4.0, 1e-12);
}

TEST(Rays, SphereHitMissAndSharedEdge) {
  const auto sphere = make_uv_sphere(Vec3::Zero(), 1.0, 32, 64);
  const auto hit = ray_mesh_intersect(sphere, Vec3::Zero(), Vec3::UnitX());
  ASSERT_TRUE(hit);
  EXPECT_NEAR(*hit, 1.0, 2e-3);
  EXPECT_FALSE(ray_mesh_intersect(sphere, Vec3(0, 5, 0), Vec3::UnitX()));

  // Two triangles sharing the edge x = y; the ray crosses exactly on it.
  TriangleMesh quad;
  quad.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  quad.triangles = {{0, 2, 3}, {0, 1, 2}};
  const MeshQuery q(quad);
  const auto h = q.raycast(Vec3(0.5, 0.5, 1), Vec3(0, 0, -1));
  ASSERT_TRUE(h);
  EXPECT_NEAR(h->distance, 1.0, 1e-12);
  EXPECT_EQ(h->triangle, 0u);
}

TEST(Rays, BvhMatchesBruteForceAndIgnoresTriangleOrder) {
  auto m = make_synthetic_character(SynthKind::Star, 2, 0.04).mesh;
  const MeshQuery q(m);
  auto shuffled = m;
  std::reverse(shuffled.triangles.begin(), shuffled.triangles.end());
  const MeshQuery qs(shuffled);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 o(rng.uniform(-1, 1), rng.uniform(0, 1.2), rng.uniform(-1, 1));
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    d.normalize();
    std::optional<double> brute;
    for (const auto& t : m.triangles) {
      const auto hit = intersect_triangle(o, d, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
      if (hit && *hit > 1e-6 * m.longest_extent() && (!brute || *hit < *brute)) brute = hit;
    }
    const auto a = q.raycast(o, d), b = qs.raycast(o, d);
    ASSERT_EQ(a.has_value(), brute.has_value());
    ASSERT_EQ(b.has_value(), brute.has_value());
    if (brute) {
      EXPECT_EQ(a->distance, *brute);
      EXPECT_EQ(b->distance, *brute);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : m.triangles)
      best = std::min(best, (closest_point_on_triangle(o, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]) - o).norm());
    EXPECT_NEAR(q.closest_point(o).distance, best, 1e-12);
  }
}

TEST(Winding, InsideOutside) {
  const auto sphere = make_uv_sphere(Vec3(0, 0, 0), 1.0, 16, 32);
  const MeshQuery q(sphere);
  EXPECT_NEAR(q.winding_number(Vec3(0.1, 0.2, -0.1)), 1.0, 1e-9);
  EXPECT_NEAR(q.winding_number(Vec3(3, 0, 0)), 0.0, 1e-9);
  EXPECT_TRUE(q.inside(Vec3(0.5, 0, 0)));
  EXPECT_FALSE(q.inside(Vec3(1.5, 0, 0)));
}

TEST(Symmetry, MirroredTranslatedAndLShaped) {
  const auto biped = normalize_mesh(make_synthetic_character(SynthKind::Biped, 3).mesh).mesh;
  const auto plane = detect_bilateral_symmetry(biped);
  ASSERT_TRUE(plane);
  EXPECT_EQ(plane->normal, Vec3::UnitX());
  EXPECT_EQ(plane->offset, 0.0);
  auto shifted = biped;
  for (auto& v : shifted.vertices) v.x() += 0.3;
  EXPECT_FALSE(detect_bilateral_symmetry(shifted));
  const auto l = normalize_mesh(merge(make_box(Vec3(0, 0, 0), Vec3(1, 0.2, 0.2)), make_box(Vec3(0, 0, 0), Vec3(0.2, 1, 0.2))));
  EXPECT_FALSE(detect_bilateral_symmetry(l.mesh));
  auto half = make_box(Vec3(0.1, 0, 0), Vec3(0.6, 0.3, 0.2));
  auto mirrored = half;
  for (auto& v : mirrored.vertices) v.x() = -v.x();
  for (auto& t : mirrored.triangles) std::swap(t[1], t[2]);
  EXPECT_TRUE(detect_bilateral_symmetry(normalize_mesh(merge(half, mirrored)).mesh));
}

TEST(KdTree, KnnMatchesBruteForce) {
  Rng rng(4);
  std::vector<Vec3> pts(500);
  for (auto& p : pts) p = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
  const KdTree tree(pts);
  for (int i = 0; i < 50; ++i) {
    const Vec3 q(rng.uniform(), rng.uniform(), rng.uniform());
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < pts.size(); ++j) all.emplace_back((pts[j] - q).norm(), j);
    std::sort(all.begin(), all.end());
    const auto knn = tree.knn(q, 7);
    ASSERT_EQ(knn.size(), 7u);
    for (int k = 0; k < 7; ++k) EXPECT_EQ(knn[k], all[k].second);
  }
}

}  // namespace
