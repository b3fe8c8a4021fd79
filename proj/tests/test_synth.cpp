#include "support.hpp"

#include "volrig/mesh_query.hpp"
#include "volrig/synth.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numbers>

using namespace volrig;

namespace {

double signed_volume(const TriangleMesh& m) {
  double v = 0.0;
  for (const auto& t : m.triangles) v += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]])) / 6.0;
  return v;
}

// Every directed edge appears once and its reverse once.
bool closed_and_consistent(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) ++count[{static_cast<int>(t[e]), static_cast<int>(t[(e + 1) % 3])}];
  for (const auto& [edge, n] : count) {
    if (n != 1) return false;
    const auto rev = count.find({edge.second, edge.first});
    if (rev == count.end() || rev->second != 1) return false;
  }
  return true;
}

class SynthKinds : public ::testing::TestWithParam<SynthKind> {};

TEST_P(SynthKinds, ClosedSymmetricAndRigged) {
  const auto ch = make_synthetic_character(GetParam(), 1, 0.03);
  EXPECT_TRUE(closed_and_consistent(ch.mesh));
  EXPECT_GT(signed_volume(ch.mesh), 0.0);
  EXPECT_EQ(ch.skeleton.joints.size(), 11u);
  EXPECT_NO_THROW(ch.skeleton.validate());

  // Mirror every vertex and find an exact partner.
  std::map<std::tuple<double, double, double>, int> index;
  for (std::size_t i = 0; i < ch.mesh.vertices.size(); ++i) {
    const auto& v = ch.mesh.vertices[i];
    index[{v.x(), v.y(), v.z()}] = static_cast<int>(i);
  }
  for (const auto& v : ch.mesh.vertices) EXPECT_TRUE(index.count({-v.x(), v.y(), v.z()}));
  for (const auto& j : ch.skeleton.joints) {
    bool mirrored = false;
    for (const auto& k : ch.skeleton.joints) mirrored |= k.position == Vec3(-j.position.x(), j.position.y(), j.position.z());
    EXPECT_TRUE(mirrored) << j.name;
  }

  const MeshQuery q(ch.mesh);
  for (const auto& j : ch.skeleton.joints) EXPECT_TRUE(q.inside(j.position)) << j.name;
  EXPECT_TRUE(detect_bilateral_symmetry(normalize_mesh(ch.mesh).mesh).has_value());
}

INSTANTIATE_TEST_SUITE_P(All, SynthKinds, ::testing::Values(SynthKind::Biped, SynthKind::Quadruped, SynthKind::Star),
                         [](const auto& info) { return to_string(info.param); });

TEST(Synth, SeedVariesProportions) {
  const auto a = make_synthetic_character(SynthKind::Biped, 1, 0.04);
  const auto b = make_synthetic_character(SynthKind::Biped, 1, 0.04);
  const auto c = make_synthetic_character(SynthKind::Biped, 2, 0.04);
  EXPECT_EQ(a.mesh.vertices, b.mesh.vertices);
  EXPECT_NE(a.skeleton.joints[1].position, c.skeleton.joints[1].position);
  EXPECT_EQ(parse_synth_kind("star"), SynthKind::Star);
  EXPECT_THROW(parse_synth_kind("octopus"), std::invalid_argument);
}

TEST(Synth, LevelSetSphereVolume) {
  const auto m = mesh_level_set([](const Vec3& p) { return p.norm() - 0.5; }, Vec3::Constant(-0.6), Vec3::Constant(0.6), 0.02);
  EXPECT_TRUE(closed_and_consistent(m));
  EXPECT_NEAR(signed_volume(m), 4.0 / 3.0 * std::numbers::pi * 0.125, 0.01);
}

TEST(Synth, Primitives) {
  const auto box = make_box(Vec3::Zero(), Vec3(1, 2, 3));
  EXPECT_TRUE(closed_and_consistent(box));
  EXPECT_NEAR(signed_volume(box), 6.0, 1e-12);
  const auto cyl = make_cylinder(Vec3::Zero(), Vec3(0, 0, 2), 0.5, 128, 4);
  EXPECT_TRUE(closed_and_consistent(cyl));
  EXPECT_NEAR(signed_volume(cyl), std::numbers::pi * 0.25 * 2, 0.01);
  const auto sph = make_uv_sphere(Vec3(1, 1, 1), 0.5, 32, 64);
  EXPECT_NEAR(signed_volume(sph), 4.0 / 3.0 * std::numbers::pi * 0.125, 0.01);
}

}  // namespace
