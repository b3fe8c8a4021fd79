#include "support.hpp"

#include "volrig/evaluation.hpp"
#include "volrig/synth.hpp"

#include <gtest/gtest.h>

using namespace volrig;

namespace {

Skeleton chain(const std::vector<Vec3>& pts) {
  Skeleton s;
  for (std::size_t i = 0; i < pts.size(); ++i) s.joints.push_back({"j" + std::to_string(i), pts[i]});
  for (std::size_t i = 1; i < pts.size(); ++i) s.edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(i));
  s.root = 0;
  return s;
}

Skeleton random_tree(Rng& rng, int n) {
  Skeleton s;
  for (int i = 0; i < n; ++i)
    s.joints.push_back({"j" + std::to_string(i), Vec3(rng.uniform(), rng.uniform(), rng.uniform())});
  for (int i = 1; i < n; ++i) s.edges.emplace_back(static_cast<int>(rng.below(i)), i);
  s.root = 0;
  return s;
}

std::vector<Vec3> positions(const Skeleton& s) {
  std::vector<Vec3> p;
  for (const auto& j : s.joints) p.push_back(j.position);
  return p;
}

std::vector<std::pair<Vec3, Vec3>> segments(const Skeleton& s) {
  std::vector<std::pair<Vec3, Vec3>> b;
  for (const auto& [p, c] : s.edges) b.emplace_back(s.joints[p].position, s.joints[c].position);
  return b;
}

TEST(ChamferJoint, IdentityOffsetAndBruteForce) {
  const auto a = chain({Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 2, 0)});
  EXPECT_EQ(cd_joint(a, a, 2.0), 0.0);
  auto b = a;
  for (auto& j : b.joints) j.position.x() += 0.1;
  EXPECT_NEAR(cd_joint(a, b, 2.0), 0.05, 1e-15);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_tree(rng, 5), r = random_tree(rng, 7);
    EXPECT_NEAR(cd_joint(p, r, 1.3), test::brute_cd_joint(positions(p), positions(r), 1.3), 1e-12);
    EXPECT_EQ(cd_joint(p, r, 1.3), cd_joint(r, p, 1.3));
  }
  EXPECT_THROW(cd_joint(Skeleton{}, a, 1.0), std::invalid_argument);
}

TEST(ChamferBone, ExamplesAndBruteForce) {
  const auto ref = chain({Vec3(0, 0, 0), Vec3(0, 10, 0)});
  EXPECT_EQ(cd_joint2bone(ref, ref, 10.0), 0.0);
  // Predicted joints on the reference bone contribute 0 one way; the reverse is measured to predicted bones.
  const auto on = chain({Vec3(0, 5, 0), Vec3(0, 0, 0)});
  EXPECT_NEAR(cd_joint2bone(on, ref, 10.0), 0.5 * (0.0 + 2.5) / 10.0, 1e-15);
  const auto off = chain({Vec3(0.3, 0, 0), Vec3(0.3, 10, 0)});
  EXPECT_NEAR(cd_joint2bone(off, ref, 10.0), 0.3 / 10.0, 1e-15);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto p = random_tree(rng, 4), r = random_tree(rng, 6);
    EXPECT_NEAR(cd_joint2bone(p, r, 2.0),
                test::brute_cd_joint2bone(positions(p), segments(p), positions(r), segments(r), 2.0), 1e-12);
  }
  Skeleton lone;
  lone.joints = {{"a", Vec3::Zero()}};
  EXPECT_THROW(cd_joint2bone(lone, ref, 1.0), std::invalid_argument);
}

TEST(MatchingRates, CylinderThresholds) {
  const double r = 0.1;
  const auto mesh = make_cylinder(Vec3(0, 0, 0), Vec3(0, 1.2, 0), r, 256, 8);
  const auto ref = chain({Vec3(0, 0.3, 0), Vec3(0, 0.9, 0)});
  const auto d = reference_diameters(ref, mesh);
  EXPECT_NEAR(d.values[0], 2 * r, 1e-3);
  EXPECT_NEAR(d.values[1], 2 * r, 1e-3);
  auto near = ref, far = ref;
  near.joints[0].position.y() += 0.9 * r;
  far.joints[0].position.y() += 1.1 * r;
  const auto mn = matching_rates(near, ref, mesh), mf = matching_rates(far, ref, mesh);
  EXPECT_EQ(mn.mr_ref, 100.0);
  EXPECT_EQ(mf.mr_ref, 50.0);
  EXPECT_EQ(mf.mr_pred, 50.0);
  const auto same = matching_rates(ref, ref, mesh);
  EXPECT_EQ(same.mr_pred, 100.0);
  EXPECT_EQ(same.mr_ref, 100.0);
  EXPECT_EQ(same.fallback_joints, 0);
}

TEST(MatchingRates, SpuriousJointOnlyHurtsPrecision) {
  const auto mesh = make_cylinder(Vec3(0, 0, 0), Vec3(0, 1.2, 0), 0.1, 64, 8);
  const auto ref = chain({Vec3(0, 0.3, 0), Vec3(0, 0.9, 0)});
  auto pred = chain({Vec3(0, 0.3, 0), Vec3(0, 0.9, 0), Vec3(0, 0.6, 0)});
  const auto m = matching_rates(pred, ref, mesh);
  EXPECT_EQ(m.mr_ref, 100.0);
  EXPECT_LT(m.mr_pred, 100.0);
  EXPECT_NEAR(m.mr_pred, 200.0 / 3.0, 1e-12);
}

TEST(MatchingRates, AllRaysMissFallsBack) {
  const auto mesh = make_cylinder(Vec3(0, 0, 0), Vec3(0, 1.2, 0), 0.1, 64, 8);
  const auto ref = chain({Vec3(0, 0.3, 0), Vec3(0, 0.9, 0), Vec3(5, 0.9, 0)});
  const auto d = reference_diameters(ref, mesh);
  EXPECT_TRUE(d.fallback[2]);
  EXPECT_NEAR(d.values[2], 0.5 * (d.values[0] + d.values[1]), 1e-12);
  EXPECT_EQ(matching_rates(ref, ref, mesh).fallback_joints, 1);
}

TEST(Dataset, MeansFlagsAndScaleInvariance) {
  const auto mesh = make_box(Vec3::Zero(), Vec3(1, 2, 1));
  const auto ref = chain({Vec3(0.5, 0.2, 0.5), Vec3(0.5, 1.8, 0.5)});
  auto p1 = ref, p2 = ref;
  for (auto& j : p1.joints) j.position.x() += 0.04;
  for (auto& j : p2.joints) j.position.x() += 0.08;
  const auto rep = evaluate_dataset({{"a", p1, ref, mesh}, {"b", p2, ref, mesh}, {"bad", Skeleton{}, ref, mesh}});
  EXPECT_NEAR(rep.shapes[0].cd_joint, 0.02, 1e-12);
  EXPECT_NEAR(rep.shapes[1].cd_joint, 0.04, 1e-12);
  EXPECT_NEAR(rep.mean.cd_joint, 0.03, 1e-12);
  EXPECT_TRUE(rep.shapes[2].flagged);
  EXPECT_EQ(rep.used, 2);
  EXPECT_TRUE(rep.any_flagged());
  EXPECT_EQ(rep.to_json()["shapes"].size(), 3u);
  EXPECT_NE(rep.table().find("FLAGGED"), std::string::npos);

  const auto same = evaluate_dataset({{"x", ref, ref, mesh}});
  EXPECT_EQ(same.mean.cd_joint, 0.0);
  EXPECT_EQ(same.mean.cd_joint2bone, 0.0);
  EXPECT_EQ(same.mean.mr_pred, 100.0);
  EXPECT_EQ(same.mean.mr_ref, 100.0);

  auto scaled = [](Skeleton s) {
    for (auto& j : s.joints) j.position *= 3.5;
    return s;
  };
  TriangleMesh big = mesh;
  for (auto& v : big.vertices) v *= 3.5;
  const auto r2 = evaluate_dataset({{"a", scaled(p1), scaled(ref), big}});
  EXPECT_NEAR(r2.shapes[0].cd_joint, rep.shapes[0].cd_joint, 1e-12);
  EXPECT_NEAR(r2.shapes[0].cd_joint2bone, rep.shapes[0].cd_joint2bone, 1e-12);
  EXPECT_EQ(r2.shapes[0].mr_pred, rep.shapes[0].mr_pred);
  EXPECT_THROW(evaluate_dataset({}), std::invalid_argument);
}

}  // namespace
