#include "volrig/evaluation.hpp"

#include "volrig/mesh_query.hpp"
#include "volrig/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace volrig {

namespace {

void require_joints(const Skeleton& s, const char* which) {
  if (s.joints.empty()) throw std::invalid_argument(std::string(which) + " skeleton has no joints");
}

void require_bones(const Skeleton& s, const char* which) {
  if (s.edges.empty()) throw std::invalid_argument(std::string(which) + " skeleton has no bones");
}

double nearest_joint(const Vec3& p, const Skeleton& s, int* index = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < s.joints.size(); ++j) {
    const double d = (p - s.joints[j].position).norm();
    if (d < best) {
      best = d;
      if (index) *index = static_cast<int>(j);
    }
  }
  return best;
}

double nearest_bone(const Vec3& p, const Skeleton& s) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : s.edges)
    best = std::min(best, point_segment_distance(p, s.joints[a].position, s.joints[b].position));
  return best;
}

template <class F>
double mean_over(const Skeleton& s, F f) {
  double total = 0.0;
  for (const auto& j : s.joints) total += f(j.position);
  return total / static_cast<double>(s.joints.size());
}

}  // namespace

double cd_joint(const Skeleton& pred, const Skeleton& ref, double longest_axis) {
  require_joints(pred, "predicted");
  require_joints(ref, "reference");
  const double a = mean_over(pred, [&](const Vec3& p) { return nearest_joint(p, ref); });
  const double b = mean_over(ref, [&](const Vec3& p) { return nearest_joint(p, pred); });
  return 0.5 * (a + b) / longest_axis;
}

double cd_joint2bone(const Skeleton& pred, const Skeleton& ref, double longest_axis) {
  require_bones(pred, "predicted");
  require_bones(ref, "reference");
  const double a = mean_over(pred, [&](const Vec3& p) { return nearest_bone(p, ref); });
  const double b = mean_over(ref, [&](const Vec3& p) { return nearest_bone(p, pred); });
  return 0.5 * (a + b) / longest_axis;
}

JointDiameters reference_diameters(const Skeleton& ref, const TriangleMesh& mesh, int rays) {
  require_bones(ref, "reference");
  const MeshQuery query(mesh);
  const auto kids = ref.children();
  const auto parents = ref.parents();
  const std::size_t n = ref.joints.size();
  JointDiameters out{std::vector<double>(n, 0.0), std::vector<char>(n, 0)};
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 p = ref.joints[j].position;
    const int other = kids[j].empty() ? parents[j] : kids[j].front();
    const Vec3 axis = (ref.joints[other].position - p).normalized();
    const Vec3 e1 = axis.unitOrthogonal(), e2 = axis.cross(e1);
    double total = 0.0;
    int used = 0;
    for (int r = 0; r < rays; ++r) {
      const double th = std::numbers::pi * r / rays;
      const Vec3 d = std::cos(th) * e1 + std::sin(th) * e2;
      const auto fwd = query.raycast(p, d), back = query.raycast(p, -d);
      if (!fwd || !back) continue;
      total += fwd->distance + back->distance;
      ++used;
    }
    if (used)
      out.values[j] = total / used;
    else
      out.fallback[j] = 1;
  }
  double total = 0.0;
  int valid = 0;
  for (std::size_t j = 0; j < n; ++j)
    if (!out.fallback[j]) total += out.values[j], ++valid;
  const double global = valid ? total / valid : mesh.longest_extent();
  for (std::size_t j = 0; j < n; ++j)
    if (out.fallback[j]) out.values[j] = global;
  return out;
}

MatchingRates matching_rates(const Skeleton& pred, const Skeleton& ref, const TriangleMesh& mesh, double tol) {
  require_joints(pred, "predicted");
  const auto diam = reference_diameters(ref, mesh);
  MatchingRates m;
  for (char f : diam.fallback) m.fallback_joints += f;
  int hits = 0;
  for (const auto& j : pred.joints) {
    int r = 0;
    const double d = nearest_joint(j.position, ref, &r);
    if (d < tol * diam.values[r]) ++hits;
  }
  m.mr_pred = 100.0 * hits / static_cast<double>(pred.joints.size());
  hits = 0;
  for (std::size_t r = 0; r < ref.joints.size(); ++r)
    if (nearest_joint(ref.joints[r].position, pred) < tol * diam.values[r]) ++hits;
  m.mr_ref = 100.0 * hits / static_cast<double>(ref.joints.size());
  return m;
}

EvalReport evaluate_dataset(const std::vector<EvalCase>& cases, double tol) {
  if (cases.empty()) throw std::invalid_argument("evaluation needs at least one shape");
  EvalReport report;
  report.tolerance = tol;
  report.shapes.resize(cases.size());
  parallel_for(cases.size(), [&](std::size_t i) {
    const auto& c = cases[i];
    auto& row = report.shapes[i];
    row.name = c.name;
    try {
      const double axis = c.mesh.longest_extent();
      row.cd_joint = cd_joint(c.pred, c.ref, axis);
      row.cd_joint2bone = cd_joint2bone(c.pred, c.ref, axis);
      const auto mr = matching_rates(c.pred, c.ref, c.mesh, tol);
      row.mr_pred = mr.mr_pred;
      row.mr_ref = mr.mr_ref;
      if (mr.fallback_joints) row.note = std::to_string(mr.fallback_joints) + " joint diameter(s) fell back to the mean";
    } catch (const std::exception& e) {
      row.flagged = true;
      row.note = e.what();
    }
  });
  report.mean.name = "mean";
  for (const auto& row : report.shapes) {
    if (row.flagged) continue;
    report.mean.cd_joint += row.cd_joint;
    report.mean.cd_joint2bone += row.cd_joint2bone;
    report.mean.mr_pred += row.mr_pred;
    report.mean.mr_ref += row.mr_ref;
    ++report.used;
  }
  if (report.used) {
    report.mean.cd_joint /= report.used;
    report.mean.cd_joint2bone /= report.used;
    report.mean.mr_pred /= report.used;
    report.mean.mr_ref /= report.used;
  } else {
    report.mean.flagged = true;
    report.mean.note = "every shape was flagged";
  }
  return report;
}

bool EvalReport::any_flagged() const {
  return std::any_of(shapes.begin(), shapes.end(), [](const ShapeMetrics& s) { return s.flagged; });
}

nlohmann::json EvalReport::to_json() const {
  auto row = [](const ShapeMetrics& s) {
    nlohmann::json j{{"name", s.name},       {"cd_joint", s.cd_joint}, {"cd_joint2bone", s.cd_joint2bone},
                     {"mr_pred", s.mr_pred}, {"mr_ref", s.mr_ref},     {"flagged", s.flagged}};
    if (!s.note.empty()) j["note"] = s.note;
    return j;
  };
  nlohmann::json j{{"tolerance", tolerance}, {"shapes", nlohmann::json::array()}, {"mean", row(mean)}, {"used", used}};
  for (const auto& s : shapes) j["shapes"].push_back(row(s));
  return j;
}

std::string EvalReport::table() const {
  std::size_t w = 5;
  for (const auto& s : shapes) w = std::max(w, s.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(w)) << "shape" << std::right << std::setw(12) << "cd_joint"
      << std::setw(15) << "cd_joint2bone" << std::setw(10) << "mr_pred" << std::setw(10) << "mr_ref" << "  note\n";
  auto line = [&](const ShapeMetrics& s) {
    out << std::left << std::setw(static_cast<int>(w)) << s.name << std::right << std::fixed;
    if (s.flagged) {
      out << std::setw(12) << "-" << std::setw(15) << "-" << std::setw(10) << "-" << std::setw(10) << "-";
    } else {
      out << std::setprecision(4) << std::setw(12) << s.cd_joint << std::setw(15) << s.cd_joint2bone
          << std::setprecision(1) << std::setw(10) << s.mr_pred << std::setw(10) << s.mr_ref;
    }
    out << "  " << (s.flagged ? "FLAGGED: " : "") << s.note << '\n';
  };
  for (const auto& s : shapes) line(s);
  line(mean);
  return out.str();
}

}  // namespace volrig
