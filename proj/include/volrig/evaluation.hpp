#pragma once

#include "volrig/skeleton.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace volrig {

/// Symmetric mean nearest-joint distance divided by longest_axis.
double cd_joint(const Skeleton& pred, const Skeleton& ref, double longest_axis);

/// Symmetric mean joint-to-nearest-bone distance divided by longest_axis.
double cd_joint2bone(const Skeleton& pred, const Skeleton& ref, double longest_axis);

struct JointDiameters {
  std::vector<double> values;
  std::vector<char> fallback;  // every ray missed; value is the mean of the others
};

/// Per reference joint: mean chord length over 8 lines through the joint perpendicular to
/// its first child bone (or its parent bone for leaves).
JointDiameters reference_diameters(const Skeleton& ref, const TriangleMesh& mesh, int rays = 8);

struct MatchingRates {
  double mr_pred = 0.0;  // percent
  double mr_ref = 0.0;
  int fallback_joints = 0;
};

/// A joint pair matches when its distance is below tol times the diameter at the reference joint.
MatchingRates matching_rates(const Skeleton& pred, const Skeleton& ref, const TriangleMesh& mesh, double tol = 0.5);

struct EvalCase {
  std::string name;
  Skeleton pred, ref;
  TriangleMesh mesh;
};

struct ShapeMetrics {
  std::string name;
  double cd_joint = 0.0, cd_joint2bone = 0.0, mr_pred = 0.0, mr_ref = 0.0;
  bool flagged = false;
  std::string note;
};

struct EvalReport {
  double tolerance = 0.5;
  std::vector<ShapeMetrics> shapes;
  ShapeMetrics mean;  // over unflagged shapes
  int used = 0;

  nlohmann::json to_json() const;
  std::string table() const;
  bool any_flagged() const;
};

EvalReport evaluate_dataset(const std::vector<EvalCase>& cases, double tol = 0.5);

}  // namespace volrig
