#pragma once

#include "volrig/features.hpp"
#include "volrig/hourglass.hpp"
#include "volrig/skeleton.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <stdexcept>
#include <utility>
#include <vector>

namespace volrig {

enum class NMSDecay {
  Multiplicative,  // p *= 1 - G
  Subtractive,     // p = max(0, p - G)
};

struct NMSConfig {
  double sigma = 4.5;       // voxels
  double threshold = 0.013;
  NMSDecay decay = NMSDecay::Subtractive;

  void validate() const;
};

NMSDecay parse_nms_decay(const std::string& s);
std::string to_string(NMSDecay d);

struct JointCandidate {
  Index3 voxel;
  Vec3 position;       // cell center
  double probability;  // value when selected
};

class EmptySkeletonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (P(v) + P(reflect(v))) / 2 with trilinear lookup of the reflected position.
Volume symmetrize_map(const Volume& map, const SymmetryPlane& plane);

/// Greedy extraction with Gaussian decay (cfg.decay) inside a 3 sigma ball.
/// Equal maxima resolve to the lexicographically smallest (i, j, k).
std::vector<JointCandidate> soft_nms(const Volume& joint_map, const OccupancyMask& mask, const NMSConfig& cfg = {});

/// Moves joints within half a cell of the plane onto it. The voxel index is kept.
void center_on_plane(std::vector<JointCandidate>& joints, const SymmetryPlane& plane, double cell_size);

/// Cells whose interior the segment between the centers of a and b passes through,
/// in order from a to b, both endpoints included.
std::vector<Index3> traverse_voxels(const Index3& a, const Index3& b);

inline constexpr double kExteriorCost = 1e5;

/// Sum over traversed cells of -log(clamp(P_b, 1e-7, 1)), or kExteriorCost for unmasked cells.
double edge_cost(const Volume& bone_map, const OccupancyMask& mask, const JointCandidate& a, const JointCandidate& b);

/// Prim's algorithm on a dense symmetric cost matrix starting at vertex 0. Ties go to the
/// smaller (min, max) vertex pair. Returns undirected edges as (min, max).
std::vector<std::pair<int, int>> prim_mst(const std::vector<std::vector<double>>& cost);

/// Sum of edge weights, added in ascending order.
double tree_cost(const std::vector<std::vector<double>>& cost, const std::vector<std::pair<int, int>>& edges);

/// MST over all joint pairs, rooted at the joint nearest the mask centroid.
Skeleton build_skeleton(const std::vector<JointCandidate>& joints, const Volume& bone_map, const OccupancyMask& mask);

struct PredictOptions {
  GranularityParam granularity;
  NMSConfig nms;
  bool symmetrize = true;  // only when the mesh is symmetric
};

struct Prediction {
  Skeleton skeleton;             // input mesh coordinates
  Skeleton normalized_skeleton;  // normalized frame
  std::vector<JointCandidate> candidates;
  Features features;
  Volume joint_map, bone_map;  // after symmetrization
  std::optional<SymmetryPlane> symmetry;
  SimilarityTransform transform;  // input -> normalized
};

/// Network plus the featurization settings stored with it.
class Predictor {
 public:
  /// Rejects a checkpoint whose resolution differs from `resolution` when that is positive.
  explicit Predictor(const std::filesystem::path& checkpoint, int resolution = 0);
  /// Wraps an in-memory network.
  Predictor(HourglassNetwork& network, const FeatureOptions& features);

  Prediction predict(const TriangleMesh& mesh, const PredictOptions& opts = {}) const;
  const NetworkConfig& network_config() const { return network_->config(); }
  const FeatureOptions& feature_options() const { return features_; }

 private:
  std::shared_ptr<HourglassNetwork> owned_;
  HourglassNetwork* network_;
  FeatureOptions features_;
};

}  // namespace volrig
