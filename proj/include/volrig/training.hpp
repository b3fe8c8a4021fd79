#pragma once

#include "volrig/features.hpp"
#include "volrig/hourglass.hpp"
#include "volrig/skeleton.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace volrig {

struct TargetMaps {
  Volume joint;
  Volume bone;
};

/// Unnormalized Gaussians (peak 1) around joints and dense bone samples, max-aggregated.
/// sigma and spacing are in voxels.
TargetMaps make_target_maps(const Skeleton& skeleton, const VoxelGrid& grid, double sigma = 1.0,
                            double bone_spacing = 0.5);

/// Nearest-rank percentile, p in (0, 100].
double percentile_nearest_rank(std::vector<double> values, double p);

/// Fifth percentile of per-sample local shape diameter, clamped to [0, 1].
GranularityParam granularity_from_diameters(const std::vector<double>& diameters);
GranularityParam compute_granularity_label(const RiggedCharacter& character, std::size_t samples = 16000,
                                           std::uint64_t seed = 1);

/// Per-axis scale of mesh and joints about the origin. No re-normalization.
RiggedCharacter apply_scale(const RiggedCharacter& character, const Vec3& scale);

/// Rigidly rotates the subtree below `joint` about it and blends nearby vertices between
/// the parent bone and the rotated child bones by inverse distance. No re-normalization.
RiggedCharacter rotate_subtree(const RiggedCharacter& character, int joint, const Eigen::Matrix3d& rotation);

/// Normalizes the mesh and carries the joints along.
RiggedCharacter renormalize(const RiggedCharacter& character);

/// Fraction of surface samples lying inside the region of a bone that does not share a joint
/// with the sample's own bone.
double penetration_fraction(const RiggedCharacter& character, std::size_t samples = 1500, std::uint64_t seed = 3);

struct AugmentOptions {
  double min_scale = 0.5, max_scale = 1.5;
  double min_angle_deg = 30.0, max_angle_deg = 50.0;
  double max_penetration = 0.02;
  int max_retries = 10;
};

/// Up to `count` (at most 5) re-normalized variants.
std::vector<RiggedCharacter> augment(const RiggedCharacter& character, std::uint64_t seed, int count,
                                     const AugmentOptions& opts = {});

/// Sum over modules of the masked soft cross-entropy of joint and bone maps.
nn::Tensor masked_loss(const StackOutputs& outputs, const TargetMaps& targets, const OccupancyMask& mask);

struct TrainConfig {
  int iterations = 300;
  std::uint64_t seed = 1;
  double lr = 1e-4;
  int batch_size = 1;
  int resolution = 88;
  int num_modules = 4;
  int augmentations = 0;
  double heatmap_sigma = 1.0;
  double bone_spacing = 0.5;
  double dropout = 0.2;
  std::size_t samples = 16000;
  std::uint64_t feature_seed = 1;
  std::filesystem::path cache_dir;  // empty: no disk cache
  std::filesystem::path checkpoint;  // stem; empty: not written
  std::filesystem::path loss_log;    // JSON lines; empty: not written

  void validate() const;
  NetworkConfig network() const;
  FeatureOptions features() const;
  nlohmann::json to_json() const;
  /// Fields missing from j keep the values in base.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) { return TrainConfig::from_json(j, TrainConfig{}); }

/// Network input, targets, mask and label for one character.
struct TrainingExample {
  std::string name;
  Features features;
  TargetMaps targets;
  GranularityParam granularity;
};

/// Features are loaded from / stored to cache_dir when it is set.
TrainingExample prepare_example(const RiggedCharacter& character, const TrainConfig& cfg, const std::string& name = {});

/// 64-bit FNV-1a of mesh geometry and featurization settings.
std::uint64_t feature_cache_key(const TriangleMesh& mesh, const FeatureOptions& opts);

struct IterationRecord {
  int iteration;
  std::string example;
  double loss;
  std::vector<double> module_losses;
};

struct TrainResult {
  std::unique_ptr<HourglassNetwork> network;
  std::vector<IterationRecord> history;
};

using TrainCallback = std::function<void(const IterationRecord&)>;

TrainResult train(const std::vector<RiggedCharacter>& dataset, const TrainConfig& cfg,
                  const std::vector<std::string>& names = {}, const TrainCallback& on_iteration = {});

/// Checkpoint metadata needed to rebuild the network and featurize consistently.
nlohmann::json checkpoint_metadata(const TrainConfig& cfg);

}  // namespace volrig
