#pragma once

#include "volrig/adam.hpp"
#include "volrig/ops.hpp"
#include "volrig/random.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace volrig {

/// Desired minimum shape diameter of rigged parts, in normalized units.
struct GranularityParam {
  static constexpr double kDefault = 0.02;
  double value = kDefault;

  GranularityParam() = default;
  explicit GranularityParam(double v);
};

struct NetworkConfig {
  int resolution = 88;
  int num_modules = 4;
  int input_channels = 5;
  std::array<int, 4> widths = {8, 16, 24, 36};  // full, 1/2, 1/4, 1/8 resolution
  int granularity_channels = 4;
  double dropout = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
};

/// Per-module probability maps (each [R,R,R,1]) and the shared pre-block features.
struct StackOutputs {
  std::vector<nn::Tensor> joint;
  std::vector<nn::Tensor> bone;
  nn::Tensor shape_features;
};

/// Records (layer name, output shape) during a forward pass.
using LayerTrace = std::vector<std::pair<std::string, nn::Shape>>;

namespace layers {

struct Conv {
  nn::Tensor weight, bias;
  int stride = 1;
};

struct BatchNorm {
  nn::Tensor gamma, beta;
  nn::BatchNormState<float> state;
};

struct ConvBn {
  Conv conv;
  BatchNorm bn;
};

/// Two 3x3x3 conv+BN layers; a third 3x3x3 conv+BN on the skip path when widths differ.
struct ResBlock {
  ConvBn first, second;
  std::unique_ptr<ConvBn> projection;
};

struct Up {
  nn::Tensor weight, bias;
  BatchNorm bn;
};

struct Branch {
  ResBlock block;
  ConvBn reduce;  // 1x1x1, followed by ReLU and dropout
  Conv out;       // 1x1x1 to a single channel
};

struct Hourglass {
  std::array<ConvBn, 3> down;
  std::array<ResBlock, 3> encode;
  nn::Tensor granularity_weight, granularity_bias;
  ResBlock bottleneck;
  std::array<ResBlock, 3> decode;  // index 2 = coarsest
  std::array<ResBlock, 3> skip;
  std::array<Up, 3> up;
  Branch joint, bone;
};

}  // namespace layers

/// Stacked volumetric hourglass network producing joint and bone probability maps.
class HourglassNetwork {
 public:
  HourglassNetwork(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  /// input: [R,R,R,input_channels]. `rng` drives dropout in train mode.
  StackOutputs forward(const nn::Tensor& input, GranularityParam granularity, nn::Mode mode, Rng& rng,
                       LayerTrace* trace = nullptr);

  /// Trainable parameters in a fixed order with unique names.
  std::vector<nn::Parameter<float>> parameters() const;
  /// Parameters plus batch-norm running statistics (the checkpointed state).
  std::vector<nn::Parameter<float>> state() const;
  std::size_t parameter_count() const;

 private:
  NetworkConfig config_;
  layers::ConvBn pre_conv_;
  layers::ResBlock pre_block_;
  std::vector<layers::Hourglass> stack_;
};

/// Input tensor from flat channel-last data.
nn::Tensor make_input_tensor(int resolution, int channels, const std::vector<float>& data);

}  // namespace volrig
