#pragma once

#include "volrig/adam.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace volrig::nn {

/// Writes <stem>.json (names, shapes, dtype, byte offsets, user metadata) and
/// <stem>.bin (little-endian float32 blob).
void save_checkpoint(const std::filesystem::path& stem, const std::vector<Parameter<float>>& tensors,
                     const nlohmann::json& metadata = {});

/// Loads values into `tensors` in place. Rejects missing names and shape mismatches.
/// Returns the stored metadata.
nlohmann::json load_checkpoint(const std::filesystem::path& stem, std::vector<Parameter<float>>& tensors);

nlohmann::json read_checkpoint_metadata(const std::filesystem::path& stem);

}  // namespace volrig::nn
