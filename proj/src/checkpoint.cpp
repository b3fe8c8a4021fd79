#include "volrig/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace volrig::nn {

namespace {

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const std::vector<Parameter<float>>& tensors,
                     const nlohmann::json& metadata) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  nlohmann::json manifest;
  manifest["format"] = "volrig-checkpoint-1";
  manifest["dtype"] = "float32";
  manifest["blob"] = with_ext(stem, ".bin").filename().string();
  manifest["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  manifest["tensors"] = nlohmann::json::array();
  const auto tmp_bin = with_ext(stem, ".bin.tmp");
  std::ofstream blob(tmp_bin, std::ios::binary);
  std::size_t offset = 0;
  for (const auto& p : tensors) {
    const auto v = p.tensor.values();
    blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    manifest["tensors"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}, {"count", v.size()}});
    offset += v.size() * sizeof(float);
  }
  blob.close();
  if (!blob) throw std::runtime_error("failed writing checkpoint blob " + tmp_bin.string());
  const auto tmp_json = with_ext(stem, ".json.tmp");
  {
    std::ofstream out(tmp_json);
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint manifest");
  }
  std::filesystem::rename(tmp_bin, with_ext(stem, ".bin"));
  std::filesystem::rename(tmp_json, with_ext(stem, ".json"));
}

nlohmann::json read_checkpoint_metadata(const std::filesystem::path& stem) {
  std::ifstream in(with_ext(stem, ".json"));
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + with_ext(stem, ".json").string());
  return nlohmann::json::parse(in);
}

nlohmann::json load_checkpoint(const std::filesystem::path& stem, std::vector<Parameter<float>>& tensors) {
  const auto manifest = read_checkpoint_metadata(stem);
  std::ifstream blob(stem.parent_path() / manifest.at("blob").get<std::string>(), std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open checkpoint blob for " + stem.string());
  std::map<std::string, nlohmann::json> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = e;
  if (entries.size() != tensors.size())
    throw std::runtime_error("checkpoint has " + std::to_string(entries.size()) + " tensors, network expects " +
                             std::to_string(tensors.size()));
  for (auto& p : tensors) {
    const auto it = entries.find(p.name);
    if (it == entries.end()) throw std::runtime_error("checkpoint is missing tensor '" + p.name + "'");
    const auto shape = it->second.at("shape").get<Shape>();
    if (shape != p.tensor.shape())
      throw std::runtime_error("checkpoint tensor '" + p.name + "' has shape " + shape_str(shape) + ", expected " +
                               shape_str(p.tensor.shape()));
    blob.seekg(static_cast<std::streamoff>(it->second.at("offset").get<std::size_t>()));
    auto dst = p.tensor.mutable_values();
    blob.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(float)));
    if (!blob) throw std::runtime_error("truncated checkpoint blob at '" + p.name + "'");
  }
  return manifest.at("metadata");
}

}  // namespace volrig::nn
