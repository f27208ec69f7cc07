#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dbtanet/core/nn.hpp"

namespace dbtanet {

// Checkpoint container: 8-byte magic "DBTACKPT", 4-byte little-endian
// manifest length, UTF-8 JSON manifest, then raw little-endian float32
// buffers in manifest order. The manifest carries the array table plus
// arbitrary extra fields (config echo, epoch, metric history).

inline constexpr char kCheckpointMagic[8] = {'D', 'B', 'T', 'A', 'C', 'K', 'P', 'T'};

template <typename T>
void save_arrays(const std::string& path, const std::vector<nn::NamedTensor<T>>& state,
                 const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json manifest = extra;
  manifest["arrays"] = nlohmann::json::array();
  for (const auto& nt : state) {
    nlohmann::json a;
    a["name"] = nt.name;
    a["shape"] = nt.tensor.shape();
    a["dtype"] = "f32le";
    manifest["arrays"].push_back(a);
  }
  std::string mstr = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write checkpoint file: " + path);
  f.write(kCheckpointMagic, 8);
  uint32_t len = static_cast<uint32_t>(mstr.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(len & 0xff),
                           static_cast<unsigned char>((len >> 8) & 0xff),
                           static_cast<unsigned char>((len >> 16) & 0xff),
                           static_cast<unsigned char>((len >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  std::vector<float> buf;
  for (const auto& nt : state) {
    buf.resize(static_cast<size_t>(nt.tensor.size()));
    for (int64_t i = 0; i < nt.tensor.size(); ++i) buf[size_t(i)] = static_cast<float>(nt.tensor.data()[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw TrainingError("checkpoint write failed: " + path);
}

struct LoadedArrays {
  nlohmann::json manifest;
  std::map<std::string, std::pair<Shape, std::vector<float>>> arrays;
};

inline LoadedArrays read_arrays(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint file: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ValidationError("not a checkpoint file (bad magic): " + path);
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  if (!f) throw ValidationError("truncated checkpoint file: " + path);
  uint32_t len = uint32_t(lenb[0]) | (uint32_t(lenb[1]) << 8) | (uint32_t(lenb[2]) << 16) |
                 (uint32_t(lenb[3]) << 24);
  std::string mstr(len, '\0');
  f.read(mstr.data(), len);
  if (!f) throw ValidationError("truncated checkpoint manifest: " + path);
  LoadedArrays out;
  try {
    out.manifest = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("invalid checkpoint manifest JSON: " + std::string(e.what()));
  }
  if (!out.manifest.contains("arrays") || !out.manifest["arrays"].is_array())
    throw ValidationError("checkpoint manifest lacks an arrays table: " + path);
  for (const auto& a : out.manifest["arrays"]) {
    std::string name = a.at("name").get<std::string>();
    Shape shape = a.at("shape").get<Shape>();
    if (a.at("dtype").get<std::string>() != "f32le")
      throw ValidationError("unsupported array dtype in checkpoint: " + name);
    std::vector<float> data(static_cast<size_t>(numel(shape)));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!f) throw ValidationError("truncated checkpoint array: " + name);
    out.arrays.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
  }
  return out;
}

// Copies loaded arrays into a module's state by name. Every module tensor
// must be present with a matching shape; extra arrays are an error when
// strict.
template <typename T>
void load_state(nn::Module<T>& module, const LoadedArrays& loaded, bool strict = true) {
  auto state = module.named_state();
  size_t used = 0;
  for (auto& nt : state) {
    auto it = loaded.arrays.find(nt.name);
    if (it == loaded.arrays.end())
      throw ValidationError("checkpoint is missing array: " + nt.name);
    const auto& [shape, data] = it->second;
    if (shape != nt.tensor.shape())
      throw ValidationError("checkpoint array " + nt.name + " has shape " + shape_str(shape) +
                            ", expected " + shape_str(nt.tensor.shape()));
    for (int64_t i = 0; i < nt.tensor.size(); ++i)
      nt.tensor.data()[i] = static_cast<T>(data[size_t(i)]);
    ++used;
  }
  if (strict && used != loaded.arrays.size())
    throw ValidationError("checkpoint has " + std::to_string(loaded.arrays.size() - used) +
                          " unused arrays");
}

}  // namespace dbtanet
