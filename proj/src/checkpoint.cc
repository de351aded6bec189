// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "selg/checkpoint.h"

#include <cstring>
#include <fstream>

#include "selg/config_json.h"

namespace selg {

namespace {
constexpr char kMagic[8] = {'S', 'E', 'L', 'G', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const nn::ParamStore<float>& store,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["format"] = 1;
  header["model"] = cfg;
  header["extra"] = extra;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& p : store.params())
    dir.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  header["tensors"] = std::move(dir);
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kMagic, 8);
  const uint64_t len = hs.size();
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : store.params())
    os.write(reinterpret_cast<const char*>(p->value.data()), p->value.numel() * 4);
  if (!os) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("read_checkpoint: bad magic: " + path);
  uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("read_checkpoint: truncated header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs);

  CheckpointData out;
  out.config = header.at("model").get<ModelConfig>();
  out.extra = header.value("extra", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()), t.numel() * 4);
    if (!is) throw std::runtime_error("read_checkpoint: truncated tensor " + name);
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

void load_into(SelgModel<float>* model, const CheckpointData& ckpt) {
  const nlohmann::json want = model->config();
  const nlohmann::json have = ckpt.config;
  if (want != have)
    throw std::invalid_argument("load_into: checkpoint config mismatch\n  model: " +
                                want.dump() + "\n  ckpt:  " + have.dump());
  for (const auto& p : model->store().params()) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end())
      throw std::invalid_argument("load_into: missing tensor " + p->name);
    if (it->second.shape() != p->value.shape())
      throw std::invalid_argument("load_into: shape mismatch for " + p->name);
    p->value = it->second;
  }
  if (ckpt.tensors.size() != model->store().params().size())
    throw std::invalid_argument("load_into: checkpoint has extra tensors");
}

}  // namespace selg
