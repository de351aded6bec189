// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "selg/visual_io.h"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace selg {

namespace {
constexpr char kLipMagic[8] = {'S', 'E', 'L', 'G', 'L', 'I', 'P', '1'};
}

PoseSequence read_pose(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_pose: cannot open " + path);
  nlohmann::json j;
  is >> j;
  PoseSequence p;
  p.fps = j.at("fps").get<int>();
  const auto& names = j.at("joint_names");
  if (names.size() != kNumJoints)
    throw std::runtime_error("read_pose: expected 10 joint names: " + path);
  for (int i = 0; i < kNumJoints; ++i)
    if (names[i].get<std::string>() != kJointNames[i])
      throw std::runtime_error("read_pose: unexpected joint order: " + path);
  const auto& data = j.at("data");
  const int64_t f = static_cast<int64_t>(data.size());
  p.frames = Tensor<float>({f, kNumJoints, 3});
  for (int64_t t = 0; t < f; ++t) {
    const auto& fr = data[t];
    if (fr.size() != kNumJoints)
      throw std::runtime_error("read_pose: malformed frame: " + path);
    for (int jn = 0; jn < kNumJoints; ++jn)
      for (int k = 0; k < 3; ++k)
        p.frames[(t * kNumJoints + jn) * 3 + k] = fr[jn][k].get<float>();
  }
  validate_pose(p);
  return p;
}

void write_pose(const std::string& path, const PoseSequence& pose) {
  validate_pose(pose);
  nlohmann::json j;
  j["fps"] = pose.fps;
  j["joint_names"] = kJointNames;
  nlohmann::json data = nlohmann::json::array();
  const int64_t f = pose.num_frames();
  for (int64_t t = 0; t < f; ++t) {
    nlohmann::json fr = nlohmann::json::array();
    for (int jn = 0; jn < kNumJoints; ++jn) {
      const float* v = pose.frames.data() + (t * kNumJoints + jn) * 3;
      fr.push_back({v[0], v[1], v[2]});
    }
    data.push_back(std::move(fr));
  }
  j["data"] = std::move(data);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_pose: cannot open " + path);
  os << j.dump();
  if (!os) throw std::runtime_error("write_pose: write failed: " + path);
}

LipSequence read_lip(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw std::runtime_error("read_lip: missing sidecar " + path + ".json");
  nlohmann::json j;
  side >> j;
  LipSequence l;
  l.fps = j.at("fps").get<int>();
  const int64_t f = j.at("F").get<int64_t>();
  const int64_t h = j.at("H").get<int64_t>();
  const int64_t w = j.at("W").get<int64_t>();

  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_lip: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kLipMagic, 8) != 0)
    throw std::runtime_error("read_lip: bad magic: " + path);
  l.frames = Tensor<float>({f, h, w});
  is.read(reinterpret_cast<char*>(l.frames.data()), l.frames.numel() * 4);
  if (!is) throw std::runtime_error("read_lip: truncated data: " + path);
  validate_lip(l);
  return l;
}

void write_lip(const std::string& path, const LipSequence& lip) {
  validate_lip(lip);
  nlohmann::json j;
  j["F"] = lip.num_frames();
  j["H"] = lip.height();
  j["W"] = lip.width();
  j["fps"] = lip.fps;
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("write_lip: cannot open sidecar for " + path);
  side << j.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_lip: cannot open " + path);
  os.write(kLipMagic, 8);
  os.write(reinterpret_cast<const char*>(lip.frames.data()), lip.frames.numel() * 4);
  if (!os) throw std::runtime_error("write_lip: write failed: " + path);
}

}  // namespace selg
