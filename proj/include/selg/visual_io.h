// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SELG_VISUAL_IO_H_
#define SELG_VISUAL_IO_H_

#include <string>

#include "selg/visual_encoders.h"

namespace selg {

// Pose files: JSON {fps, joint_names[10], data: F x 10 x 3 nested arrays}.
PoseSequence read_pose(const std::string& path);
void write_pose(const std::string& path, const PoseSequence& pose);

// Lip files: 8-byte magic "SELGLIP1" followed by raw little-endian float32
// frames, plus a JSON sidecar at <path>.json holding {F, H, W, fps}.
LipSequence read_lip(const std::string& path);
void write_lip(const std::string& path, const LipSequence& lip);

}  // namespace selg

#endif  // SELG_VISUAL_IO_H_
