// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Single-file model checkpoint: JSON header (model config + tensor directory
// + optional training state) followed by named float32 tensors, little
// endian. Loading validates config compatibility.

#ifndef SELG_CHECKPOINT_H_
#define SELG_CHECKPOINT_H_

#include <map>
#include <string>

#include <json.hpp>

#include "selg/separator.h"

namespace selg {

struct CheckpointData {
  ModelConfig config;
  std::map<std::string, Tensor<float>> tensors;
  nlohmann::json extra;  // training-state blob, free-form
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const nn::ParamStore<float>& store,
                     const nlohmann::json& extra = nlohmann::json::object());

CheckpointData read_checkpoint(const std::string& path);

// Copies tensors into the model's parameter store. Throws std::invalid_argument
// when the checkpoint's config or tensor set does not match the model.
void load_into(SelgModel<float>* model, const CheckpointData& ckpt);

}  // namespace selg

#endif  // SELG_CHECKPOINT_H_
