// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SELG_CONFIG_JSON_H_
#define SELG_CONFIG_JSON_H_

#include <json.hpp>

#include "selg/separator.h"

namespace selg {

inline void to_json(nlohmann::json& j, const CodecConfig& c) {
  j = {{"channels", c.channels}, {"kernel", c.kernel}, {"encoder_bias", c.encoder_bias}};
}
inline void from_json(const nlohmann::json& j, CodecConfig& c) {
  c.channels = j.value("channels", int64_t(256));
  c.kernel = j.value("kernel", int64_t(40));
  c.encoder_bias = j.value("encoder_bias", false);
}

inline void to_json(nlohmann::json& j, const GestureEncoderConfig& c) {
  j = {{"layers", c.layers}, {"hidden", c.hidden}, {"dropout", c.dropout}};
}
inline void from_json(const nlohmann::json& j, GestureEncoderConfig& c) {
  c.layers = j.value("layers", 5);
  c.hidden = j.value("hidden", int64_t(32));
  c.dropout = j.value("dropout", 0.3);
}

inline void to_json(nlohmann::json& j, const LipEncoderConfig& c) {
  j = {{"variant", c.variant == LipEncoderVariant::kLite ? "lite" : "faithful"}};
}
inline void from_json(const nlohmann::json& j, LipEncoderConfig& c) {
  const std::string v = j.value("variant", "lite");
  if (v == "lite") {
    c.variant = LipEncoderVariant::kLite;
  } else if (v == "faithful") {
    c.variant = LipEncoderVariant::kFaithful;
  } else {
    throw std::invalid_argument("LipEncoderConfig: unknown variant " + v);
  }
}

inline void to_json(nlohmann::json& j, const SeparatorConfig& c) {
  j = {{"embed_dim", c.embed_dim}, {"heads", c.heads},
       {"ffn_dim", c.ffn_dim},     {"attn_dropout", c.attn_dropout},
       {"dp_input", c.dp_input},   {"dp_hidden", c.dp_hidden},
       {"chunk", c.chunk},         {"repeats", c.repeats}};
}
inline void from_json(const nlohmann::json& j, SeparatorConfig& c) {
  c.embed_dim = j.value("embed_dim", int64_t(64));
  c.heads = j.value("heads", 4);
  c.ffn_dim = j.value("ffn_dim", int64_t(256));
  c.attn_dropout = j.value("attn_dropout", 0.3);
  c.dp_input = j.value("dp_input", int64_t(64));
  c.dp_hidden = j.value("dp_hidden", int64_t(128));
  c.chunk = j.value("chunk", int64_t(100));
  c.repeats = j.value("repeats", 4);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"codec", c.codec},
       {"gesture", c.gesture},
       {"lip", c.lip},
       {"separator", c.separator},
       {"fusion", fusion_name(c.fusion)},
       {"use_lip", c.use_lip},
       {"use_gesture", c.use_gesture},
       {"init_seed", c.init_seed}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.codec = j.value("codec", CodecConfig{});
  c.gesture = j.value("gesture", GestureEncoderConfig{});
  c.lip = j.value("lip", LipEncoderConfig{});
  c.separator = j.value("separator", SeparatorConfig{});
  const std::string f = j.value("fusion", "attention");
  if (f == "attention") {
    c.fusion = FusionKind::kAttention;
  } else if (f == "concatenation") {
    c.fusion = FusionKind::kConcatenation;
  } else {
    throw std::invalid_argument("ModelConfig: unknown fusion " + f);
  }
  c.use_lip = j.value("use_lip", true);
  c.use_gesture = j.value("use_gesture", true);
  c.init_seed = j.value("init_seed", uint64_t(0x5e16));
}

}  // namespace selg

#endif  // SELG_CONFIG_JSON_H_
