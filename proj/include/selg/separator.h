// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Mask estimation from the mixture embedding conditioned on visual cues.
// Attention fusion: each cue queries the mixture stream through a transformer
// cross-attention layer, the attended streams are summed, and a dual-path
// BLSTM refines the result; the stack repeats R times, with block i's output
// serving as the mixture-side keys/values of block i+1. Concatenation fusion
// (baseline): upsampled cue embeddings are concatenated with the bottlenecked
// mixture and passed through the same dual-path stack.

#ifndef SELG_SEPARATOR_H_
#define SELG_SEPARATOR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selg/audio_codec.h"
#include "selg/losses.h"
#include "selg/visual_encoders.h"

namespace selg {

struct SeparatorConfig {
  int64_t embed_dim = 64;
  int heads = 4;
  int64_t ffn_dim = 256;
  double attn_dropout = 0.3;
  int64_t dp_input = 64;
  int64_t dp_hidden = 128;
  int64_t chunk = 100;
  int repeats = 4;  // R

  void validate() const {
    if (embed_dim % heads != 0)
      throw std::invalid_argument("SeparatorConfig: embed_dim % heads != 0");
    if (chunk < 1) throw std::invalid_argument("SeparatorConfig: chunk >= 1");
    if (repeats < 1) throw std::invalid_argument("SeparatorConfig: repeats >= 1");
    if (embed_dim != dp_input)
      throw std::invalid_argument("SeparatorConfig: embed_dim must equal dp_input");
  }
};

struct CuePresence {
  bool has_lip = false;
  bool has_gesture = false;

  void validate() const {
    if (!has_lip && !has_gesture)
      throw std::invalid_argument("CuePresence: at least one cue required");
  }
};

enum class FusionKind { kConcatenation, kAttention };

inline const char* fusion_name(FusionKind f) {
  return f == FusionKind::kConcatenation ? "concatenation" : "attention";
}

// Element-wise additive fusion of the attended cue branches. An absent branch
// contributes an all-zero sequence (missing modality). Both absent is a
// contract violation.
template <typename T>
ad::VarPtr<T> fuse(const ad::VarPtr<T>& att_lip, const ad::VarPtr<T>& att_gesture) {
  if (!att_lip && !att_gesture)
    throw std::invalid_argument("fuse: both branches absent");
  if (att_lip && att_gesture) {
    if (!att_lip->value.same_shape(att_gesture->value))
      throw std::invalid_argument("fuse: branch shape mismatch");
    return ad::add(att_lip, att_gesture);
  }
  const auto& present = att_lip ? att_lip : att_gesture;
  return ad::add(present, ad::constant(Tensor<T>::zeros(present->value.shape())));
}

// Full model config; everything a checkpoint needs to rebuild the network.
struct ModelConfig {
  CodecConfig codec;
  GestureEncoderConfig gesture;
  LipEncoderConfig lip;
  SeparatorConfig separator;
  FusionKind fusion = FusionKind::kAttention;
  bool use_lip = true;
  bool use_gesture = true;
  uint64_t init_seed = 0x5e16;

  int num_cues() const { return (use_lip ? 1 : 0) + (use_gesture ? 1 : 0); }
  void validate() const {
    codec.validate();
    gesture.validate();
    separator.validate();
    if (!use_lip && !use_gesture)
      throw std::invalid_argument("ModelConfig: model must use at least one cue");
  }
};

// The extraction network: speech codec, cue encoders, separator stack.
template <typename T>
class SelgModel {
 public:
  explicit SelgModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg.init_seed);
    codec_ = AudioCodec<T>(&store_, cfg.codec, &rng);
    const auto& sep = cfg.separator;
    bottleneck_ = nn::Linear<T>(&store_, "bottleneck", cfg.codec.channels,
                                sep.embed_dim, false, &rng);
    if (cfg.use_gesture) {
      gesture_enc_ = GestureEncoder<T>(&store_, cfg.gesture, &rng);
      gesture_proj_ = nn::Linear<T>(&store_, "gesture_proj",
                                    cfg.gesture.out_dim(), sep.embed_dim, false, &rng);
    }
    if (cfg.use_lip) {
      lip_enc_ = LipEncoder<T>(&store_, cfg.lip, &rng);
      lip_proj_ = nn::Linear<T>(&store_, "lip_proj", cfg.lip.out_dim(),
                                sep.embed_dim, false, &rng);
    }
    for (int r = 0; r < sep.repeats; ++r) {
      const std::string blk = "blk" + std::to_string(r);
      if (cfg.fusion == FusionKind::kAttention) {
        if (cfg.use_lip)
          lip_attn_.emplace_back(&store_, blk + ".lip_attn", sep.embed_dim,
                                 sep.heads, sep.ffn_dim, sep.attn_dropout, &rng);
        if (cfg.use_gesture)
          gesture_attn_.emplace_back(&store_, blk + ".gesture_attn", sep.embed_dim,
                                     sep.heads, sep.ffn_dim, sep.attn_dropout, &rng);
      }
      dual_path_.emplace_back(&store_, blk + ".dp", sep.dp_input, sep.dp_hidden,
                              sep.chunk, &rng);
    }
    if (cfg.fusion == FusionKind::kConcatenation)
      concat_proj_ = nn::Linear<T>(&store_, "concat_proj",
                                   sep.embed_dim * (1 + cfg.num_cues()),
                                   sep.dp_input, false, &rng);
    mask_out_ = nn::Linear<T>(&store_, "mask_out", sep.dp_input,
                              cfg.codec.channels, true, &rng);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<T>& store() { return store_; }
  const nn::ParamStore<T>& store() const { return store_; }
  const AudioCodec<T>& codec() const { return codec_; }
  const GestureEncoder<T>& gesture_encoder() const { return gesture_enc_; }
  const LipEncoder<T>& lip_encoder() const { return lip_enc_; }

  // Learned 1x1 bottleneck from the codec channels to the separator width.
  ad::VarPtr<T> project_mixture(const ad::VarPtr<T>& x) const {
    return bottleneck_.forward(x);
  }

  // Native-rate cue embeddings (15 FPS), projected to the separator width.
  ad::VarPtr<T> embed_lip(const LipSequence& lips, const nn::Ctx& ctx) const {
    if (!cfg_.use_lip) throw std::invalid_argument("model does not use the lip cue");
    return lip_proj_.forward(lip_enc_.forward(lips, ctx));
  }
  ad::VarPtr<T> embed_gesture(const PoseSequence& poses, const nn::Ctx& ctx) const {
    if (!cfg_.use_gesture)
      throw std::invalid_argument("model does not use the gesture cue");
    return gesture_proj_.forward(gesture_enc_.forward(poses, ctx));
  }

  // Mask estimation from the latent mixture X(t) and the already-upsampled
  // cue embeddings (null pointer = absent branch, contributing zeros; with
  // every used cue absent the fused stream is all zeros, the evaluation
  // policy for unimodal models on cue-missing samples). Returns [T x N],
  // entries >= 0. attn_probs, when given, receives the per-head attention
  // matrices of the first block's first present cue (test hook).
  ad::VarPtr<T> estimate_mask(const ad::VarPtr<T>& x_latent,
                              const ad::VarPtr<T>& v_lip_up,
                              const ad::VarPtr<T>& v_gesture_up, const nn::Ctx& ctx,
                              Tensor<T>* attn_probs = nullptr) const {
    const int64_t t_frames = x_latent->value.dim(0);
    if (v_lip_up && v_lip_up->value.dim(0) != t_frames)
      throw std::invalid_argument("estimate_mask: lip stream length mismatch");
    if (v_gesture_up && v_gesture_up->value.dim(0) != t_frames)
      throw std::invalid_argument("estimate_mask: gesture stream length mismatch");

    auto stream = project_mixture(x_latent);
    if (cfg_.fusion == FusionKind::kAttention) {
      for (int r = 0; r < cfg_.separator.repeats; ++r) {
        ad::VarPtr<T> att_l, att_g;
        if (cfg_.use_lip && v_lip_up)
          att_l = lip_attn_[r].forward(v_lip_up, stream, ctx,
                                       r == 0 ? attn_probs : nullptr);
        if (cfg_.use_gesture && v_gesture_up)
          att_g = gesture_attn_[r].forward(
              v_gesture_up, stream, ctx,
              (r == 0 && !att_l) ? attn_probs : nullptr);
        auto fused = (att_l || att_g) ? fuse(att_l, att_g) : zero_stream(t_frames);
        stream = dual_path_[r].forward(fused, ctx);
      }
    } else {
      auto cat = stream;
      if (cfg_.use_lip)
        cat = ad::concat_last(cat, v_lip_up ? v_lip_up
                                            : zero_stream(t_frames));
      if (cfg_.use_gesture)
        cat = ad::concat_last(cat, v_gesture_up ? v_gesture_up
                                                : zero_stream(t_frames));
      stream = concat_proj_.forward(cat);
      for (int r = 0; r < cfg_.separator.repeats; ++r)
        stream = dual_path_[r].forward(stream, ctx);
    }
    return ad::relu(mask_out_.forward(stream));
  }

  // End-to-end: X = encode(x); s_hat = decode(X .* M, len(x)). Cue arguments
  // may be null only where the sample genuinely misses that cue; the branch
  // is then all zeros. mask_override replaces the estimated mask (test hook).
  struct ExtractResult {
    Waveform waveform;
    ad::VarPtr<T> s_hat;
    ad::VarPtr<T> v_lip_native;      // 15 FPS lip embedding (null if unused/absent)
    ad::VarPtr<T> v_gesture_native;  // 15 FPS gesture embedding
  };

  ExtractResult extract_full(const Waveform& mixture, const LipSequence* lip,
                             const PoseSequence* gesture, const nn::Ctx& ctx,
                             const Tensor<T>* mask_override = nullptr) const {
    validate_waveform(mixture, "extract");
    const bool lip_in = cfg_.use_lip && lip != nullptr;
    const bool gesture_in = cfg_.use_gesture && gesture != nullptr;
    if (lip == nullptr && gesture == nullptr)
      throw std::invalid_argument("extract: no cue provided");
    check_cue_duration(mixture, lip, gesture);

    const int64_t len = mixture.size();
    auto x = codec_.encode(ad::constant(waveform_to_tensor<T>(mixture)));
    const int64_t t_frames = x->value.dim(0);

    ExtractResult res;
    ad::VarPtr<T> vl_up, vg_up;
    if (lip_in) {
      res.v_lip_native = embed_lip(*lip, ctx);
      vl_up = upsample_to_rate(res.v_lip_native, t_frames);
    }
    if (gesture_in) {
      res.v_gesture_native = embed_gesture(*gesture, ctx);
      vg_up = upsample_to_rate(res.v_gesture_native, t_frames);
    }
    ad::VarPtr<T> mask;
    if (mask_override) {
      mask = ad::constant(*mask_override);
    } else {
      mask = estimate_mask(x, vl_up, vg_up, ctx);
    }
    res.s_hat = codec_.decode(ad::mul(x, mask), len);
    res.waveform = tensor_to_waveform(res.s_hat->value);
    return res;
  }

  Waveform extract(const Waveform& mixture, const LipSequence* lip,
                   const PoseSequence* gesture,
                   const Tensor<T>* mask_override = nullptr) const {
    ad::NoGradGuard guard;
    nn::Ctx ctx;  // eval mode
    return extract_full(mixture, lip, gesture, ctx, mask_override).waveform;
  }

  ad::VarPtr<T> zero_stream(int64_t t_frames) const {
    return ad::constant(Tensor<T>::zeros({t_frames, cfg_.separator.embed_dim}));
  }

 private:
  void check_cue_duration(const Waveform& w, const LipSequence* lip,
                          const PoseSequence* gesture) const {
    const double audio_s = w.duration_s();
    const double tol = 1.0 / kVisualFps + 1e-9;
    if (lip) {
      const double cue_s = static_cast<double>(lip->num_frames()) / kVisualFps;
      if (audio_s - cue_s > tol)
        throw std::invalid_argument("extract: lip cue shorter than audio");
    }
    if (gesture) {
      const double cue_s = static_cast<double>(gesture->num_frames()) / kVisualFps;
      if (audio_s - cue_s > tol)
        throw std::invalid_argument("extract: gesture cue shorter than audio");
    }
  }

  ModelConfig cfg_;
  nn::ParamStore<T> store_;
  AudioCodec<T> codec_;
  GestureEncoder<T> gesture_enc_;
  LipEncoder<T> lip_enc_;
  nn::Linear<T> bottleneck_, gesture_proj_, lip_proj_, concat_proj_;
  std::vector<nn::CrossAttention<T>> lip_attn_, gesture_attn_;
  std::vector<nn::DualPathBlock<T>> dual_path_;
  nn::Linear<T> mask_out_;
};

}  // namespace selg

#endif  // SELG_SEPARATOR_H_
