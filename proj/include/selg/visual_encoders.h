// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Visual cue streams and their encoders: a BLSTM over 3D upper-body joint
// trajectories, a convolutional lip-image encoder, and the upsampler aligning
// 15 FPS cue embeddings with the audio frame rate.

#ifndef SELG_VISUAL_ENCODERS_H_
#define SELG_VISUAL_ENCODERS_H_

#include <array>
#include <string>

#include "selg/audio_codec.h"
#include "selg/nn.h"

namespace selg {

inline constexpr int kNumJoints = 10;
inline const std::array<const char*, kNumJoints> kJointNames = {
    "head",       "neck",       "nose",    "spine",   "l_shoulder",
    "r_shoulder", "l_elbow",    "r_elbow", "l_wrist", "r_wrist"};
inline constexpr int kJointSpine = 3;
inline constexpr int kJointLShoulder = 4;
inline constexpr int kJointRShoulder = 5;
inline constexpr int kJointLElbow = 6;
inline constexpr int kJointRElbow = 7;
inline constexpr int kJointLWrist = 8;
inline constexpr int kJointRWrist = 9;

// 15 FPS stream of spine-centred 3D joint coordinates, [F x 10 x 3].
struct PoseSequence {
  Tensor<float> frames;
  int fps = kVisualFps;

  int64_t num_frames() const { return frames.numel() == 0 ? 0 : frames.dim(0); }
};

inline void validate_pose(const PoseSequence& p) {
  if (p.fps != kVisualFps) throw std::invalid_argument("PoseSequence: fps must be 15");
  if (p.frames.ndim() != 3 || p.frames.dim(1) != kNumJoints || p.frames.dim(2) != 3)
    throw std::invalid_argument("PoseSequence: need [F x 10 x 3]");
  if (!p.frames.all_finite())
    throw std::invalid_argument("PoseSequence: non-finite values");
}

// 15 FPS stream of grayscale mouth-region crops in [0,1], [F x H x W].
struct LipSequence {
  Tensor<float> frames;
  int fps = kVisualFps;

  int64_t num_frames() const { return frames.numel() == 0 ? 0 : frames.dim(0); }
  int64_t height() const { return frames.dim(1); }
  int64_t width() const { return frames.dim(2); }
};

inline void validate_lip(const LipSequence& l) {
  if (l.fps != kVisualFps) throw std::invalid_argument("LipSequence: fps must be 15");
  if (l.frames.ndim() != 3) throw std::invalid_argument("LipSequence: need [F x H x W]");
  for (int64_t i = 0; i < l.frames.numel(); ++i) {
    const float v = l.frames[i];
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument("LipSequence: intensity outside [0,1]");
  }
}

struct GestureEncoderConfig {
  int layers = 5;      // R_g
  int64_t hidden = 32;
  double dropout = 0.3;

  int64_t out_dim() const { return 2 * hidden; }
  void validate() const {
    if (layers < 1) throw std::invalid_argument("GestureEncoderConfig: layers >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw std::invalid_argument("GestureEncoderConfig: dropout in [0,1)");
  }
};

enum class LipEncoderVariant { kLite, kFaithful };

struct LipEncoderConfig {
  LipEncoderVariant variant = LipEncoderVariant::kLite;
  // Lite stack: 3D conv (temporal kernel 5) -> 4 residual blocks -> spatial
  // pool -> 2 temporal conv blocks at width 64.
  // Faithful stack: 3D conv -> 18-layer residual network -> spatial pool ->
  // 5 temporal conv blocks at width 512.
  int64_t out_dim() const {
    return variant == LipEncoderVariant::kLite ? 64 : 512;
  }
  int temporal_blocks() const {
    return variant == LipEncoderVariant::kLite ? 2 : 5;
  }
};

// Pose normalization: spine re-centred per frame, scaled by the sequence's
// mean shoulder span. Returns [F x 30].
template <typename T>
Tensor<T> normalize_pose(const PoseSequence& p) {
  const int64_t f = p.num_frames();
  Tensor<T> out({f, kNumJoints * 3});
  double span_sum = 0.0;
  for (int64_t t = 0; t < f; ++t) {
    const float* fr = p.frames.data() + t * kNumJoints * 3;
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = fr[kJointLShoulder * 3 + k] - fr[kJointRShoulder * 3 + k];
      d2 += d * d;
    }
    span_sum += std::sqrt(d2);
  }
  const double scale = span_sum / static_cast<double>(f);
  const double inv = scale > 0.0 ? 1.0 / scale : 1.0;
  for (int64_t t = 0; t < f; ++t) {
    const float* fr = p.frames.data() + t * kNumJoints * 3;
    T* o = out.data() + t * kNumJoints * 3;
    for (int j = 0; j < kNumJoints; ++j)
      for (int k = 0; k < 3; ++k)
        o[j * 3 + k] = static_cast<T>((fr[j * 3 + k] - fr[kJointSpine * 3 + k]) * inv);
  }
  return out;
}

// R_g-layer bidirectional LSTM over joint trajectories; emits the full
// output sequence [F x 2*hidden], frame-synchronous with the input.
template <typename T>
class GestureEncoder {
 public:
  GestureEncoder() = default;
  GestureEncoder(nn::ParamStore<T>* store, const GestureEncoderConfig& cfg,
                 std::mt19937_64* rng)
      : cfg_(cfg) {
    cfg_.validate();
    stack_ = nn::BlstmStack<T>(store, "gesture", kNumJoints * 3, cfg.hidden,
                               cfg.layers, cfg.dropout, rng);
  }

  const GestureEncoderConfig& config() const { return cfg_; }

  ad::VarPtr<T> forward(const PoseSequence& poses, const nn::Ctx& ctx) const {
    validate_pose(poses);
    const int64_t f = poses.num_frames();
    if (f < 1) throw std::invalid_argument("encode_gesture: empty sequence");
    auto x = ad::constant(normalize_pose<T>(poses).reshaped({f, 1, kNumJoints * 3}));
    auto h = stack_.forward(x, ctx);
    return ad::reshape(h, {f, cfg_.out_dim()});
  }

  // Graph entry point for gradient checks: takes an already-normalized
  // [F x 1 x 30] variable.
  ad::VarPtr<T> forward_var(const ad::VarPtr<T>& x, const nn::Ctx& ctx) const {
    const int64_t f = x->value.dim(0);
    return ad::reshape(stack_.forward(x, ctx), {f, cfg_.out_dim()});
  }

 private:
  GestureEncoderConfig cfg_;
  nn::BlstmStack<T> stack_;
};

// Lip-image encoder: spatio-temporal convolution front end, residual CNN,
// spatial pooling, then temporal convolution blocks at the embedding width.
template <typename T>
class LipEncoder {
 public:
  LipEncoder() = default;
  LipEncoder(nn::ParamStore<T>* store, const LipEncoderConfig& cfg,
             std::mt19937_64* rng)
      : cfg_(cfg) {
    const std::string p = "lip";
    if (cfg.variant == LipEncoderVariant::kLite) {
      front_ = nn::ConvCL<T>(store, p + ".conv3d", 1, 8, 5, 3, 3, 2, 2, 1, 1, rng);
      res_.emplace_back(store, p + ".res0", 8, 16, 2, rng);
      res_.emplace_back(store, p + ".res1", 16, 16, 1, rng);
      res_.emplace_back(store, p + ".res2", 16, 32, 2, rng);
      res_.emplace_back(store, p + ".res3", 32, 32, 1, rng);
      proj_ = nn::Linear<T>(store, p + ".proj", 32, cfg.out_dim(), true, rng);
    } else {
      front_ = nn::ConvCL<T>(store, p + ".conv3d", 1, 64, 5, 7, 7, 2, 2, 3, 3, rng);
      const int64_t widths[4] = {64, 128, 256, 512};
      int64_t c_in = 64;
      for (int stage = 0; stage < 4; ++stage) {
        const int64_t c_out = widths[stage];
        const int64_t stride = stage == 0 ? 1 : 2;
        res_.emplace_back(store, p + ".s" + std::to_string(stage) + "b0", c_in,
                          c_out, stride, rng);
        res_.emplace_back(store, p + ".s" + std::to_string(stage) + "b1", c_out,
                          c_out, 1, rng);
        c_in = c_out;
      }
      proj_ = nn::Linear<T>(store, p + ".proj", 512, cfg.out_dim(), true, rng);
    }
    for (int b = 0; b < cfg.temporal_blocks(); ++b)
      tcn_.emplace_back(store, p + ".tcn" + std::to_string(b), cfg.out_dim(), 3, rng);
  }

  const LipEncoderConfig& config() const { return cfg_; }
  int num_res_blocks() const { return static_cast<int>(res_.size()); }
  int num_temporal_blocks() const { return static_cast<int>(tcn_.size()); }

  ad::VarPtr<T> forward(const LipSequence& lips, const nn::Ctx& ctx) const {
    validate_lip(lips);
    const int64_t f = lips.num_frames();
    if (f < 1) throw std::invalid_argument("encode_lip: empty sequence");
    Tensor<T> img({f, lips.height(), lips.width(), 1});
    for (int64_t i = 0; i < img.numel(); ++i)
      img[i] = static_cast<T>(lips.frames[i]);
    return forward_var(ad::constant(std::move(img)), ctx);
  }

  // x: [F x H x W x 1] channels-last video variable.
  ad::VarPtr<T> forward_var(const ad::VarPtr<T>& x, const nn::Ctx& ctx) const {
    auto h = ad::relu(front_.forward(x));
    for (const auto& block : res_) h = block.forward(h);
    // [F x OH x OW x C] -> [F x OH*OW x C] -> spatial mean -> [F x C]
    const int64_t f = h->value.dim(0);
    const int64_t hw = h->value.dim(1) * h->value.dim(2);
    auto pooled = ad::mean_middle(ad::reshape(h, {f, hw, h->value.dim(3)}));
    auto emb = ad::relu(proj_.forward(pooled));
    for (const auto& block : tcn_) emb = block.forward(emb);
    (void)ctx;
    return emb;
  }

 private:
  LipEncoderConfig cfg_;
  nn::ConvCL<T> front_;
  std::vector<nn::ResBlockCL<T>> res_;
  nn::Linear<T> proj_;
  std::vector<nn::TemporalConvBlock<T>> tcn_;
};

// Nearest-neighbour upsampling of an embedding sequence to the audio frame
// count; frame t maps to source frame floor(t*F/target).
template <typename T>
ad::VarPtr<T> upsample_to_rate(const ad::VarPtr<T>& emb, int64_t target_frames) {
  if (emb->value.ndim() != 2) throw std::invalid_argument("upsample_to_rate: need 2D");
  const int64_t f = emb->value.dim(0);
  if (f < 1) throw std::invalid_argument("upsample_to_rate: empty sequence");
  if (target_frames < f)
    throw std::invalid_argument("upsample_to_rate: downsampling not supported");
  if (target_frames == f) return emb;
  return ad::upsample_rows(emb, target_frames);
}

}  // namespace selg

#endif  // SELG_VISUAL_ENCODERS_H_
