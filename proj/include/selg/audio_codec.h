// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Time-domain speech codec: learnable framed 1-D convolution encoder with
// ReLU producing the latent frame sequence X(t), and a linear decoder with
// overlap-add reconstruction.

#ifndef SELG_AUDIO_CODEC_H_
#define SELG_AUDIO_CODEC_H_

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "selg/nn.h"

namespace selg {

inline constexpr int kSampleRate = 16000;
inline constexpr int kVisualFps = 15;

// Mono 16 kHz time-domain signal, float32 samples nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  double duration_s() const { return static_cast<double>(samples.size()) / rate; }
};

inline void validate_waveform(const Waveform& w, const char* what) {
  if (w.rate != kSampleRate)
    throw std::invalid_argument(std::string(what) + ": rate must be 16000");
  for (float v : w.samples)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(what) + ": non-finite sample");
}

struct CodecConfig {
  int64_t channels = 256;  // N
  int64_t kernel = 40;     // L (stride is L/2)
  bool encoder_bias = false;

  int64_t hop() const { return kernel / 2; }
  void validate() const {
    if (kernel <= 0 || kernel % 2 != 0)
      throw std::invalid_argument("CodecConfig: kernel must be positive and even");
    if (channels < 1) throw std::invalid_argument("CodecConfig: channels >= 1");
  }
};

// T = floor((len - L) / (L/2)) + 1
inline int64_t codec_frame_count(int64_t len, const CodecConfig& cfg) {
  if (len < cfg.kernel)
    throw std::invalid_argument("codec_frame_count: input shorter than kernel");
  return (len - cfg.kernel) / cfg.hop() + 1;
}

// Samples covered by T frames: (T-1)*hop + L.
inline int64_t codec_cover_len(int64_t frames, const CodecConfig& cfg) {
  return (frames - 1) * cfg.hop() + cfg.kernel;
}

template <typename T>
Tensor<T> waveform_to_tensor(const Waveform& w) {
  Tensor<T> t({w.size()});
  for (int64_t i = 0; i < w.size(); ++i) t[i] = static_cast<T>(w.samples[i]);
  return t;
}

template <typename T>
Waveform tensor_to_waveform(const Tensor<T>& t) {
  Waveform w;
  w.samples.resize(t.numel());
  for (int64_t i = 0; i < t.numel(); ++i) w.samples[i] = static_cast<float>(t[i]);
  return w;
}

// Spec operation: out[i] = sum_t frames[t, i - t*stride]; output has the
// natural length (T-1)*stride + L.
template <typename T>
Tensor<T> overlap_add_frames(const Tensor<T>& frames, int64_t stride) {
  if (frames.ndim() != 2) throw std::invalid_argument("overlap_add_frames: need 2D");
  if (stride <= 0) throw std::invalid_argument("overlap_add_frames: stride must be > 0");
  const int64_t num = frames.dim(0), flen = frames.dim(1);
  if (stride > flen)
    throw std::invalid_argument("overlap_add_frames: stride exceeds frame length");
  const int64_t out_len = (num - 1) * stride + flen;
  Tensor<T> out({out_len});
  kernels::overlap_add(frames.data(), out.data(), num, flen, stride, out_len, false);
  return out;
}

template <typename T>
class AudioCodec {
 public:
  AudioCodec() = default;
  AudioCodec(nn::ParamStore<T>* store, const CodecConfig& cfg, std::mt19937_64* rng)
      : cfg_(cfg) {
    cfg_.validate();
    enc_w_ = store->add("codec.enc.w",
                        nn::xavier_uniform<T>(cfg.kernel, cfg.channels, rng));
    if (cfg.encoder_bias)
      enc_b_ = store->add("codec.enc.b", Tensor<T>::zeros({cfg.channels}));
    dec_w_ = store->add("codec.dec.w",
                        nn::xavier_uniform<T>(cfg.channels, cfg.kernel, rng));
  }

  const CodecConfig& config() const { return cfg_; }

  // wave: [len] -> X(t): [T x N], entries >= 0.
  ad::VarPtr<T> encode(const ad::VarPtr<T>& wave) const {
    return ad::relu(encode_linear(wave));
  }

  // Framing + conv without the ReLU; used by reconstruction tests.
  ad::VarPtr<T> encode_linear(const ad::VarPtr<T>& wave) const {
    if (wave->value.ndim() != 1)
      throw std::invalid_argument("encode_speech: need 1D waveform");
    if (wave->value.numel() < cfg_.kernel)
      throw std::invalid_argument("encode_speech: input shorter than kernel");
    if (!wave->value.all_finite())
      throw std::invalid_argument("encode_speech: non-finite samples");
    auto frames = ad::frame_signal(wave, cfg_.kernel, cfg_.hop());
    return enc_b_ ? ad::linear(frames, enc_w_, enc_b_) : ad::linear(frames, enc_w_);
  }

  // masked: [T x N] -> waveform [target_len] (overlap-add tail trimmed or
  // zero-padded to target_len).
  ad::VarPtr<T> decode(const ad::VarPtr<T>& masked, int64_t target_len) const {
    if (masked->value.ndim() != 2 || masked->value.dim(1) != cfg_.channels)
      throw std::invalid_argument("decode_speech: bad embedding shape");
    if (!masked->value.all_finite())
      throw std::invalid_argument("decode_speech: non-finite embedding");
    const int64_t natural = codec_cover_len(masked->value.dim(0), cfg_);
    if (target_len < natural - cfg_.kernel || target_len > natural + cfg_.kernel)
      throw std::invalid_argument(
          "decode_speech: target_len inconsistent with frame count");
    auto frames = ad::linear(masked, dec_w_);
    return ad::overlap_add(frames, cfg_.hop(), target_len);
  }

  ad::VarPtr<T> enc_w() const { return enc_w_; }
  ad::VarPtr<T> dec_w() const { return dec_w_; }

 private:
  CodecConfig cfg_;
  ad::VarPtr<T> enc_w_, enc_b_, dec_w_;
};

}  // namespace selg

#endif  // SELG_AUDIO_CODEC_H_
