// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Synthetic audio-visual corpus generation: harmonic voices with smooth
// random amplitude envelopes, lip crops whose mouth aperture tracks the
// envelope, and skeletons whose wrist elevation follows a lagged low-passed
// copy of it. Mixtures are simulated at uniform random SNR with the
// missing-modality policy applied per sample.

#ifndef SELG_DATASIM_H_
#define SELG_DATASIM_H_

#include <optional>
#include <string>
#include <vector>

#include "selg/audio_codec.h"
#include "selg/visual_encoders.h"

namespace selg {

// splitmix64; used to derive independent per-sample rng streams.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = std::min(a.size(), b.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

struct MissingPolicy {
  double p_lip_missing = 0.25;
  double p_gesture_missing_given_lip = 0.20;

  void validate() const {
    if (!(p_lip_missing >= 0 && p_lip_missing < 1) ||
        !(p_gesture_missing_given_lip >= 0 && p_gesture_missing_given_lip < 1))
      throw std::invalid_argument("MissingPolicy: probabilities must be in [0,1)");
  }
};

struct SimConfig {
  int num_speakers = 2;  // 2 or 3
  double snr_low_db = -10.0;
  double snr_high_db = 10.0;
  int train_count = 2000;
  int val_count = 200;
  int test_count = 200;
  double dur_low_s = 2.0;
  double dur_high_s = 6.0;
  uint64_t seed = 1234;
  MissingPolicy missing;
  int speaker_pool_train = 40;
  int speaker_pool_val = 10;
  int speaker_pool_test = 10;
  double gesture_noise = 0.05;
  int64_t lip_size = 24;

  void validate() const {
    if (num_speakers != 2 && num_speakers != 3)
      throw std::invalid_argument("SimConfig: num_speakers must be 2 or 3");
    if (snr_low_db > snr_high_db)
      throw std::invalid_argument("SimConfig: snr_low_db > snr_high_db");
    if (dur_low_s > dur_high_s || dur_low_s <= 0)
      throw std::invalid_argument("SimConfig: bad duration range");
    missing.validate();
  }
};

struct CueSetPresence {
  bool has_lip = true;
  bool has_gesture = true;
};

// One synthesized single-speaker source with its cue streams and the ground
// truth driving signals (kept for correlation checks).
struct SourceSample {
  Waveform wave;
  PoseSequence pose;
  LipSequence lip;
  std::vector<double> envelope_frames;       // e(t) at 15 FPS frame times
  std::vector<double> gesture_drive_frames;  // low-passed lagged envelope
  double lag_s = 0.0;
};

struct SpeakerParams {
  double f0_hz = 150.0;
  int num_harmonics = 3;
  double harmonic_decay = 0.6;
  double vibrato_hz = 4.0;
  double vibrato_depth = 0.02;
};

// Deterministic speaker identity for (corpus_seed, split, index); speaker
// pools of different splits never collide by construction.
SpeakerParams make_speaker(uint64_t corpus_seed, const std::string& split, int index);

// Synthesizes one source: speech as enveloped harmonics, lip frames whose
// mouth aperture is a deterministic function of the envelope, and a skeleton
// whose wrist height follows a 100-200 ms lagged low-passed envelope copy
// plus coordinate noise.
SourceSample synth_source(const SpeakerParams& spk, int64_t num_samples,
                          double gesture_noise, int64_t lip_size,
                          std::mt19937_64* rng);

// Mean mouth-region intensity per frame; linear in the rendered aperture.
std::vector<double> measured_lip_aperture(const LipSequence& lip);

// Mean wrist height per frame.
std::vector<double> wrist_height_series(const PoseSequence& pose);

// Scales the interferer so that 10*log10(|s|^2/|g*b|^2) == snr_db and returns
// the mixture s + g*b together with g. Throws on a silent interferer.
struct MixResult {
  Waveform mixture;
  Waveform scaled_interferer;
  double scale = 1.0;
};
MixResult mix_at_snr(const Waveform& target, const Waveform& interferer,
                     double snr_db);

// Truncates all waves to the shortest length and the cue streams to
// floor(min_len / 16000 * 15) frames.
void truncate_align(std::vector<Waveform*> waves, PoseSequence* pose,
                    LipSequence* lip);

// In-memory mixture sample (the dataset contract).
struct MixtureSample {
  std::string id;
  Waveform mixture;
  Waveform target;
  std::vector<Waveform> interferers;  // scaled
  std::optional<LipSequence> lip;
  std::optional<PoseSequence> gesture;
  CueSetPresence presence;
  std::vector<double> snr_db;
  uint64_t seed = 0;
};

// Missing-modality policy: with p_lip_missing drop the lip cue, otherwise
// with p_gesture_missing_given_lip drop the gesture cue; never both.
void apply_missing(MixtureSample* sample, const MissingPolicy& policy,
                   std::mt19937_64* rng);

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string mixture_path;
  std::string target_path;
  std::vector<std::string> interferer_paths;
  std::optional<std::string> lip_path;
  std::optional<std::string> gesture_path;
  std::vector<double> snr_db;
  uint64_t seed = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

// Generates one sample (without touching the filesystem); id and rng stream
// derive from (corpus seed, split, index).
MixtureSample make_sample(const SimConfig& cfg, const std::string& split,
                          int index);

struct CorpusSummary {
  int total = 0;
  int lip_missing = 0;
  int gesture_missing = 0;
};

// Builds the full corpus under out_dir: WAV/pose/lip files per sample plus
// manifest.jsonl (entries sorted by id). Returns per-split summaries keyed
// train/val/test.
CorpusSummary build_corpus(const SimConfig& cfg, const std::string& out_dir,
                           Manifest* manifest_out = nullptr);

// Loads a sample's artifacts back from disk.
MixtureSample load_sample(const ManifestEntry& entry, const std::string& root_dir);

}  // namespace selg

#endif  // SELG_DATASIM_H_
