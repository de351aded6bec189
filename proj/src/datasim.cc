// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "selg/datasim.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "selg/visual_io.h"
#include "selg/wav_io.h"

namespace selg {

namespace {

namespace fs = std::filesystem;

// Smooth random envelope in (0,1): squashed sum of slow sinusoids.
struct Envelope {
  double a[3], f[3], p[3];

  static Envelope draw(std::mt19937_64* rng) {
    Envelope e;
    std::uniform_real_distribution<double> fa(0.5, 1.0), ff(0.4, 2.2), fp(0.0, 2 * M_PI);
    for (int k = 0; k < 3; ++k) {
      e.a[k] = fa(*rng);
      e.f[k] = ff(*rng);
      e.p[k] = fp(*rng);
    }
    return e;
  }

  double operator()(double t) const {
    double z = 0;
    for (int k = 0; k < 3; ++k) z += a[k] * std::sin(2 * M_PI * f[k] * t + p[k]);
    return 0.5 * (1.0 + std::tanh(1.8 * z));
  }
};

// Anti-aliased filled ellipse: returns per-pixel coverage in [0,1].
double ellipse_coverage(double px, double py, double cx, double cy, double rx,
                        double ry) {
  if (rx <= 0 || ry <= 0) return 0.0;
  const double dx = (px - cx) / rx, dy = (py - cy) / ry;
  const double d = std::sqrt(dx * dx + dy * dy);
  // ~1 px wide soft edge in normalized units
  const double edge = 0.5 / std::min(rx, ry);
  if (d <= 1.0 - edge) return 1.0;
  if (d >= 1.0 + edge) return 0.0;
  return (1.0 + edge - d) / (2.0 * edge);
}

constexpr int64_t kMouthRow0 = 14, kMouthRow1 = 23;
constexpr double kMouthCy = 18.0, kMouthRx = 6.0, kMouthMaxRy = 4.0;

}  // namespace

SpeakerParams make_speaker(uint64_t corpus_seed, const std::string& split, int index) {
  uint64_t h = mix64(corpus_seed, 0x5eedULL);
  for (char c : split) h = mix64(h, static_cast<uint64_t>(c));
  h = mix64(h, static_cast<uint64_t>(index));
  std::mt19937_64 rng(h);
  std::uniform_real_distribution<double> f0(90.0, 320.0), decay(0.45, 0.8),
      vib(3.0, 6.0), vibd(0.01, 0.04);
  std::uniform_int_distribution<int> nh(2, 4);
  SpeakerParams p;
  p.f0_hz = f0(rng);
  p.num_harmonics = nh(rng);
  p.harmonic_decay = decay(rng);
  p.vibrato_hz = vib(rng);
  p.vibrato_depth = vibd(rng);
  return p;
}

SourceSample synth_source(const SpeakerParams& spk, int64_t num_samples,
                          double gesture_noise, int64_t lip_size,
                          std::mt19937_64* rng) {
  SourceSample out;
  const auto env = Envelope::draw(rng);
  std::uniform_real_distribution<double> phase_d(0.0, 2 * M_PI), lag_d(0.1, 0.2);

  // Speech: enveloped harmonic stack with slow vibrato, integrated phase.
  std::vector<double> psi(spk.num_harmonics);
  for (auto& v : psi) v = phase_d(*rng);
  const double vib_phase = phase_d(*rng);
  out.wave.samples.resize(num_samples);
  double phi = 0.0;
  double peak = 1e-9;
  std::vector<double> raw(num_samples);
  for (int64_t i = 0; i < num_samples; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f0 = spk.f0_hz *
        (1.0 + spk.vibrato_depth * std::sin(2 * M_PI * spk.vibrato_hz * t + vib_phase));
    phi += 2 * M_PI * f0 / kSampleRate;
    double acc = 0.0;
    double amp = 1.0;
    for (int h = 0; h < spk.num_harmonics; ++h) {
      acc += amp * std::sin((h + 1) * phi + psi[h]);
      amp *= spk.harmonic_decay;
    }
    raw[i] = env(t) * acc;
    peak = std::max(peak, std::abs(raw[i]));
  }
  const double gain = 0.6 / peak;
  for (int64_t i = 0; i < num_samples; ++i)
    out.wave.samples[i] = static_cast<float>(raw[i] * gain);

  // Cue streams at 15 FPS.
  const int64_t frames = num_samples * kVisualFps / kSampleRate;
  out.envelope_frames.resize(frames);
  for (int64_t f = 0; f < frames; ++f)
    out.envelope_frames[f] = env(static_cast<double>(f) / kVisualFps);

  // Lip: dark background, face disc, mouth ellipse whose vertical aperture is
  // a deterministic (linear) function of the envelope.
  out.lip.frames = Tensor<float>({frames, lip_size, lip_size});
  const double scale = static_cast<double>(lip_size) / 24.0;
  for (int64_t f = 0; f < frames; ++f) {
    const double ap = out.envelope_frames[f];
    const double ry = (0.6 + (kMouthMaxRy - 0.6) * ap) * scale;
    float* img = out.lip.frames.data() + f * lip_size * lip_size;
    for (int64_t r = 0; r < lip_size; ++r) {
      for (int64_t c = 0; c < lip_size; ++c) {
        double v = 0.08;
        v += 0.3 * ellipse_coverage(c, r, 12.0 * scale, 11.0 * scale, 10.0 * scale,
                                    11.0 * scale);
        v += 0.55 * ellipse_coverage(c, r, 12.0 * scale, kMouthCy * scale,
                                     kMouthRx * scale, ry);
        img[r * lip_size + c] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
      }
    }
  }

  // Gesture: fixed skeleton; wrists (and half-amplitude elbows) rise with a
  // lagged, low-passed copy of the envelope; i.i.d. coordinate noise.
  out.lag_s = lag_d(*rng);
  out.gesture_drive_frames.resize(frames);
  double lp = env(-out.lag_s);
  const double alpha = 1.0 - std::exp(-2.0 * M_PI * 3.0 / kVisualFps);
  for (int64_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / kVisualFps;
    lp += alpha * (env(t - out.lag_s) - lp);
    out.gesture_drive_frames[f] = lp;
  }
  static const double base[kNumJoints][3] = {
      {0.0, 0.62, 0.0},    {0.0, 0.45, 0.0},   {0.0, 0.55, 0.08},
      {0.0, 0.0, 0.0},     {-0.18, 0.42, 0.0}, {0.18, 0.42, 0.0},
      {-0.24, 0.20, 0.02}, {0.24, 0.20, 0.02}, {-0.26, 0.02, 0.05},
      {0.26, 0.02, 0.05}};
  out.pose.frames = Tensor<float>({frames, kNumJoints, 3});
  std::normal_distribution<double> noise(0.0, gesture_noise);
  for (int64_t f = 0; f < frames; ++f) {
    const double lift = 0.5 * out.gesture_drive_frames[f];
    for (int j = 0; j < kNumJoints; ++j) {
      double x = base[j][0], y = base[j][1], z = base[j][2];
      if (j == kJointLWrist || j == kJointRWrist) y += lift;
      if (j == kJointLElbow || j == kJointRElbow) y += 0.5 * lift;
      out.pose.frames[(f * kNumJoints + j) * 3 + 0] = static_cast<float>(x + noise(*rng));
      out.pose.frames[(f * kNumJoints + j) * 3 + 1] = static_cast<float>(y + noise(*rng));
      out.pose.frames[(f * kNumJoints + j) * 3 + 2] = static_cast<float>(z + noise(*rng));
    }
  }
  return out;
}

std::vector<double> measured_lip_aperture(const LipSequence& lip) {
  const int64_t f = lip.num_frames(), h = lip.height(), w = lip.width();
  const int64_t r0 = kMouthRow0 * h / 24, r1 = std::min(kMouthRow1 * h / 24, h);
  std::vector<double> out(f, 0.0);
  for (int64_t i = 0; i < f; ++i) {
    double acc = 0.0;
    for (int64_t r = r0; r < r1; ++r)
      for (int64_t c = 0; c < w; ++c) acc += lip.frames[(i * h + r) * w + c];
    out[i] = acc / static_cast<double>((r1 - r0) * w);
  }
  return out;
}

std::vector<double> wrist_height_series(const PoseSequence& pose) {
  const int64_t f = pose.num_frames();
  std::vector<double> out(f);
  for (int64_t i = 0; i < f; ++i) {
    const double l = pose.frames[(i * kNumJoints + kJointLWrist) * 3 + 1];
    const double r = pose.frames[(i * kNumJoints + kJointRWrist) * 3 + 1];
    out[i] = 0.5 * (l + r);
  }
  return out;
}

MixResult mix_at_snr(const Waveform& target, const Waveform& interferer,
                     double snr_db) {
  if (target.size() != interferer.size())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  double ps = 0, pb = 0;
  for (int64_t i = 0; i < target.size(); ++i) {
    ps += static_cast<double>(target.samples[i]) * target.samples[i];
    pb += static_cast<double>(interferer.samples[i]) * interferer.samples[i];
  }
  if (pb == 0.0) throw std::invalid_argument("mix_at_snr: silent interferer");
  if (ps == 0.0) throw std::invalid_argument("mix_at_snr: silent target");
  // 10*log10(ps / (g^2 pb)) == snr_db
  const double g = std::sqrt(ps / pb) * std::pow(10.0, -snr_db / 20.0);
  MixResult out;
  out.scale = g;
  out.scaled_interferer.samples.resize(target.size());
  out.mixture.samples.resize(target.size());
  for (int64_t i = 0; i < target.size(); ++i) {
    const float scaled = static_cast<float>(g * interferer.samples[i]);
    out.scaled_interferer.samples[i] = scaled;
    out.mixture.samples[i] = target.samples[i] + scaled;
  }
  return out;
}

void truncate_align(std::vector<Waveform*> waves, PoseSequence* pose,
                    LipSequence* lip) {
  if (waves.size() < 2) throw std::invalid_argument("truncate_align: need >= 2 waves");
  int64_t min_len = waves[0]->size();
  for (const auto* w : waves) min_len = std::min(min_len, w->size());
  for (auto* w : waves) w->samples.resize(min_len);
  const int64_t frames = min_len * kVisualFps / kSampleRate;
  if (pose && pose->num_frames() > frames) {
    Tensor<float> t({frames, kNumJoints, 3});
    std::copy_n(pose->frames.data(), t.numel(), t.data());
    pose->frames = std::move(t);
  }
  if (lip && lip->num_frames() > frames) {
    Tensor<float> t({frames, lip->height(), lip->width()});
    std::copy_n(lip->frames.data(), t.numel(), t.data());
    lip->frames = std::move(t);
  }
}

void apply_missing(MixtureSample* sample, const MissingPolicy& policy,
                   std::mt19937_64* rng) {
  policy.validate();
  if (!sample->lip || !sample->gesture)
    throw std::invalid_argument("apply_missing: sample must start with both cues");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(*rng) < policy.p_lip_missing) {
    sample->lip.reset();
    sample->presence.has_lip = false;
  } else if (u(*rng) < policy.p_gesture_missing_given_lip) {
    sample->gesture.reset();
    sample->presence.has_gesture = false;
  }
}

MixtureSample make_sample(const SimConfig& cfg, const std::string& split,
                          int index) {
  cfg.validate();
  uint64_t h = mix64(cfg.seed, 0xa11ceULL);
  for (char c : split) h = mix64(h, static_cast<uint64_t>(c));
  h = mix64(h, static_cast<uint64_t>(index));
  std::mt19937_64 rng(h);

  const int pool = split == "train"  ? cfg.speaker_pool_train
                   : split == "val"  ? cfg.speaker_pool_val
                                     : cfg.speaker_pool_test;
  std::uniform_int_distribution<int> spk_d(0, pool - 1);
  const int num_interferers = cfg.num_speakers - 1;
  std::vector<int> spk_ids;
  while (static_cast<int>(spk_ids.size()) < num_interferers + 1) {
    const int s = spk_d(rng);
    if (std::find(spk_ids.begin(), spk_ids.end(), s) == spk_ids.end())
      spk_ids.push_back(s);
  }

  // Durations quantized to 0.2 s so audio length and 15 FPS frames align.
  std::uniform_int_distribution<int64_t> dur_d(
      static_cast<int64_t>(std::llround(cfg.dur_low_s * 5)),
      static_cast<int64_t>(std::llround(cfg.dur_high_s * 5)));
  auto draw_len = [&] { return dur_d(rng) * (kSampleRate / 5); };

  auto target_src = synth_source(make_speaker(cfg.seed, split, spk_ids[0]),
                                 draw_len(), cfg.gesture_noise, cfg.lip_size, &rng);
  std::vector<Waveform> interferer_waves;
  for (int k = 0; k < num_interferers; ++k) {
    auto src = synth_source(make_speaker(cfg.seed, split, spk_ids[k + 1]),
                            draw_len(), cfg.gesture_noise, cfg.lip_size, &rng);
    interferer_waves.push_back(std::move(src.wave));
  }

  std::vector<Waveform*> all = {&target_src.wave};
  for (auto& w : interferer_waves) all.push_back(&w);
  truncate_align(all, &target_src.pose, &target_src.lip);

  MixtureSample sample;
  char idbuf[64];
  std::snprintf(idbuf, sizeof idbuf, "%s-%06d", split.c_str(), index);
  sample.id = idbuf;
  sample.seed = h;
  sample.target = target_src.wave;
  sample.mixture = sample.target;
  std::uniform_real_distribution<double> snr_d(cfg.snr_low_db, cfg.snr_high_db);
  for (auto& b : interferer_waves) {
    const double snr = snr_d(rng);
    auto mixed = mix_at_snr(sample.target, b, snr);
    sample.snr_db.push_back(snr);
    sample.interferers.push_back(std::move(mixed.scaled_interferer));
  }
  for (int64_t i = 0; i < sample.mixture.size(); ++i) {
    float acc = sample.target.samples[i];
    for (const auto& b : sample.interferers) acc += b.samples[i];
    sample.mixture.samples[i] = acc;
  }
  sample.lip = std::move(target_src.lip);
  sample.gesture = std::move(target_src.pose);
  sample.presence = CueSetPresence{};
  apply_missing(&sample, cfg.missing, &rng);
  return sample;
}

namespace {

nlohmann::json entry_to_json(const ManifestEntry& e) {
  nlohmann::json j;
  j["id"] = e.id;
  j["split"] = e.split;
  j["mixture_path"] = e.mixture_path;
  j["target_path"] = e.target_path;
  j["interferer_paths"] = e.interferer_paths;
  j["lip_path"] = e.lip_path ? nlohmann::json(*e.lip_path) : nlohmann::json(nullptr);
  j["gesture_path"] =
      e.gesture_path ? nlohmann::json(*e.gesture_path) : nlohmann::json(nullptr);
  j["snr_db"] = e.snr_db;
  j["seed"] = e.seed;
  return j;
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.split = j.at("split").get<std::string>();
  e.mixture_path = j.at("mixture_path").get<std::string>();
  e.target_path = j.at("target_path").get<std::string>();
  e.interferer_paths = j.at("interferer_paths").get<std::vector<std::string>>();
  if (!j.at("lip_path").is_null()) e.lip_path = j.at("lip_path").get<std::string>();
  if (!j.at("gesture_path").is_null())
    e.gesture_path = j.at("gesture_path").get<std::string>();
  e.snr_db = j.at("snr_db").get<std::vector<double>>();
  e.seed = j.at("seed").get<uint64_t>();
  return e;
}

}  // namespace

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path);
  Manifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    m.entries.push_back(entry_from_json(nlohmann::json::parse(line)));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& e : manifest.entries) os << entry_to_json(e).dump() << "\n";
  if (!os) throw std::runtime_error("write_manifest: write failed: " + path);
}

CorpusSummary build_corpus(const SimConfig& cfg, const std::string& out_dir,
                           Manifest* manifest_out) {
  cfg.validate();
  CorpusSummary summary;
  Manifest manifest;
  const std::vector<std::pair<std::string, int>> splits = {
      {"train", cfg.train_count}, {"val", cfg.val_count}, {"test", cfg.test_count}};
  for (const auto& [split, count] : splits) {
    const fs::path dir = fs::path(out_dir) / split;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
      throw std::runtime_error("build_corpus: cannot create " + dir.string() + ": " +
                               ec.message());
    for (int i = 0; i < count; ++i) {
      auto sample = make_sample(cfg, split, i);
      ManifestEntry e;
      e.id = sample.id;
      e.split = split;
      e.seed = sample.seed;
      e.snr_db = sample.snr_db;
      const std::string rel = split + "/" + sample.id;
      e.mixture_path = rel + ".mix.wav";
      e.target_path = rel + ".tgt.wav";
      write_wav(out_dir + "/" + e.mixture_path, sample.mixture);
      write_wav(out_dir + "/" + e.target_path, sample.target);
      for (size_t k = 0; k < sample.interferers.size(); ++k) {
        const std::string p = rel + ".int" + std::to_string(k) + ".wav";
        write_wav(out_dir + "/" + p, sample.interferers[k]);
        e.interferer_paths.push_back(p);
      }
      if (sample.lip) {
        e.lip_path = rel + ".lip.bin";
        write_lip(out_dir + "/" + *e.lip_path, *sample.lip);
      } else {
        ++summary.lip_missing;
      }
      if (sample.gesture) {
        e.gesture_path = rel + ".pose.json";
        write_pose(out_dir + "/" + *e.gesture_path, *sample.gesture);
      } else {
        ++summary.gesture_missing;
      }
      ++summary.total;
      manifest.entries.push_back(std::move(e));
    }
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  write_manifest(out_dir + "/manifest.jsonl", manifest);
  if (manifest_out) *manifest_out = std::move(manifest);
  return summary;
}

MixtureSample load_sample(const ManifestEntry& entry, const std::string& root_dir) {
  MixtureSample s;
  s.id = entry.id;
  s.seed = entry.seed;
  s.snr_db = entry.snr_db;
  s.mixture = read_wav(root_dir + "/" + entry.mixture_path);
  s.target = read_wav(root_dir + "/" + entry.target_path);
  for (const auto& p : entry.interferer_paths)
    s.interferers.push_back(read_wav(root_dir + "/" + p));
  if (entry.lip_path) {
    s.lip = read_lip(root_dir + "/" + *entry.lip_path);
  } else {
    s.presence.has_lip = false;
  }
  if (entry.gesture_path) {
    s.gesture = read_pose(root_dir + "/" + *entry.gesture_path);
  } else {
    s.presence.has_gesture = false;
  }
  return s;
}

}  // namespace selg
