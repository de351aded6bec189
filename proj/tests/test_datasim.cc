// Corpus simulation: determinism, cue-envelope correlations, SNR protocol,
// truncation, missing-modality proportions and on-disk identities.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "selg/datasim.h"

using selg::MixtureSample;
using selg::SimConfig;
using selg::SourceSample;
using selg::Waveform;

namespace {

SourceSample gen(uint64_t seed, int64_t len = 48000) {
  auto spk = selg::make_speaker(7, "train", static_cast<int>(seed % 13));
  std::mt19937_64 rng(seed);
  return selg::synth_source(spk, len, 0.05, 24, &rng);
}

double measured_snr_db(const Waveform& target, const Waveform& interferer) {
  double ps = 0, pb = 0;
  for (int64_t i = 0; i < target.size(); ++i) {
    ps += static_cast<double>(target.samples[i]) * target.samples[i];
    pb += static_cast<double>(interferer.samples[i]) * interferer.samples[i];
  }
  return 10.0 * std::log10(ps / pb);
}

}  // namespace

TEST_CASE("synth_source: determinism and basic shape") {
  auto a = gen(5), b = gen(5), c = gen(6);
  REQUIRE(a.wave.size() == 48000);
  REQUIRE(a.pose.num_frames() == 45);
  REQUIRE(a.lip.num_frames() == 45);
  for (int64_t i = 0; i < a.wave.size(); ++i)
    REQUIRE(a.wave.samples[i] == b.wave.samples[i]);
  for (int64_t i = 0; i < a.pose.frames.numel(); ++i)
    REQUIRE(a.pose.frames[i] == b.pose.frames[i]);
  for (int64_t i = 0; i < a.lip.frames.numel(); ++i)
    REQUIRE(a.lip.frames[i] == b.lip.frames[i]);
  bool differs = false;
  for (int64_t i = 0; i < a.wave.size() && !differs; ++i)
    differs = a.wave.samples[i] != c.wave.samples[i];
  REQUIRE(differs);
  selg::validate_lip(a.lip);
  selg::validate_pose(a.pose);
}

TEST_CASE("lip aperture tracks the envelope; wrist height tracks its lagged copy") {
  double lip_corr_sum = 0, wrist_corr_sum = 0;
  double lip_corr_min = 1, wrist_corr_min = 1;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    auto s = gen(1000 + i);
    const auto aperture = selg::measured_lip_aperture(s.lip);
    const double lc = selg::pearson(aperture, s.envelope_frames);
    const auto wrist = selg::wrist_height_series(s.pose);
    const double wc = selg::pearson(wrist, s.gesture_drive_frames);
    lip_corr_sum += lc;
    wrist_corr_sum += wc;
    lip_corr_min = std::min(lip_corr_min, lc);
    wrist_corr_min = std::min(wrist_corr_min, wc);
  }
  CHECK(lip_corr_sum / n >= 0.95);
  CHECK(lip_corr_min >= 0.8);
  CHECK(wrist_corr_sum / n >= 0.6);
  CHECK(wrist_corr_min >= 0.3);
}

TEST_CASE("mix_at_snr: equal-power at 0 dB, exact requested SNR, errors") {
  auto a = gen(11), b = gen(12);
  auto m0 = selg::mix_at_snr(a.wave, b.wave, 0.0);
  double pa = 0, pb = 0;
  for (int64_t i = 0; i < a.wave.size(); ++i) {
    pa += static_cast<double>(a.wave.samples[i]) * a.wave.samples[i];
    pb += static_cast<double>(m0.scaled_interferer.samples[i]) *
          m0.scaled_interferer.samples[i];
  }
  CHECK(std::abs(std::sqrt(pa) - std::sqrt(pb)) / std::sqrt(pa) < 1e-6);

  auto m10 = selg::mix_at_snr(a.wave, b.wave, 10.0);
  CHECK(std::abs(measured_snr_db(a.wave, m10.scaled_interferer) - 10.0) < 1e-6);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> d(-10, 10);
  for (int i = 0; i < 50; ++i) {
    const double snr = d(rng);
    auto m = selg::mix_at_snr(a.wave, b.wave, snr);
    CHECK(std::abs(measured_snr_db(a.wave, m.scaled_interferer) - snr) < 1e-6);
    for (int64_t k = 0; k < a.wave.size(); ++k)
      CHECK(m.mixture.samples[k] == a.wave.samples[k] + m.scaled_interferer.samples[k]);
  }

  Waveform silent;
  silent.samples.assign(a.wave.samples.size(), 0.0f);
  CHECK_THROWS_AS(selg::mix_at_snr(a.wave, silent, 0.0), std::invalid_argument);
}

TEST_CASE("truncate_align: lengths and cue frames") {
  auto a = gen(21, 32000), b = gen(22, 48000);
  selg::truncate_align({&b.wave, &a.wave}, &b.pose, &b.lip);
  CHECK(a.wave.size() == 32000);
  CHECK(b.wave.size() == 32000);
  CHECK(b.pose.num_frames() == 30);  // floor(32000/16000*15)
  CHECK(b.lip.num_frames() == 30);

  // Equal lengths unchanged.
  auto c = gen(23, 32000);
  selg::truncate_align({&a.wave, &c.wave}, &c.pose, &c.lip);
  CHECK(c.wave.size() == 32000);
  CHECK(c.pose.num_frames() == 30);

  // Degenerate one-sample minimum.
  Waveform one;
  one.samples = {0.5f};
  Waveform other;
  other.samples.assign(100, 0.1f);
  selg::truncate_align({&one, &other}, nullptr, nullptr);
  CHECK(other.size() == 1);
}

TEST_CASE("apply_missing: proportions, invariant, determinism") {
  selg::MissingPolicy policy;
  int lip_missing = 0, gesture_missing = 0;
  const int n = 10000;
  std::mt19937_64 rng(31);
  for (int i = 0; i < n; ++i) {
    MixtureSample s;
    s.lip = selg::LipSequence{};
    s.lip->frames = selg::Tensor<float>::zeros({1, 4, 4});
    s.gesture = selg::PoseSequence{};
    s.gesture->frames = selg::Tensor<float>::zeros({1, 10, 3});
    selg::apply_missing(&s, policy, &rng);
    CHECK((s.presence.has_lip || s.presence.has_gesture));
    CHECK(s.presence.has_lip == s.lip.has_value());
    CHECK(s.presence.has_gesture == s.gesture.has_value());
    if (!s.presence.has_lip) ++lip_missing;
    if (!s.presence.has_gesture) ++gesture_missing;
  }
  const double f_lip = static_cast<double>(lip_missing) / n;
  const double f_gest_given_lip =
      static_cast<double>(gesture_missing) / (n - lip_missing);
  CHECK(f_lip >= 0.23);
  CHECK(f_lip <= 0.27);
  CHECK(f_gest_given_lip >= 0.18);
  CHECK(f_gest_given_lip <= 0.22);

  // Determinism: same seed -> same drop pattern.
  auto run = [&](uint64_t seed) {
    std::vector<int> pattern;
    std::mt19937_64 r(seed);
    for (int i = 0; i < 200; ++i) {
      MixtureSample s;
      s.lip = selg::LipSequence{};
      s.lip->frames = selg::Tensor<float>::zeros({1, 4, 4});
      s.gesture = selg::PoseSequence{};
      s.gesture->frames = selg::Tensor<float>::zeros({1, 10, 3});
      selg::apply_missing(&s, policy, &r);
      pattern.push_back(s.presence.has_lip * 2 + s.presence.has_gesture);
    }
    return pattern;
  };
  CHECK(run(77) == run(77));
}

TEST_CASE("make_sample: 3-speaker case scales each interferer to its own SNR") {
  SimConfig cfg;
  cfg.num_speakers = 3;
  cfg.seed = 99;
  auto s = selg::make_sample(cfg, "test", 0);
  REQUIRE(s.interferers.size() == 2);
  REQUIRE(s.snr_db.size() == 2);
  for (size_t k = 0; k < 2; ++k)
    CHECK(std::abs(measured_snr_db(s.target, s.interferers[k]) - s.snr_db[k]) < 1e-6);
  // mixture identity, sample-wise
  for (int64_t i = 0; i < s.mixture.size(); ++i) {
    float acc = s.target.samples[i];
    for (const auto& b : s.interferers) acc += b.samples[i];
    CHECK(s.mixture.samples[i] == acc);
  }
  CHECK(std::abs(s.snr_db[0] - s.snr_db[1]) > 1e-6);  // independent draws
}

TEST_CASE("build_corpus: reproducible manifest, on-disk identities, summary") {
  SimConfig cfg;
  cfg.train_count = 12;
  cfg.val_count = 4;
  cfg.test_count = 4;
  cfg.dur_low_s = 2.0;
  cfg.dur_high_s = 2.4;
  cfg.seed = 4242;
  const std::string dir = "test_corpus";
  std::filesystem::remove_all(dir);
  selg::Manifest manifest;
  auto summary = selg::build_corpus(cfg, dir, &manifest);
  CHECK(summary.total == 20);
  CHECK(manifest.entries.size() == 20);
  CHECK(std::is_sorted(manifest.entries.begin(), manifest.entries.end(),
                       [](const auto& a, const auto& b) { return a.id < b.id; }));

  // Regeneration is byte-identical.
  std::ifstream m1(dir + "/manifest.jsonl");
  std::string manifest_text((std::istreambuf_iterator<char>(m1)),
                            std::istreambuf_iterator<char>());
  const std::string dir2 = "test_corpus_b";
  std::filesystem::remove_all(dir2);
  selg::build_corpus(cfg, dir2);
  std::ifstream m2(dir2 + "/manifest.jsonl");
  std::string manifest_text2((std::istreambuf_iterator<char>(m2)),
                             std::istreambuf_iterator<char>());
  // Paths inside are relative, so the two manifests must match byte-for-byte.
  CHECK(manifest_text == manifest_text2);

  // Every sample: mixture == target + sum(interferers), measured SNR matches.
  for (const auto& e : manifest.entries) {
    auto s = selg::load_sample(e, dir);
    REQUIRE(s.mixture.size() > 0);
    for (int64_t i = 0; i < s.mixture.size(); ++i) {
      float acc = s.target.samples[i];
      for (const auto& b : s.interferers) acc += b.samples[i];
      REQUIRE(s.mixture.samples[i] == acc);
    }
    for (size_t k = 0; k < s.interferers.size(); ++k)
      REQUIRE(std::abs(measured_snr_db(s.target, s.interferers[k]) - e.snr_db[k]) <
              1e-6);
    REQUIRE(s.presence.has_lip == e.lip_path.has_value());
    REQUIRE(s.presence.has_gesture == e.gesture_path.has_value());
    REQUIRE((s.presence.has_lip || s.presence.has_gesture));
    if (s.lip) REQUIRE(s.lip->num_frames() * 16000 / 15 == s.mixture.size());
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("speaker identities differ across splits and indices") {
  auto a = selg::make_speaker(1, "train", 0);
  auto b = selg::make_speaker(1, "val", 0);
  auto c = selg::make_speaker(1, "train", 1);
  CHECK(a.f0_hz != b.f0_hz);
  CHECK(a.f0_hz != c.f0_hz);
  // deterministic
  auto a2 = selg::make_speaker(1, "train", 0);
  CHECK(a.f0_hz == a2.f0_hz);
  CHECK(a.num_harmonics == a2.num_harmonics);
}
