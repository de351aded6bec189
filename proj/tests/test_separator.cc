// Separator contracts: projection shapes, attention oracles, fusion algebra,
// dual-path framing, mask estimation, end-to-end extraction and checkpoints.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "selg/checkpoint.h"
#include "selg/separator.h"

using selg::ModelConfig;
using selg::SelgModel;
using selg::Tensor;
namespace ad = selg::ad;

namespace {

// Small desk config used throughout these tests.
ModelConfig tiny_config(selg::FusionKind fusion, bool use_lip, bool use_gesture) {
  ModelConfig cfg;
  cfg.codec.channels = 32;
  cfg.codec.kernel = 16;
  cfg.gesture.layers = 2;
  cfg.gesture.hidden = 8;  // out 16
  cfg.separator.embed_dim = 16;
  cfg.separator.heads = 2;
  cfg.separator.ffn_dim = 32;
  cfg.separator.dp_input = 16;
  cfg.separator.dp_hidden = 12;
  cfg.separator.chunk = 20;
  cfg.separator.repeats = 2;
  cfg.fusion = fusion;
  cfg.use_lip = use_lip;
  cfg.use_gesture = use_gesture;
  return cfg;
}

selg::Waveform sine_wave(int64_t len, double freq, std::mt19937_64* rng) {
  selg::Waveform w;
  w.samples.resize(len);
  std::uniform_real_distribution<double> ph(0, 6.28);
  const double p0 = ph(*rng);
  for (int64_t i = 0; i < len; ++i)
    w.samples[i] = 0.4f * std::sin(2 * M_PI * freq * i / 16000.0 + p0);
  return w;
}

selg::PoseSequence make_pose(int64_t f, std::mt19937_64* rng) {
  selg::PoseSequence p;
  p.frames = Tensor<float>({f, 10, 3});
  selg::fill_uniform(&p.frames, rng, -0.5, 0.5);
  for (int64_t t = 0; t < f; ++t) {
    p.frames[(t * 10 + selg::kJointLShoulder) * 3] += 1.0f;
    p.frames[(t * 10 + selg::kJointRShoulder) * 3] -= 1.0f;
  }
  return p;
}

selg::LipSequence make_lip(int64_t f, std::mt19937_64* rng) {
  selg::LipSequence l;
  l.frames = Tensor<float>({f, 24, 24});
  selg::fill_uniform(&l.frames, rng, 0.0, 1.0);
  return l;
}

}  // namespace

TEST_CASE("default separator config matches expected values") {
  selg::SeparatorConfig cfg;
  CHECK(cfg.embed_dim == 64);
  CHECK(cfg.heads == 4);
  CHECK(cfg.ffn_dim == 256);
  CHECK(cfg.dp_input == 64);
  CHECK(cfg.dp_hidden == 128);
  CHECK(cfg.chunk == 100);
  CHECK(cfg.repeats == 4);
  CHECK(cfg.embed_dim / cfg.heads == 16);  // per-head width
  cfg.validate();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("project_mixture: shape law and zero preservation") {
  auto cfg = tiny_config(selg::FusionKind::kAttention, true, true);
  SelgModel<float> model(cfg);
  std::mt19937_64 rng(71);
  Tensor<float> x({123, 32});
  selg::fill_uniform(&x, &rng, 0.0, 1.0);
  auto p = model.project_mixture(ad::constant(x));
  CHECK(p->value.dim(0) == 123);
  CHECK(p->value.dim(1) == 16);
  auto z = model.project_mixture(ad::constant(Tensor<float>::zeros({7, 32})));
  for (int64_t i = 0; i < z->value.numel(); ++i) CHECK(z->value[i] == 0.0f);
}

TEST_CASE("cross-attention with uniform keys gives uniform weights") {
  selg::nn::ParamStore<float> store;
  std::mt19937_64 init(3), rng(72);
  selg::nn::CrossAttention<float> attn(&store, "a", 16, 2, 32, 0.0, &init);
  Tensor<float> q({10, 16});
  selg::fill_uniform(&q, &rng, -1.0, 1.0);
  // identical rows -> identical keys -> softmax of a constant row is uniform
  Tensor<float> kv({10, 16});
  for (int64_t t = 0; t < 10; ++t)
    for (int64_t j = 0; j < 16; ++j) kv.at2(t, j) = 0.3f * (j % 5);
  selg::nn::Ctx ctx;
  Tensor<float> probs;
  attn.forward(ad::constant(q), ad::constant(kv), ctx, &probs);
  for (int64_t i = 0; i < probs.numel(); ++i)
    CHECK(probs[i] == doctest::Approx(0.1).epsilon(1e-5));
}

TEST_CASE("fuse: sum, commutativity, zero identity, absence") {
  std::mt19937_64 rng(73);
  Tensor<float> a({5, 4}), b({5, 4});
  selg::fill_uniform(&a, &rng, -1.0, 1.0);
  selg::fill_uniform(&b, &rng, -1.0, 1.0);
  auto va = ad::constant(a), vb = ad::constant(b);

  auto sum = selg::fuse(va, vb);
  auto rev = selg::fuse(vb, va);
  for (int64_t i = 0; i < sum->value.numel(); ++i) {
    CHECK(sum->value[i] == a[i] + b[i]);
    CHECK(sum->value[i] == rev->value[i]);
  }

  // Absent branch behaves as an explicit all-zero branch, bit for bit.
  auto lip_only = selg::fuse(va, ad::VarPtr<float>());
  auto explicit_zero = selg::fuse(va, ad::constant(Tensor<float>::zeros({5, 4})));
  for (int64_t i = 0; i < lip_only->value.numel(); ++i) {
    CHECK(lip_only->value[i] == explicit_zero->value[i]);
    CHECK(lip_only->value[i] == a[i]);
  }
  auto gesture_only = selg::fuse(ad::VarPtr<float>(), vb);
  for (int64_t i = 0; i < 20; ++i) CHECK(gesture_only->value[i] == b[i]);

  auto zz = selg::fuse(ad::constant(Tensor<float>::zeros({3, 2})),
                       ad::constant(Tensor<float>::zeros({3, 2})));
  for (int64_t i = 0; i < zz->value.numel(); ++i) CHECK(zz->value[i] == 0.0f);

  CHECK_THROWS_AS(selg::fuse(ad::VarPtr<float>(), ad::VarPtr<float>()),
                  std::invalid_argument);
}

TEST_CASE("dual-path chunk arithmetic and length preservation") {
  using DP = selg::nn::DualPathBlock<float>;
  // 1599 frames, chunk 100, hop 50 -> 31 chunks
  CHECK(DP::num_chunks(1599, 100, 50) == 31);
  CHECK(DP::num_chunks(100, 100, 50) == 1);
  CHECK(DP::num_chunks(1, 100, 50) == 1);

  selg::nn::ParamStore<float> store;
  std::mt19937_64 init(4), rng(74);
  DP dp(&store, "dp", 8, 6, 20, &init);
  selg::nn::Ctx ctx;
  std::uniform_int_distribution<int64_t> dlen(1, 500);
  for (int iter = 0; iter < 12; ++iter) {
    const int64_t t = dlen(rng);
    Tensor<float> x({t, 8});
    selg::fill_uniform(&x, &rng, -1.0, 1.0);
    auto y = dp.forward(ad::constant(x), ctx);
    CHECK(y->value.dim(0) == t);
    CHECK(y->value.dim(1) == 8);
    CHECK(y->value.all_finite());
  }
}

TEST_CASE("estimate_mask: shape, nonnegativity, zero lip branch when absent") {
  std::mt19937_64 rng(75);
  for (auto fusion : {selg::FusionKind::kAttention, selg::FusionKind::kConcatenation}) {
    auto cfg = tiny_config(fusion, true, true);
    SelgModel<float> model(cfg);
    selg::nn::Ctx ctx;
    for (int seed = 0; seed < 8; ++seed) {
      std::mt19937_64 r2(100 + seed);
      const int64_t t = 40 + seed * 17;
      Tensor<float> x({t, 32});
      selg::fill_uniform(&x, &r2, 0.0, 1.0);
      Tensor<float> vl({t, 16}), vg({t, 16});
      selg::fill_uniform(&vl, &r2, -1.0, 1.0);
      selg::fill_uniform(&vg, &r2, -1.0, 1.0);
      auto mask = model.estimate_mask(ad::constant(x), ad::constant(vl),
                                      ad::constant(vg), ctx);
      CHECK(mask->value.dim(0) == t);
      CHECK(mask->value.dim(1) == 32);  // mask shape == embedding shape
      for (int64_t i = 0; i < mask->value.numel(); ++i)
        CHECK(mask->value[i] >= 0.0f);

      // gesture-only presence: the lip branch contributes zeros in every
      // block; result equals passing an explicit zero lip stream... for the
      // attention path the absent branch short-circuits, for concat the slot
      // is zero-filled. Both must agree with the explicit-zeros call.
      auto m_absent = model.estimate_mask(ad::constant(x), ad::VarPtr<float>(),
                                          ad::constant(vg), ctx);
      CHECK(m_absent->value.all_finite());
      if (fusion == selg::FusionKind::kConcatenation) {
        auto m_zero = model.estimate_mask(ad::constant(x), model.zero_stream(t),
                                          ad::constant(vg), ctx);
        for (int64_t i = 0; i < m_absent->value.numel(); ++i)
          CHECK(m_absent->value[i] == m_zero->value[i]);
      }
    }
  }
}

TEST_CASE("estimate_mask rejects length mismatches") {
  auto cfg = tiny_config(selg::FusionKind::kAttention, true, true);
  SelgModel<float> model(cfg);
  selg::nn::Ctx ctx;
  std::mt19937_64 rng(76);
  Tensor<float> x({50, 32}), vl({49, 16});
  selg::fill_uniform(&x, &rng, 0.0, 1.0);
  selg::fill_uniform(&vl, &rng, -1.0, 1.0);
  CHECK_THROWS_AS(
      model.estimate_mask(ad::constant(x), ad::constant(vl), ad::VarPtr<float>(), ctx),
      std::invalid_argument);
}

TEST_CASE("extract: length contract, identity mask hook, missing-cue behavior") {
  std::mt19937_64 rng(77);
  auto cfg = tiny_config(selg::FusionKind::kAttention, true, true);
  SelgModel<float> model(cfg);

  const int64_t len = 2 * 16000;
  auto wave = sine_wave(len, 220.0, &rng);
  auto pose = make_pose(30, &rng);
  auto lip = make_lip(30, &rng);

  auto out = model.extract(wave, &lip, &pose);
  CHECK(out.size() == len);

  // Forced all-ones mask: output == decode(encode(x)).
  const int64_t t = selg::codec_frame_count(len, cfg.codec);
  Tensor<float> ones({t, 32}, 1.0f);
  auto forced = model.extract(wave, &lip, &pose, &ones);
  {
    ad::NoGradGuard guard;
    auto x = model.codec().encode(ad::constant(selg::waveform_to_tensor<float>(wave)));
    auto dec = model.codec().decode(x, len);
    for (int64_t i = 0; i < len; ++i) CHECK(forced.samples[i] == dec->value[i]);
  }

  // Missing gesture runs and is deterministic.
  auto no_g_1 = model.extract(wave, &lip, nullptr);
  auto no_g_2 = model.extract(wave, &lip, nullptr);
  for (int64_t i = 0; i < len; ++i) CHECK(no_g_1.samples[i] == no_g_2.samples[i]);

  // No cue at all is rejected.
  CHECK_THROWS_AS(model.extract(wave, nullptr, nullptr), std::invalid_argument);

  // Cue much shorter than the audio is rejected.
  auto short_pose = make_pose(10, &rng);
  CHECK_THROWS_AS(model.extract(wave, &lip, &short_pose), std::invalid_argument);
}

TEST_CASE("gradient flows to every parameter on a training pass") {
  std::mt19937_64 rng(78);
  for (auto fusion : {selg::FusionKind::kAttention, selg::FusionKind::kConcatenation}) {
    auto cfg = tiny_config(fusion, true, true);
    SelgModel<float> model(cfg);
    const int64_t len = 16000;  // 1 s, 15 visual frames
    auto mix = sine_wave(len, 190.0, &rng);
    auto tgt = sine_wave(len, 250.0, &rng);
    auto pose = make_pose(15, &rng);
    auto lip = make_lip(15, &rng);

    std::mt19937_64 drop(9);
    selg::nn::Ctx ctx{true, &drop};
    auto res = model.extract_full(mix, &lip, &pose, ctx);
    auto target = ad::constant(selg::waveform_to_tensor<float>(tgt));
    auto l = selg::loss::si_snr_loss(target, res.s_hat);
    model.store().zero_grads();
    ad::backward(l);
    for (const auto& p : model.store().params()) {
      bool nonzero = false;
      if (p->has_grad)
        for (int64_t i = 0; i < p->grad.numel() && !nonzero; ++i)
          nonzero = p->grad[i] != 0.0f;
      INFO("param ", p->name, " fusion ", selg::fusion_name(fusion));
      CHECK(nonzero);
    }
  }
}

TEST_CASE("checkpoint round-trip preserves behavior; config mismatch rejected") {
  std::mt19937_64 rng(79);
  auto cfg = tiny_config(selg::FusionKind::kAttention, true, true);
  SelgModel<float> model(cfg);
  auto wave = sine_wave(16000, 300.0, &rng);
  auto pose = make_pose(15, &rng);
  auto lip = make_lip(15, &rng);
  auto before = model.extract(wave, &lip, &pose);

  selg::save_checkpoint("test_ckpt.bin", cfg, model.store(), {{"note", "test"}});
  auto data = selg::read_checkpoint("test_ckpt.bin");
  CHECK(data.extra.at("note") == "test");

  ModelConfig cfg2 = cfg;
  cfg2.init_seed = 999;  // different init, same topology
  SelgModel<float> fresh(cfg2);
  // config mismatch (init_seed differs) is rejected
  CHECK_THROWS_AS(selg::load_into(&fresh, data), std::invalid_argument);

  SelgModel<float> same(cfg);
  // scramble, then restore
  for (auto& p : same.store().params())
    for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.1f;
  selg::load_into(&same, data);
  auto after = same.extract(wave, &lip, &pose);
  for (int64_t i = 0; i < before.size(); ++i)
    CHECK(before.samples[i] == after.samples[i]);
  std::remove("test_ckpt.bin");
}

TEST_CASE("unimodal topologies expose only their cue parameters") {
  auto lip_only = tiny_config(selg::FusionKind::kConcatenation, true, false);
  SelgModel<float> usev(lip_only);
  for (const auto& p : usev.store().params())
    CHECK(p->name.rfind("gesture", 0) != 0);

  auto gesture_only = tiny_config(selg::FusionKind::kConcatenation, false, true);
  SelgModel<float> seg(gesture_only);
  for (const auto& p : seg.store().params())
    CHECK(p->name.rfind("lip", 0) != 0);
}
