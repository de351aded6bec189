// Visual encoder contracts: frame-count preservation, upsample mapping,
// determinism, topology, and gesture-encoder gradients.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "selg/visual_encoders.h"
#include "selg/visual_io.h"

using selg::LipSequence;
using selg::PoseSequence;
using selg::Tensor;
namespace ad = selg::ad;

namespace {

PoseSequence random_pose(int64_t f, std::mt19937_64* rng) {
  PoseSequence p;
  p.frames = Tensor<float>({f, selg::kNumJoints, 3});
  selg::fill_uniform(&p.frames, rng, -1.0, 1.0);
  // keep shoulders apart so the normalization scale is well defined
  for (int64_t t = 0; t < f; ++t) {
    p.frames[(t * 10 + selg::kJointLShoulder) * 3 + 0] += 1.0f;
    p.frames[(t * 10 + selg::kJointRShoulder) * 3 + 0] -= 1.0f;
  }
  return p;
}

LipSequence random_lip(int64_t f, int64_t hw, std::mt19937_64* rng) {
  LipSequence l;
  l.frames = Tensor<float>({f, hw, hw});
  selg::fill_uniform(&l.frames, rng, 0.0, 1.0);
  return l;
}

}  // namespace

TEST_CASE("gesture encoder: 30 frames -> 30 x 64, defaults R_g=5 hidden=32") {
  selg::GestureEncoderConfig cfg;
  REQUIRE(cfg.layers == 5);
  REQUIRE(cfg.hidden == 32);
  REQUIRE(cfg.dropout == 0.3);
  std::mt19937_64 init(1), rng(61);
  selg::nn::ParamStore<float> store;
  selg::GestureEncoder<float> enc(&store, cfg, &init);
  auto pose = random_pose(30, &rng);
  selg::nn::Ctx ctx;  // eval mode
  auto emb = enc.forward(pose, ctx);
  REQUIRE(emb->value.dim(0) == 30);
  REQUIRE(emb->value.dim(1) == 64);

  // 5 bidirectional layers x 6 tensors each
  int gesture_params = 0;
  for (const auto& p : store.params())
    if (p->name.rfind("gesture", 0) == 0) ++gesture_params;
  REQUIRE(gesture_params == 5 * 6);

  // Frame-count preservation across lengths.
  for (int64_t f : {1, 7, 45}) {
    auto e = enc.forward(random_pose(f, &rng), ctx);
    REQUIRE(e->value.dim(0) == f);
  }
}

TEST_CASE("gesture encoder: eval-mode determinism, dropout changes training") {
  std::mt19937_64 init(2), rng(62);
  selg::nn::ParamStore<float> store;
  selg::GestureEncoder<float> enc(&store, selg::GestureEncoderConfig{}, &init);
  auto pose = random_pose(12, &rng);
  selg::nn::Ctx eval_ctx;
  auto a = enc.forward(pose, eval_ctx);
  auto b = enc.forward(pose, eval_ctx);
  for (int64_t i = 0; i < a->value.numel(); ++i)
    REQUIRE(a->value[i] == b->value[i]);

  std::mt19937_64 d1(3), d2(3), d3(4);
  selg::nn::Ctx t1{true, &d1}, t2{true, &d2}, t3{true, &d3};
  auto x = enc.forward(pose, t1);
  auto y = enc.forward(pose, t2);
  auto z = enc.forward(pose, t3);
  for (int64_t i = 0; i < x->value.numel(); ++i) REQUIRE(x->value[i] == y->value[i]);
  bool differs = false;
  for (int64_t i = 0; i < x->value.numel(); ++i) differs |= x->value[i] != z->value[i];
  REQUIRE(differs);
}

TEST_CASE("gesture encoder rejects non-finite poses") {
  std::mt19937_64 init(3), rng(63);
  selg::nn::ParamStore<float> store;
  selg::GestureEncoder<float> enc(&store, selg::GestureEncoderConfig{}, &init);
  auto pose = random_pose(5, &rng);
  pose.frames[17] = std::nanf("");
  selg::nn::Ctx ctx;
  CHECK_THROWS_AS(enc.forward(pose, ctx), std::invalid_argument);
}

TEST_CASE("gesture encoder gradcheck (float64, 4 frames)") {
  std::mt19937_64 init(4), rng(64);
  selg::nn::ParamStore<double> store;
  selg::GestureEncoderConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 3;
  selg::GestureEncoder<double> enc(&store, cfg, &init);
  Tensor<double> x({4, 1, 30});
  selg::fill_uniform(&x, &rng, -1.0, 1.0);
  auto xv = ad::leaf(x, true);
  Tensor<double> w({4, 6});
  selg::fill_uniform(&w, &rng, -1.0, 1.0);
  auto wc = ad::constant(w);
  selg::nn::Ctx ctx;
  auto build = [&] { return ad::sum_all(ad::mul(enc.forward_var(xv, ctx), wc)); };
  auto root = build();
  ad::backward(root);
  const double h = 1e-5;
  for (int64_t i = 0; i < x.numel(); i += 11) {
    const double x0 = xv->value[i];
    xv->value[i] = x0 + h;
    const double fp = build()->value[0];
    xv->value[i] = x0 - h;
    const double fm = build()->value[0];
    xv->value[i] = x0;
    const double fd = (fp - fm) / (2 * h);
    const double scale = std::max({1.0, std::abs(fd)});
    REQUIRE(std::abs(xv->grad[i] - fd) / scale < 1e-4);
  }
}

TEST_CASE("lip encoder lite: frame preservation, finite on zeros, D_l=64") {
  selg::LipEncoderConfig cfg;
  REQUIRE(cfg.out_dim() == 64);
  std::mt19937_64 init(5), rng(65);
  selg::nn::ParamStore<float> store;
  selg::LipEncoder<float> enc(&store, cfg, &init);
  selg::nn::Ctx ctx;
  for (int64_t f : {1, 9, 30}) {
    auto emb = enc.forward(random_lip(f, 24, &rng), ctx);
    REQUIRE(emb->value.dim(0) == f);
    REQUIRE(emb->value.dim(1) == 64);
  }
  LipSequence zeros;
  zeros.frames = Tensor<float>::zeros({6, 24, 24});
  auto z = enc.forward(zeros, ctx);
  REQUIRE(z->value.all_finite());
}

TEST_CASE("lip encoder rejects out-of-range intensities") {
  std::mt19937_64 init(6), rng(66);
  selg::nn::ParamStore<float> store;
  selg::LipEncoder<float> enc(&store, selg::LipEncoderConfig{}, &init);
  auto lip = random_lip(3, 24, &rng);
  lip.frames[100] = 1.5f;
  selg::nn::Ctx ctx;
  CHECK_THROWS_AS(enc.forward(lip, ctx), std::invalid_argument);
  lip.frames[100] = -0.1f;
  CHECK_THROWS_AS(enc.forward(lip, ctx), std::invalid_argument);
}

TEST_CASE("lip encoder faithful topology: 3D conv + residual-18 + 5 temporal blocks") {
  selg::LipEncoderConfig cfg;
  cfg.variant = selg::LipEncoderVariant::kFaithful;
  REQUIRE(cfg.out_dim() == 512);
  std::mt19937_64 init(7), rng(67);
  selg::nn::ParamStore<float> store;
  selg::LipEncoder<float> enc(&store, cfg, &init);
  // 18-layer residual network = 8 basic blocks of 2 convs + the front conv.
  REQUIRE(enc.num_res_blocks() == 8);
  REQUIRE(enc.num_temporal_blocks() == 5);
  selg::nn::Ctx ctx;
  auto emb = enc.forward(random_lip(3, 32, &rng), ctx);
  REQUIRE(emb->value.dim(0) == 3);
  REQUIRE(emb->value.dim(1) == 512);
}

TEST_CASE("upsample_to_rate: floor mapping, multiplicities, identity, errors") {
  std::mt19937_64 rng(68);
  Tensor<float> emb({30, 8});
  selg::fill_uniform(&emb, &rng, -1.0, 1.0);
  auto e = ad::constant(emb);
  auto up = selg::upsample_to_rate(e, 1599);
  REQUIRE(up->value.dim(0) == 1599);
  std::vector<int> mult(30, 0);
  for (int64_t t = 0; t < 1599; ++t) {
    const int64_t s = t * 30 / 1599;
    ++mult[s];
    for (int64_t j = 0; j < 8; ++j)
      REQUIRE(up->value.at2(t, j) == emb.at2(s, j));
  }
  for (int m : mult) REQUIRE((m == 53 || m == 54));

  // Monotone and surjective onto source indices.
  int64_t prev = 0;
  std::vector<bool> hit(30, false);
  for (int64_t t = 0; t < 1599; ++t) {
    const int64_t s = t * 30 / 1599;
    REQUIRE(s >= prev);
    prev = s;
    hit[s] = true;
  }
  for (bool h : hit) REQUIRE(h);

  // F == target -> identity (same node); F=1 repeats the single frame.
  REQUIRE(selg::upsample_to_rate(e, 30).get() == e.get());
  Tensor<float> one({1, 4});
  selg::fill_uniform(&one, &rng, -1.0, 1.0);
  auto rep = selg::upsample_to_rate(ad::constant(one), 10);
  REQUIRE(rep->value.dim(0) == 10);
  for (int64_t t = 0; t < 10; ++t)
    for (int64_t j = 0; j < 4; ++j) REQUIRE(rep->value.at2(t, j) == one[j]);

  CHECK_THROWS_AS(selg::upsample_to_rate(e, 29), std::invalid_argument);
}

TEST_CASE("pose and lip files round-trip") {
  std::mt19937_64 rng(69);
  auto pose = random_pose(7, &rng);
  selg::write_pose("test_pose.json", pose);
  auto back = selg::read_pose("test_pose.json");
  REQUIRE(back.num_frames() == 7);
  REQUIRE(back.fps == 15);
  for (int64_t i = 0; i < pose.frames.numel(); ++i)
    REQUIRE(back.frames[i] == pose.frames[i]);
  std::remove("test_pose.json");

  auto lip = random_lip(4, 24, &rng);
  selg::write_lip("test_lip.bin", lip);
  auto lb = selg::read_lip("test_lip.bin");
  REQUIRE(lb.num_frames() == 4);
  REQUIRE(lb.height() == 24);
  REQUIRE(lb.width() == 24);
  for (int64_t i = 0; i < lip.frames.numel(); ++i)
    REQUIRE(lb.frames[i] == lip.frames[i]);
  std::remove("test_lip.bin");
  std::remove("test_lip.bin.json");
}
