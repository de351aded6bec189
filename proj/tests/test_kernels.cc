// Parallel kernels vs the serial reference implementations.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "selg/kernels.h"
#include "selg/tensor.h"

using selg::Tensor;
namespace kn = selg::kernels;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int64_t> shape, std::mt19937_64* rng,
                        double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  selg::fill_uniform(&t, rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("gemm matches serial reference bit-for-bit") {
  std::mt19937_64 rng(1);
  for (int iter = 0; iter < 30; ++iter) {
    std::uniform_int_distribution<int64_t> d(1, 70);
    const int64_t m = d(rng), k = d(rng), n = d(rng);
    auto a = random_tensor<float>({m, k}, &rng);
    auto b = random_tensor<float>({k, n}, &rng);
    Tensor<float> c0({m, n}, 0.5f), c1({m, n}, 0.5f);
    const bool acc = iter % 2 == 0;
    kn::ref::gemm(a.data(), b.data(), c0.data(), m, k, n, acc);
    kn::gemm(a.data(), b.data(), c1.data(), m, k, n, acc);
    for (int64_t i = 0; i < c0.numel(); ++i) REQUIRE(c0[i] == c1[i]);
  }
}

TEST_CASE("gemm wide tiles hit the j-tiling path") {
  std::mt19937_64 rng(2);
  const int64_t m = 9, k = 33, n = 1100;
  auto a = random_tensor<double>({m, k}, &rng);
  auto b = random_tensor<double>({k, n}, &rng);
  Tensor<double> c0({m, n}, 0.0), c1({m, n}, 0.0);
  kn::ref::gemm(a.data(), b.data(), c0.data(), m, k, n, false);
  kn::gemm(a.data(), b.data(), c1.data(), m, k, n, false);
  for (int64_t i = 0; i < c0.numel(); ++i) REQUIRE(c0[i] == c1[i]);
}

TEST_CASE("transpose round-trips and matches reference") {
  std::mt19937_64 rng(3);
  const int64_t r = 129, c = 77;
  auto x = random_tensor<float>({r, c}, &rng);
  Tensor<float> t0({c, r}), t1({c, r}), back({r, c});
  kn::ref::transpose(x.data(), t0.data(), r, c);
  kn::transpose(x.data(), t1.data(), r, c);
  for (int64_t i = 0; i < t0.numel(); ++i) REQUIRE(t0[i] == t1[i]);
  kn::transpose(t1.data(), back.data(), c, r);
  for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(back[i] == x[i]);
}

TEST_CASE("softmax rows: parallel equals reference, rows sum to one") {
  std::mt19937_64 rng(4);
  const int64_t rows = 64, cols = 101;
  auto x = random_tensor<float>({rows, cols}, &rng, -5.0, 5.0);
  Tensor<float> y0({rows, cols}), y1({rows, cols});
  kn::ref::softmax_rows(x.data(), y0.data(), rows, cols);
  kn::softmax_rows(x.data(), y1.data(), rows, cols);
  for (int64_t i = 0; i < y0.numel(); ++i) REQUIRE(y0[i] == y1[i]);
  for (int64_t i = 0; i < rows; ++i) {
    double s = 0;
    for (int64_t j = 0; j < cols; ++j) s += y1[i * cols + j];
    REQUIRE(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("overlap_add matches brute-force double loop on random inputs") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 100; ++iter) {
    std::uniform_int_distribution<int64_t> dt(1, 12), dl(1, 16);
    const int64_t num = dt(rng);
    const int64_t flen = dl(rng);
    std::uniform_int_distribution<int64_t> dh(1, flen);
    const int64_t hop = dh(rng);
    const int64_t out_len = (num - 1) * hop + flen;
    auto frames = random_tensor<double>({num, flen}, &rng);

    // Independent index-loop oracle.
    Tensor<double> want({out_len}, 0.0);
    for (int64_t t = 0; t < num; ++t)
      for (int64_t j = 0; j < flen; ++j) want[t * hop + j] += frames[t * flen + j];

    Tensor<double> got({out_len});
    kn::overlap_add(frames.data(), got.data(), num, flen, hop, out_len, false);
    for (int64_t i = 0; i < out_len; ++i) REQUIRE(got[i] == want[i]);

    Tensor<double> got_ref({out_len});
    kn::ref::overlap_add(frames.data(), got_ref.data(), num, flen, hop, out_len, false);
    for (int64_t i = 0; i < out_len; ++i) REQUIRE(got_ref[i] == want[i]);
  }
}

TEST_CASE("frame_gather / overlap_add are adjoint") {
  std::mt19937_64 rng(6);
  const int64_t len = 200, flen = 16, hop = 8;
  const int64_t num = (len - flen) / hop + 1;
  auto x = random_tensor<double>({len}, &rng);
  auto f = random_tensor<double>({num, flen}, &rng);
  Tensor<double> fx({num, flen});
  kn::frame_gather(x.data(), fx.data(), num, flen, hop);
  Tensor<double> fty({len}, 0.0);
  kn::overlap_add(f.data(), fty.data(), num, flen, hop, len, false);
  // <Fx, f> == <x, F^T f>
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < fx.numel(); ++i) lhs += fx[i] * f[i];
  for (int64_t i = 0; i < len; ++i) rhs += x[i] * fty[i];
  REQUIRE(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("chunk_gather pads past the end and scatter is adjoint") {
  std::mt19937_64 rng(7);
  const int64_t rows = 23, cols = 3, chunk = 10, hop = 5;
  const int64_t k = (rows - chunk + hop - 1) / hop + 1;
  auto x = random_tensor<double>({rows, cols}, &rng);
  Tensor<double> ch({k, chunk, cols});
  kn::chunk_gather(x.data(), ch.data(), rows, k, chunk, hop, cols);
  for (int64_t kk = 0; kk < k; ++kk)
    for (int64_t c = 0; c < chunk; ++c) {
      const int64_t r = kk * hop + c;
      for (int64_t j = 0; j < cols; ++j) {
        const double want = r < rows ? x[r * cols + j] : 0.0;
        REQUIRE(ch[(kk * chunk + c) * cols + j] == want);
      }
    }
  auto g = random_tensor<double>({k, chunk, cols}, &rng);
  Tensor<double> back({rows, cols}, 0.0);
  kn::chunk_scatter_add(g.data(), back.data(), rows, k, chunk, hop, cols);
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < ch.numel(); ++i) lhs += ch[i] * g[i];
  for (int64_t i = 0; i < back.numel(); ++i) rhs += back[i] * x[i];
  REQUIRE(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("upsample_repeat maps row t to floor(t*F/target)") {
  std::mt19937_64 rng(8);
  const int64_t f = 30, target = 1599, cols = 4;
  auto src = random_tensor<float>({f, cols}, &rng);
  Tensor<float> dst({target, cols});
  kn::upsample_repeat(src.data(), dst.data(), f, target, cols);
  for (int64_t t = 0; t < target; ++t) {
    const int64_t s = t * f / target;
    for (int64_t j = 0; j < cols; ++j) REQUIRE(dst[t * cols + j] == src[s * cols + j]);
  }
  // Multiplicities: every source frame repeated 53 or 54 times.
  std::vector<int> mult(f, 0);
  for (int64_t t = 0; t < target; ++t) mult[t * f / target]++;
  for (int m : mult) REQUIRE((m == 53 || m == 54));

  // Adjoint check.
  auto dy = random_tensor<float>({target, cols}, &rng);
  Tensor<float> dsrc({f, cols}, 0.0f);
  kn::upsample_repeat_backward(dy.data(), dsrc.data(), f, target, cols);
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < dst.numel(); ++i) lhs += double(dst[i]) * dy[i];
  for (int64_t i = 0; i < src.numel(); ++i) rhs += double(src[i]) * dsrc[i];
  REQUIRE(lhs == doctest::Approx(rhs).epsilon(1e-4));
}

TEST_CASE("im2col/col2im adjoint on a small video") {
  std::mt19937_64 rng(9);
  const int64_t F = 4, H = 6, W = 5, C = 2, kt = 3, kh = 3, kw = 3, sh = 2, sw = 1,
                ph = 1, pw = 1;
  const int64_t OH = (H + 2 * ph - kh) / sh + 1, OW = (W + 2 * pw - kw) / sw + 1;
  auto x = random_tensor<double>({F, H, W, C}, &rng);
  Tensor<double> cols({F * OH * OW, kt * kh * kw * C});
  kn::im2col_cl(x.data(), cols.data(), F, H, W, C, kt, kh, kw, sh, sw, ph, pw, OH, OW);
  auto g = random_tensor<double>({F * OH * OW, kt * kh * kw * C}, &rng);
  Tensor<double> dx({F, H, W, C}, 0.0);
  kn::col2im_cl(g.data(), dx.data(), F, H, W, C, kt, kh, kw, sh, sw, ph, pw, OH, OW);
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < cols.numel(); ++i) lhs += cols[i] * g[i];
  for (int64_t i = 0; i < x.numel(); ++i) rhs += x[i] * dx[i];
  REQUIRE(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("layernorm backward matches finite differences") {
  std::mt19937_64 rng(10);
  const int64_t rows = 3, cols = 7;
  auto x = random_tensor<double>({rows, cols}, &rng);
  auto gamma = random_tensor<double>({cols}, &rng, 0.5, 1.5);
  auto beta = random_tensor<double>({cols}, &rng);
  auto w = random_tensor<double>({rows, cols}, &rng);  // reduction weights

  auto eval = [&](const Tensor<double>& xin) {
    Tensor<double> y({rows, cols}), mean({rows}), rstd({rows});
    kn::layernorm_rows(xin.data(), gamma.data(), beta.data(), y.data(), mean.data(),
                       rstd.data(), rows, cols, 1e-5);
    double s = 0;
    for (int64_t i = 0; i < y.numel(); ++i) s += y[i] * w[i];
    return s;
  };

  Tensor<double> y({rows, cols}), mean({rows}), rstd({rows});
  kn::layernorm_rows(x.data(), gamma.data(), beta.data(), y.data(), mean.data(),
                     rstd.data(), rows, cols, 1e-5);
  Tensor<double> dx({rows, cols}, 0.0), dg({cols}, 0.0), db({cols}, 0.0);
  kn::layernorm_rows_backward(x.data(), gamma.data(), mean.data(), rstd.data(),
                              w.data(), dx.data(), dg.data(), db.data(), rows, cols);

  const double h = 1e-6;
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (eval(xp) - eval(xm)) / (2 * h);
    REQUIRE(dx[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}
