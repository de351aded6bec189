// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Hot numeric loops. Every kernel has a serial reference implementation in
// kernels::ref and an OpenMP-parallel default used by the rest of the code.
// The parallel versions split work over independent output elements only and
// keep a fixed accumulation order per element, so results are bit-identical
// to a serial run regardless of thread count.

#ifndef SELG_KERNELS_H_
#define SELG_KERNELS_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "selg/tensor.h"

namespace selg {
namespace kernels {

namespace ref {

// C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n]. The product is
// summed in ascending k order into a zero accumulator and added to C at the
// end, the same arithmetic order as the parallel kernel.
template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
          bool accumulate) {
  std::vector<T> acc(n);
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    std::fill(acc.begin(), acc.end(), T(0));
    const T* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      T av = arow[kk];
      const T* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    if (accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] += acc[j];
    } else {
      for (int64_t j = 0; j < n; ++j) crow[j] = acc[j];
    }
  }
}

template <typename T>
void transpose(const T* src, T* dst, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i) {
    const T* xr = x + i * cols;
    T* yr = y + i * cols;
    T mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    T inv = T(1) / sum;
    for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

// out[i] = sum_t frames[t, i - t*hop] for valid indices; out has out_len
// samples. When accumulate is false the output is zeroed first.
template <typename T>
void overlap_add(const T* frames, T* out, int64_t num_frames, int64_t frame_len,
                 int64_t hop, int64_t out_len, bool accumulate) {
  if (!accumulate) std::memset(out, 0, sizeof(T) * out_len);
  for (int64_t t = 0; t < num_frames; ++t) {
    const T* fr = frames + t * frame_len;
    int64_t base = t * hop;
    for (int64_t j = 0; j < frame_len; ++j) {
      int64_t idx = base + j;
      if (idx < out_len) out[idx] += fr[j];
    }
  }
}

template <typename T>
void frame_gather(const T* x, T* frames, int64_t num_frames, int64_t frame_len,
                  int64_t hop) {
  for (int64_t t = 0; t < num_frames; ++t)
    std::memcpy(frames + t * frame_len, x + t * hop, sizeof(T) * frame_len);
}

}  // namespace ref

// ---------------------------------------------------------------------------
// OpenMP kernels (default path)
// ---------------------------------------------------------------------------

// C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n]. Parallel over rows
// of C; each row is accumulated serially in k order.
template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
          bool accumulate) {
  constexpr int64_t kJTile = 512;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j0 = 0; j0 < n; j0 += kJTile) {
      const int64_t jw = std::min(kJTile, n - j0);
      T acc[kJTile];
      std::memset(acc, 0, sizeof(T) * jw);
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = b + kk * n + j0;
        for (int64_t j = 0; j < jw; ++j) acc[j] += av * brow[j];
      }
      if (accumulate) {
        for (int64_t j = 0; j < jw; ++j) crow[j0 + j] += acc[j];
      } else {
        std::memcpy(crow + j0, acc, sizeof(T) * jw);
      }
    }
  }
}

template <typename T>
void transpose(const T* src, T* dst, int64_t rows, int64_t cols) {
  constexpr int64_t kBlk = 64;
#pragma omp parallel for schedule(static)
  for (int64_t i0 = 0; i0 < rows; i0 += kBlk) {
    const int64_t i1 = std::min(i0 + kBlk, rows);
    for (int64_t j0 = 0; j0 < cols; j0 += kBlk) {
      const int64_t j1 = std::min(j0 + kBlk, cols);
      for (int64_t i = i0; i < i1; ++i)
        for (int64_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    const T* xr = x + i * cols;
    T* yr = y + i * cols;
    T mx = xr[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

// dx = y .* (dy - rowsum(dy .* y)); y is the softmax output.
template <typename T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, int64_t rows,
                           int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    const T* yr = y + i * cols;
    const T* dyr = dy + i * cols;
    T* dxr = dx + i * cols;
    T dot = T(0);
    for (int64_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
    for (int64_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

// Gather overlapping frames: frames[t, :] = x[t*hop : t*hop+frame_len].
template <typename T>
void frame_gather(const T* x, T* frames, int64_t num_frames, int64_t frame_len,
                  int64_t hop) {
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < num_frames; ++t)
    std::memcpy(frames + t * frame_len, x + t * hop, sizeof(T) * frame_len);
}

// Adjoint of frame_gather. Formulated as a gather over output samples so each
// output index is written by exactly one thread.
template <typename T>
void overlap_add(const T* frames, T* out, int64_t num_frames, int64_t frame_len,
                 int64_t hop, int64_t out_len, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < out_len; ++i) {
    T acc = T(0);
    // frames t with t*hop <= i < t*hop + frame_len
    int64_t t_hi = i / hop;
    int64_t t_lo = i < frame_len ? 0 : (i - frame_len) / hop + 1;
    t_hi = std::min(t_hi, num_frames - 1);
    for (int64_t t = t_lo; t <= t_hi; ++t) {
      int64_t j = i - t * hop;
      if (j >= 0 && j < frame_len) acc += frames[t * frame_len + j];
    }
    if (accumulate) {
      out[i] += acc;
    } else {
      out[i] = acc;
    }
  }
}

// y = max(x, 0)
template <typename T>
void relu(const T* x, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// dx += dy where y > 0
template <typename T>
void relu_backward(const T* y, const T* dy, T* dx, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i)
    if (y[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
void add(const T* a, const T* b, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

// y += alpha * x
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(const T* x, T alpha, T* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

// x[r, :] += v for every row r.
template <typename T>
void add_rowvec(T* x, const T* v, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    T* xr = x + i * cols;
    for (int64_t j = 0; j < cols; ++j) xr[j] += v[j];
  }
}

// dv[j] += sum_rows dy[r, j]. Parallel over columns.
template <typename T>
void colsum_accum(const T* dy, T* dv, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < cols; ++j) {
    T acc = T(0);
    for (int64_t i = 0; i < rows; ++i) acc += dy[i * cols + j];
    dv[j] += acc;
  }
}

// Row-wise layer norm: y = (x - mean) * rstd * gamma + beta.
template <typename T>
void layernorm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean,
                    T* rstd, int64_t rows, int64_t cols, T eps) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    const T* xr = x + i * cols;
    T* yr = y + i * cols;
    T m = T(0);
    for (int64_t j = 0; j < cols; ++j) m += xr[j];
    m /= T(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      T d = xr[j] - m;
      var += d * d;
    }
    var /= T(cols);
    T r = T(1) / std::sqrt(var + eps);
    mean[i] = m;
    rstd[i] = r;
    for (int64_t j = 0; j < cols; ++j) yr[j] = (xr[j] - m) * r * gamma[j] + beta[j];
  }
}

template <typename T>
void layernorm_rows_backward(const T* x, const T* gamma, const T* mean,
                             const T* rstd, const T* dy, T* dx, T* dgamma,
                             T* dbeta, int64_t rows, int64_t cols) {
  // dgamma/dbeta: parallel over columns, serial over rows.
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < cols; ++j) {
    T dg = T(0), db = T(0);
    for (int64_t i = 0; i < rows; ++i) {
      const T xhat = (x[i * cols + j] - mean[i]) * rstd[i];
      dg += dy[i * cols + j] * xhat;
      db += dy[i * cols + j];
    }
    dgamma[j] += dg;
    dbeta[j] += db;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    const T* xr = x + i * cols;
    const T* dyr = dy + i * cols;
    T* dxr = dx + i * cols;
    const T m = mean[i], r = rstd[i];
    T sum_dyg = T(0), sum_dyg_xhat = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      const T g = dyr[j] * gamma[j];
      const T xhat = (xr[j] - m) * r;
      sum_dyg += g;
      sum_dyg_xhat += g * xhat;
    }
    const T inv_n = T(1) / T(cols);
    for (int64_t j = 0; j < cols; ++j) {
      const T g = dyr[j] * gamma[j];
      const T xhat = (xr[j] - m) * r;
      dxr[j] += r * (g - inv_n * sum_dyg - xhat * inv_n * sum_dyg_xhat);
    }
  }
}

// Nearest-neighbour upsample of rows: dst[t, :] = src[floor(t*F/target), :].
template <typename T>
void upsample_repeat(const T* src, T* dst, int64_t src_rows, int64_t dst_rows,
                     int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t t = 0; t < dst_rows; ++t) {
    const int64_t s = t * src_rows / dst_rows;
    std::memcpy(dst + t * cols, src + s * cols, sizeof(T) * cols);
  }
}

// Adjoint of upsample_repeat: dsrc[s, :] += sum over t mapping to s.
template <typename T>
void upsample_repeat_backward(const T* ddst, T* dsrc, int64_t src_rows,
                              int64_t dst_rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < src_rows; ++s) {
    // t maps to s iff floor(t*src/dst) == s, i.e. t in [ceil(s*dst/src), ...)
    const int64_t t0 = (s * dst_rows + src_rows - 1) / src_rows;
    const int64_t t1 = ((s + 1) * dst_rows + src_rows - 1) / src_rows;
    T* dr = dsrc + s * cols;
    for (int64_t t = t0; t < t1 && t < dst_rows; ++t) {
      const T* sr = ddst + t * cols;
      for (int64_t j = 0; j < cols; ++j) dr[j] += sr[j];
    }
  }
}

// Split [T x D] rows into K overlapping chunks of C rows (hop between chunk
// starts), zero-padding past the end: out[k, c, :] = x[k*hop + c, :].
template <typename T>
void chunk_gather(const T* x, T* out, int64_t total_rows, int64_t chunks,
                  int64_t chunk_len, int64_t hop, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t k = 0; k < chunks; ++k) {
    for (int64_t c = 0; c < chunk_len; ++c) {
      const int64_t r = k * hop + c;
      T* dst = out + (k * chunk_len + c) * cols;
      if (r < total_rows) {
        std::memcpy(dst, x + r * cols, sizeof(T) * cols);
      } else {
        std::memset(dst, 0, sizeof(T) * cols);
      }
    }
  }
}

// Adjoint of chunk_gather (also used to merge chunks by overlap-add over the
// chunk axis). Gather formulation over output rows.
template <typename T>
void chunk_scatter_add(const T* chunks_data, T* x, int64_t total_rows,
                       int64_t chunks, int64_t chunk_len, int64_t hop,
                       int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < total_rows; ++r) {
    T* xr = x + r * cols;
    int64_t k_hi = r / hop;
    int64_t k_lo = r < chunk_len ? 0 : (r - chunk_len) / hop + 1;
    k_hi = std::min(k_hi, chunks - 1);
    for (int64_t k = k_lo; k <= k_hi; ++k) {
      const int64_t c = r - k * hop;
      if (c < 0 || c >= chunk_len) continue;
      const T* src = chunks_data + (k * chunk_len + c) * cols;
      for (int64_t j = 0; j < cols; ++j) xr[j] += src[j];
    }
  }
}

// [A x B x D] -> [B x A x D]
template <typename T>
void permute01(const T* src, T* dst, int64_t a, int64_t b, int64_t d) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < a; ++i)
    for (int64_t j = 0; j < b; ++j)
      std::memcpy(dst + (j * a + i) * d, src + (i * b + j) * d, sizeof(T) * d);
}

// im2col for channels-last input [F x H x W x C] with temporal window kt
// (zero pad (kt-1)/2 in time), spatial padding ph/pw, strides sh/sw.
// Output rows: f * OH * OW + oh * OW + ow; cols: ((dt*kh + di)*kw + dj)*C + c.
template <typename T>
void im2col_cl(const T* x, T* out, int64_t F, int64_t H, int64_t W, int64_t C,
               int64_t kt, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
               int64_t ph, int64_t pw, int64_t OH, int64_t OW) {
  const int64_t cols = kt * kh * kw * C;
  const int64_t t_off = (kt - 1) / 2;
#pragma omp parallel for schedule(static)
  for (int64_t f = 0; f < F; ++f) {
    for (int64_t oh = 0; oh < OH; ++oh) {
      for (int64_t ow = 0; ow < OW; ++ow) {
        T* row = out + ((f * OH + oh) * OW + ow) * cols;
        int64_t idx = 0;
        for (int64_t dt = 0; dt < kt; ++dt) {
          const int64_t tf = f + dt - t_off;
          for (int64_t di = 0; di < kh; ++di) {
            const int64_t hi = oh * sh + di - ph;
            for (int64_t dj = 0; dj < kw; ++dj) {
              const int64_t wi = ow * sw + dj - pw;
              if (tf >= 0 && tf < F && hi >= 0 && hi < H && wi >= 0 && wi < W) {
                const T* src = x + ((tf * H + hi) * W + wi) * C;
                std::memcpy(row + idx, src, sizeof(T) * C);
              } else {
                std::memset(row + idx, 0, sizeof(T) * C);
              }
              idx += C;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col_cl. Serial: scatter with overlapping targets; only used
// on small lip-encoder tensors.
template <typename T>
void col2im_cl(const T* dout, T* dx, int64_t F, int64_t H, int64_t W, int64_t C,
               int64_t kt, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
               int64_t ph, int64_t pw, int64_t OH, int64_t OW) {
  const int64_t cols = kt * kh * kw * C;
  const int64_t t_off = (kt - 1) / 2;
  for (int64_t f = 0; f < F; ++f) {
    for (int64_t oh = 0; oh < OH; ++oh) {
      for (int64_t ow = 0; ow < OW; ++ow) {
        const T* row = dout + ((f * OH + oh) * OW + ow) * cols;
        int64_t idx = 0;
        for (int64_t dt = 0; dt < kt; ++dt) {
          const int64_t tf = f + dt - t_off;
          for (int64_t di = 0; di < kh; ++di) {
            const int64_t hi = oh * sh + di - ph;
            for (int64_t dj = 0; dj < kw; ++dj) {
              const int64_t wi = ow * sw + dj - pw;
              if (tf >= 0 && tf < F && hi >= 0 && hi < H && wi >= 0 && wi < W) {
                T* dst = dx + ((tf * H + hi) * W + wi) * C;
                for (int64_t c = 0; c < C; ++c) dst[c] += row[idx + c];
              }
              idx += C;
            }
          }
        }
      }
    }
  }
}

template <typename T>
double sum_all_d(const T* x, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

}  // namespace kernels
}  // namespace selg

#endif  // SELG_KERNELS_H_
