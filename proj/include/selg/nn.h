// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SELG_NN_H_
#define SELG_NN_H_

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selg/autodiff.h"

namespace selg {
namespace nn {

// Forward-pass context. Dropout fires only when training is set; the rng is
// owned by the caller so runs are reproducible.
struct Ctx {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

// Flat registry of named learnable parameters.
template <typename T>
class ParamStore {
 public:
  ad::VarPtr<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& p : params_)
      if (p->name == name) throw std::invalid_argument("duplicate param: " + name);
    auto v = ad::leaf(std::move(init), true, name);
    params_.push_back(v);
    return v;
  }

  const std::vector<ad::VarPtr<T>>& params() const { return params_; }

  ad::VarPtr<T> find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<ad::VarPtr<T>> params_;
};

// Xavier-uniform init for a [in x out] matrix.
template <typename T>
Tensor<T> xavier_uniform(int64_t in, int64_t out, std::mt19937_64* rng) {
  Tensor<T> w({in, out});
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  fill_uniform(&w, rng, -bound, bound);
  return w;
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>* store, const std::string& prefix, int64_t in, int64_t out,
         bool bias, std::mt19937_64* rng) {
    w_ = store->add(prefix + ".w", xavier_uniform<T>(in, out, rng));
    if (bias) b_ = store->add(prefix + ".b", Tensor<T>::zeros({out}));
  }
  ad::VarPtr<T> forward(const ad::VarPtr<T>& x) const {
    return b_ ? ad::linear(x, w_, b_) : ad::linear(x, w_);
  }
  ad::VarPtr<T> w() const { return w_; }

 private:
  ad::VarPtr<T> w_, b_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>* store, const std::string& prefix, int64_t dim) {
    gamma_ = store->add(prefix + ".gamma", Tensor<T>::full({dim}, T(1)));
    beta_ = store->add(prefix + ".beta", Tensor<T>::zeros({dim}));
  }
  ad::VarPtr<T> forward(const ad::VarPtr<T>& x) const {
    return ad::layer_norm(x, gamma_, beta_);
  }

 private:
  ad::VarPtr<T> gamma_, beta_;
};

// One bidirectional LSTM layer; output is the forward/backward concatenation.
template <typename T>
class BlstmLayer {
 public:
  BlstmLayer() = default;
  BlstmLayer(ParamStore<T>* store, const std::string& prefix, int64_t in,
             int64_t hidden, std::mt19937_64* rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto mk = [&](const std::string& nm, int64_t r, int64_t c) {
      Tensor<T> t({r, c});
      fill_uniform(&t, rng, -bound, bound);
      return store->add(prefix + nm, std::move(t));
    };
    wi_f_ = mk(".fw.w_ih", in, 4 * hidden);
    wh_f_ = mk(".fw.w_hh", hidden, 4 * hidden);
    b_f_ = store->add(prefix + ".fw.b", Tensor<T>::zeros({4 * hidden}));
    wi_b_ = mk(".bw.w_ih", in, 4 * hidden);
    wh_b_ = mk(".bw.w_hh", hidden, 4 * hidden);
    b_b_ = store->add(prefix + ".bw.b", Tensor<T>::zeros({4 * hidden}));
  }

  // x: [S x B x in] -> [S x B x 2*hidden]
  ad::VarPtr<T> forward(const ad::VarPtr<T>& x) const {
    auto fwd = ad::lstm_seq(x, wi_f_, wh_f_, b_f_, false);
    auto bwd = ad::lstm_seq(x, wi_b_, wh_b_, b_b_, true);
    return ad::concat_last(fwd, bwd);
  }

 private:
  ad::VarPtr<T> wi_f_, wh_f_, b_f_, wi_b_, wh_b_, b_b_;
};

// Stack of bidirectional LSTM layers with inter-layer dropout.
template <typename T>
class BlstmStack {
 public:
  BlstmStack() = default;
  BlstmStack(ParamStore<T>* store, const std::string& prefix, int64_t in,
             int64_t hidden, int layers, double dropout, std::mt19937_64* rng)
      : dropout_(dropout) {
    int64_t d = in;
    for (int l = 0; l < layers; ++l) {
      layers_.emplace_back(store, prefix + ".l" + std::to_string(l), d, hidden, rng);
      d = 2 * hidden;
    }
  }

  ad::VarPtr<T> forward(const ad::VarPtr<T>& x, const Ctx& ctx) const {
    ad::VarPtr<T> h = x;
    for (size_t l = 0; l < layers_.size(); ++l) {
      h = layers_[l].forward(h);
      if (ctx.training && l + 1 < layers_.size())
        h = ad::dropout(h, dropout_, ctx.rng);
    }
    return h;
  }

 private:
  std::vector<BlstmLayer<T>> layers_;
  double dropout_ = 0.0;
};

// Transformer cross-attention layer: multi-head attention with the query from
// one stream and keys/values from another, each sublayer wrapped with a
// residual connection and layer norm (post-norm).
template <typename T>
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(ParamStore<T>* store, const std::string& prefix, int64_t dim,
                 int heads, int64_t ffn_dim, double dropout, std::mt19937_64* rng)
      : dim_(dim), heads_(heads), dropout_(dropout) {
    if (dim % heads != 0)
      throw std::invalid_argument("CrossAttention: dim not divisible by heads");
    wq_ = Linear<T>(store, prefix + ".wq", dim, dim, true, rng);
    wk_ = Linear<T>(store, prefix + ".wk", dim, dim, true, rng);
    wv_ = Linear<T>(store, prefix + ".wv", dim, dim, true, rng);
    wo_ = Linear<T>(store, prefix + ".wo", dim, dim, true, rng);
    ln1_ = LayerNorm<T>(store, prefix + ".ln1", dim);
    ffn1_ = Linear<T>(store, prefix + ".ffn1", dim, ffn_dim, true, rng);
    ffn2_ = Linear<T>(store, prefix + ".ffn2", ffn_dim, dim, true, rng);
    ln2_ = LayerNorm<T>(store, prefix + ".ln2", dim);
  }

  // query, kv: [T x dim]. attn_probs, when given, receives the concatenated
  // per-head attention matrices [heads*T x T].
  ad::VarPtr<T> forward(const ad::VarPtr<T>& query, const ad::VarPtr<T>& kv,
                        const Ctx& ctx, Tensor<T>* attn_probs = nullptr) const {
    const int64_t t_q = query->value.dim(0);
    const int64_t hd = dim_ / heads_;
    auto q = wq_.forward(query);
    auto k = wk_.forward(kv);
    auto v = wv_.forward(kv);

    std::vector<ad::VarPtr<T>> head_outs;
    if (attn_probs) *attn_probs = Tensor<T>({heads_ * t_q, kv->value.dim(0)});
    for (int h = 0; h < heads_; ++h) {
      auto qh = ad::slice_last(q, h * hd, hd);
      auto kh = ad::slice_last(k, h * hd, hd);
      auto vh = ad::slice_last(v, h * hd, hd);
      auto scores = ad::scale(ad::matmul_nt(qh, kh), 1.0 / std::sqrt(double(hd)));
      auto probs = ad::softmax_rows(scores);
      if (attn_probs)
        std::memcpy(attn_probs->data() + h * t_q * kv->value.dim(0),
                    probs->value.data(), sizeof(T) * probs->value.numel());
      head_outs.push_back(ad::matmul(probs, vh));
    }
    auto ctx_cat = head_outs[0];
    for (size_t h = 1; h < head_outs.size(); ++h)
      ctx_cat = ad::concat_last(ctx_cat, head_outs[h]);
    auto attn_out = wo_.forward(ctx_cat);
    if (ctx.training) attn_out = ad::dropout(attn_out, dropout_, ctx.rng);
    auto x1 = ln1_.forward(ad::add(query, attn_out));
    auto ff = ffn2_.forward(ad::relu(ffn1_.forward(x1)));
    if (ctx.training) ff = ad::dropout(ff, dropout_, ctx.rng);
    return ln2_.forward(ad::add(x1, ff));
  }

 private:
  int64_t dim_ = 0;
  int heads_ = 0;
  double dropout_ = 0.0;
  Linear<T> wq_, wk_, wv_, wo_, ffn1_, ffn2_;
  LayerNorm<T> ln1_, ln2_;
};

// Dual-path BLSTM block: intra-chunk pass over positions within each chunk,
// then inter-chunk pass across chunks, each followed by a linear projection
// back to the input width, layer norm, and a residual connection.
template <typename T>
class DualPathBlock {
 public:
  DualPathBlock() = default;
  DualPathBlock(ParamStore<T>* store, const std::string& prefix, int64_t dim,
                int64_t hidden, int64_t chunk, std::mt19937_64* rng)
      : dim_(dim), chunk_(chunk), hop_(chunk / 2) {
    intra_ = BlstmLayer<T>(store, prefix + ".intra", dim, hidden, rng);
    intra_proj_ = Linear<T>(store, prefix + ".intra_proj", 2 * hidden, dim, true, rng);
    intra_ln_ = LayerNorm<T>(store, prefix + ".intra_ln", dim);
    inter_ = BlstmLayer<T>(store, prefix + ".inter", dim, hidden, rng);
    inter_proj_ = Linear<T>(store, prefix + ".inter_proj", 2 * hidden, dim, true, rng);
    inter_ln_ = LayerNorm<T>(store, prefix + ".inter_ln", dim);
  }

  static int64_t num_chunks(int64_t rows, int64_t chunk, int64_t hop) {
    if (rows <= chunk) return 1;
    return (rows - chunk + hop - 1) / hop + 1;
  }

  // x: [T x dim] -> [T x dim]
  ad::VarPtr<T> forward(const ad::VarPtr<T>& x, const Ctx&) const {
    const int64_t rows = x->value.dim(0);
    const int64_t k = num_chunks(rows, chunk_, hop_);
    // [K x C x D]
    auto chunks = ad::chunk_rows(x, chunk_, hop_, k);
    // Intra: sequence along positions, batch across chunks -> [C x K x D]
    auto intra_in = ad::permute01(chunks);
    auto intra_h = intra_.forward(intra_in);
    auto intra_y = intra_ln_.forward(intra_proj_.forward(intra_h));
    auto intra_out = ad::add(intra_in, intra_y);
    // Inter: sequence along chunks, batch across positions -> [K x C x D]
    auto inter_in = ad::permute01(intra_out);
    auto inter_h = inter_.forward(inter_in);
    auto inter_y = inter_ln_.forward(inter_proj_.forward(inter_h));
    auto inter_out = ad::add(inter_in, inter_y);
    return ad::merge_chunks(inter_out, hop_, rows);
  }

  int64_t chunk() const { return chunk_; }
  int64_t hop() const { return hop_; }

 private:
  int64_t dim_ = 0, chunk_ = 0, hop_ = 0;
  BlstmLayer<T> intra_, inter_;
  Linear<T> intra_proj_, inter_proj_;
  LayerNorm<T> intra_ln_, inter_ln_;
};

// Convolution over channels-last video [F x H x W x C], optionally with a
// temporal window kt centred on each frame (zero padding in time).
template <typename T>
class ConvCL {
 public:
  ConvCL() = default;
  ConvCL(ParamStore<T>* store, const std::string& prefix, int64_t c_in,
         int64_t c_out, int64_t kt, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
         int64_t ph, int64_t pw, std::mt19937_64* rng)
      : kt_(kt), kh_(kh), kw_(kw), sh_(sh), sw_(sw), ph_(ph), pw_(pw), c_out_(c_out) {
    w_ = Linear<T>(store, prefix, kt * kh * kw * c_in, c_out, true, rng);
  }

  ad::VarPtr<T> forward(const ad::VarPtr<T>& x) const {
    const int64_t F = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int64_t OH = (H + 2 * ph_ - kh_) / sh_ + 1;
    const int64_t OW = (W + 2 * pw_ - kw_) / sw_ + 1;
    auto cols = ad::im2col(x, kt_, kh_, kw_, sh_, sw_, ph_, pw_);
    auto y = w_.forward(cols);
    return ad::reshape(y, {F, OH, OW, c_out_});
  }

 private:
  int64_t kt_ = 1, kh_ = 1, kw_ = 1, sh_ = 1, sw_ = 1, ph_ = 0, pw_ = 0, c_out_ = 0;
  Linear<T> w_;
};

// Basic 3x3 residual block (channels-last), stride 2 halves the spatial map
// and doubles are handled by a 1x1 projection on the skip path.
template <typename T>
class ResBlockCL {
 public:
  ResBlockCL() = default;
  ResBlockCL(ParamStore<T>* store, const std::string& prefix, int64_t c_in,
             int64_t c_out, int64_t stride, std::mt19937_64* rng)
      : project_(c_in != c_out || stride != 1) {
    conv1_ = ConvCL<T>(store, prefix + ".conv1", c_in, c_out, 1, 3, 3, stride, stride, 1, 1, rng);
    conv2_ = ConvCL<T>(store, prefix + ".conv2", c_out, c_out, 1, 3, 3, 1, 1, 1, 1, rng);
    if (project_)
      skip_ = ConvCL<T>(store, prefix + ".skip", c_in, c_out, 1, 1, 1, stride, stride, 0, 0, rng);
  }

  ad::VarPtr<T> forward(const ad::VarPtr<T>& x) const {
    auto h = conv2_.forward(ad::relu(conv1_.forward(x)));
    auto s = project_ ? skip_.forward(x) : x;
    return ad::relu(ad::add(h, s));
  }

 private:
  bool project_ = false;
  ConvCL<T> conv1_, conv2_, skip_;
};

// Temporal convolution block over a frame sequence [F x D]: depth-1 conv with
// kernel kt (same padding), relu, layer norm, residual.
template <typename T>
class TemporalConvBlock {
 public:
  TemporalConvBlock() = default;
  TemporalConvBlock(ParamStore<T>* store, const std::string& prefix, int64_t dim,
                    int64_t kt, std::mt19937_64* rng)
      : dim_(dim), kt_(kt) {
    w_ = Linear<T>(store, prefix + ".conv", kt * dim, dim, true, rng);
    ln_ = LayerNorm<T>(store, prefix + ".ln", dim);
  }

  ad::VarPtr<T> forward(const ad::VarPtr<T>& x) const {
    const int64_t F = x->value.dim(0);
    // [F x D] viewed as video [F x 1 x 1 x D] for the temporal im2col.
    auto x4 = ad::reshape(x, {F, int64_t(1), int64_t(1), dim_});
    auto cols = ad::im2col(x4, kt_, 1, 1, 1, 1, 0, 0);
    auto h = ln_.forward(ad::relu(w_.forward(cols)));
    return ad::add(x, h);
  }

 private:
  int64_t dim_ = 0, kt_ = 1;
  Linear<T> w_;
  LayerNorm<T> ln_;
};

}  // namespace nn
}  // namespace selg

#endif  // SELG_NN_H_
