// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training objectives: scale-invariant SNR on waveforms and the InfoNCE
// embedding-alignment loss between gesture and lip frame sequences.

#ifndef SELG_LOSSES_H_
#define SELG_LOSSES_H_

#include <cmath>
#include <stdexcept>
#include <vector>

#include "selg/autodiff.h"

namespace selg {

struct LossConfig {
  double kappa = 0.07;         // InfoNCE temperature
  double eps = 1e-8;           // numerical floor
  double infonce_weight = 1.0;

  void validate() const {
    if (kappa <= 0) throw std::invalid_argument("LossConfig: kappa must be > 0");
    if (eps <= 0) throw std::invalid_argument("LossConfig: eps must be > 0");
  }
};

namespace loss {

constexpr double kLn10 = 2.302585092994045684;

// SI-SNR in dB: 20*log10(|alpha*s| / |s_hat - alpha*s|) with
// alpha = <s_hat, s> / |s|^2. The floor eps is added inside both norms and
// the log argument. Differentiable w.r.t. s_hat (and s).
template <typename T>
ad::VarPtr<T> si_snr(const ad::VarPtr<T>& s, const ad::VarPtr<T>& s_hat,
                     double eps = 1e-8) {
  if (!s->value.same_shape(s_hat->value))
    throw std::invalid_argument("si_snr: length mismatch");
  if (s->value.numel() == 0) throw std::invalid_argument("si_snr: empty signals");
  bool all_zero = true;
  for (int64_t i = 0; i < s->value.numel(); ++i)
    if (s->value[i] != T(0)) {
      all_zero = false;
      break;
    }
  if (all_zero) throw std::invalid_argument("si_snr: reference is identically zero");

  auto alpha = ad::div(ad::dot(s_hat, s), ad::add_const(ad::dot(s, s), eps));
  auto proj = ad::mul_scalar(s, alpha);
  auto err = ad::sub(s_hat, proj);
  auto num = ad::add_const(ad::sqrt_op(ad::dot(proj, proj)), eps);
  auto den = ad::add_const(ad::sqrt_op(ad::dot(err, err)), eps);
  auto ratio = ad::add_const(ad::div(num, den), eps);
  return ad::scale(ad::log_op(ratio), 20.0 / kLn10);
}

template <typename T>
ad::VarPtr<T> si_snr_loss(const ad::VarPtr<T>& s, const ad::VarPtr<T>& s_hat,
                          double eps = 1e-8) {
  return ad::scale(si_snr(s, s_hat, eps), -1.0);
}

// Plain-double metric path used by evaluation; same formula as si_snr.
inline double si_snr_db(const std::vector<float>& s, const std::vector<float>& s_hat,
                        double eps = 1e-8) {
  if (s.size() != s_hat.size())
    throw std::invalid_argument("si_snr_db: length mismatch");
  if (s.empty()) throw std::invalid_argument("si_snr_db: empty signals");
  double dot = 0.0, ss = 0.0;
  bool all_zero = true;
  for (size_t i = 0; i < s.size(); ++i) {
    dot += static_cast<double>(s_hat[i]) * s[i];
    ss += static_cast<double>(s[i]) * s[i];
    all_zero = all_zero && s[i] == 0.0f;
  }
  if (all_zero) throw std::invalid_argument("si_snr_db: reference is identically zero");
  const double alpha = dot / (ss + eps);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double p = alpha * s[i];
    const double e = s_hat[i] - p;
    num += p * p;
    den += e * e;
  }
  return 20.0 * std::log10((std::sqrt(num) + eps) / (std::sqrt(den) + eps) + eps);
}

// InfoNCE alignment of gesture embeddings to lip embeddings (natural log,
// dot-product similarity, temperature kappa). The positive pair for step i is
// the lip embedding at step i; negatives are the lip embeddings at all other
// steps of the same sequence. v_lip is detached internally, so no gradient
// reaches its producer. Returns the per-utterance sum over steps.
template <typename T>
ad::VarPtr<T> info_nce(const ad::VarPtr<T>& v_lip, const ad::VarPtr<T>& v_gesture,
                       double kappa = 0.07) {
  if (kappa <= 0) throw std::invalid_argument("info_nce: kappa must be > 0");
  if (v_lip->value.ndim() != 2 || v_gesture->value.ndim() != 2)
    throw std::invalid_argument("info_nce: need [T x D] embeddings");
  if (!v_lip->value.same_shape(v_gesture->value))
    throw std::invalid_argument("info_nce: shape mismatch");
  if (v_lip->value.dim(0) == 0) throw std::invalid_argument("info_nce: T == 0");

  auto lip = ad::detach(v_lip);
  // sims[i, j] = V_g^i . V_l^j / kappa
  auto sims = ad::scale(ad::matmul_nt(v_gesture, lip), 1.0 / kappa);
  // sum_i (logsumexp_j sims[i, j] - sims[i, i]); stable via max subtraction.
  auto lse = ad::logsumexp_rows(sims);
  auto pos = ad::take_diag(sims);
  return ad::sum_all(ad::sub(lse, pos));
}

// Combined objective for one sample: si_snr_loss plus the weighted InfoNCE
// term when enabled and both embeddings are available (a missing cue skips
// the term for that sample).
template <typename T>
ad::VarPtr<T> total_loss(const ad::VarPtr<T>& s, const ad::VarPtr<T>& s_hat,
                         const ad::VarPtr<T>& v_lip, const ad::VarPtr<T>& v_gesture,
                         const LossConfig& cfg, bool use_infonce) {
  cfg.validate();
  auto base = si_snr_loss(s, s_hat, cfg.eps);
  if (!use_infonce || !v_lip || !v_gesture) return base;
  return ad::add(base, ad::scale(info_nce(v_lip, v_gesture, cfg.kappa),
                                 cfg.infonce_weight));
}

}  // namespace loss
}  // namespace selg

#endif  // SELG_LOSSES_H_
