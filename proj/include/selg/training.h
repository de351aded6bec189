// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training: AdamW with decoupled weight decay, linear warmup (attention
// variants only) plus plateau halving on the best validation loss, gradient
// accumulation to an effective batch, early stopping, and InfoNCE
// fine-tuning from an SI-SNR-only checkpoint.

#ifndef SELG_TRAINING_H_
#define SELG_TRAINING_H_

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "selg/checkpoint.h"
#include "selg/datasim.h"
#include "selg/losses.h"
#include "selg/separator.h"

namespace selg {

struct TrainConfig {
  double lr = 5e-4;
  int64_t warmup_steps = 15000;  // applied only with attention fusion
  int plateau_patience = 6;      // epochs without BVL improvement before halving
  int early_stop = 10;           // epochs without BVL improvement before stopping
  int effective_batch = 64;
  int physical_batch = 1;        // micro-batch granularity; divides effective_batch
  double max_clip_s = 10.0;
  double weight_decay = 1e-2;
  double grad_clip_norm = 5.0;
  uint64_t seed = 1;
  int max_epochs = 100;
  int steps_per_epoch = 0;  // 0: one full pass over the training split
  bool deterministic = true;
  LossConfig loss;

  void validate() const {
    if (warmup_steps < 0) throw std::invalid_argument("TrainConfig: warmup_steps >= 0");
    if (plateau_patience >= early_stop)
      throw std::invalid_argument("TrainConfig: patience must be < early_stop");
    if (effective_batch < 1 || physical_batch < 1 ||
        effective_batch % physical_batch != 0)
      throw std::invalid_argument(
          "TrainConfig: physical_batch must divide effective_batch");
    loss.validate();
  }
  int accumulation_steps() const { return effective_batch / physical_batch; }
};

struct VariantSpec {
  std::string name = "selg";
  bool use_lip = true;
  bool use_gesture = true;
  FusionKind fusion = FusionKind::kAttention;
  bool use_infonce = false;

  void validate() const {
    if (!use_lip && !use_gesture)
      throw std::invalid_argument("VariantSpec: needs at least one cue");
    if (use_infonce && !use_gesture)
      throw std::invalid_argument("VariantSpec: InfoNCE requires the gesture cue");
  }
};

inline ModelConfig variant_model_config(const VariantSpec& v, ModelConfig base) {
  v.validate();
  base.use_lip = v.use_lip;
  base.use_gesture = v.use_gesture;
  base.fusion = v.fusion;
  return base;
}

// Learning-rate schedule: linear ramp 0 -> lr over warmup_steps (attention
// fusion only), on top of plateau halving of the base rate.
inline double lr_schedule(int64_t step, double base_lr, int64_t warmup_steps,
                          bool attention_fusion) {
  double lr = base_lr;
  if (attention_fusion && warmup_steps > 0 && step < warmup_steps)
    lr = base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  return lr;
}

// Best-validation-loss bookkeeping: halve the base rate after `patience`
// consecutive epochs without improvement, stop after `early_stop` epochs
// past the best epoch.
struct PlateauState {
  double bvl = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_best = 0;
  int plateau_count = 0;

  // Returns true when training should stop.
  bool observe(int epoch, double val_loss, int patience, int early_stop,
               double* base_lr) {
    if (val_loss < bvl) {
      bvl = val_loss;
      best_epoch = epoch;
      epochs_since_best = 0;
      plateau_count = 0;
      return false;
    }
    ++epochs_since_best;
    ++plateau_count;
    if (plateau_count >= patience) {
      *base_lr *= 0.5;
      plateau_count = 0;
    }
    return epochs_since_best >= early_stop;
  }
};

// One training example in memory (float storage, converted per scalar type).
struct TrainSample {
  std::string id;
  Waveform mixture;
  Waveform target;
  std::optional<LipSequence> lip;
  std::optional<PoseSequence> gesture;
};

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual int size() const = 0;
  virtual TrainSample get(int index) const = 0;
};

class MemorySource : public SampleSource {
 public:
  explicit MemorySource(std::vector<TrainSample> samples)
      : samples_(std::move(samples)) {}
  int size() const override { return static_cast<int>(samples_.size()); }
  TrainSample get(int index) const override { return samples_.at(index); }

 private:
  std::vector<TrainSample> samples_;
};

class ManifestSource : public SampleSource {
 public:
  ManifestSource(std::string root, std::vector<const ManifestEntry*> entries)
      : root_(std::move(root)), entries_(std::move(entries)) {}
  int size() const override { return static_cast<int>(entries_.size()); }
  TrainSample get(int index) const override {
    auto s = load_sample(*entries_.at(index), root_);
    TrainSample out;
    out.id = s.id;
    out.mixture = std::move(s.mixture);
    out.target = std::move(s.target);
    out.lip = std::move(s.lip);
    out.gesture = std::move(s.gesture);
    return out;
  }

 private:
  std::string root_;
  std::vector<const ManifestEntry*> entries_;
};

struct EpochLog {
  int epoch = 0;
  int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double bvl = 0.0;
};

// AdamW with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step(const std::vector<ad::VarPtr<T>>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Tensor<T>::zeros(p->value.shape()));
        v_.push_back(Tensor<T>::zeros(p->value.shape()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      if (!p->has_grad) continue;
      T* w = p->value.data();
      const T* g = p->grad.data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      const int64_t n = p->value.numel();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) {
        m[i] = static_cast<T>(b1_ * m[i] + (1.0 - b1_) * g[i]);
        v[i] = static_cast<T>(b2_ * v[i] + (1.0 - b2_) * double(g[i]) * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] = static_cast<T>(w[i] - lr_ * (mhat / (std::sqrt(vhat) + eps_) +
                                            wd_ * w[i]));
      }
    }
  }

  int64_t steps_taken() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// Global-norm gradient clipping; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<ad::VarPtr<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p->has_grad)
      for (int64_t i = 0; i < p->grad.numel(); ++i)
        sq += static_cast<double>(p->grad[i]) * p->grad[i];
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (const auto& p : params)
      if (p->has_grad)
        kernels::scale(p->grad.data(), s, p->grad.data(), p->grad.numel());
  }
  return norm;
}

template <typename T>
class Trainer {
 public:
  Trainer(const ModelConfig& mcfg, const VariantSpec& variant,
          const TrainConfig& tcfg, std::string out_dir)
      : variant_(variant),
        cfg_(tcfg),
        out_dir_(std::move(out_dir)),
        model_(std::make_unique<SelgModel<T>>(variant_model_config(variant, mcfg))),
        opt_(tcfg.lr, tcfg.weight_decay),
        dropout_rng_(mix64(tcfg.seed, 0xd201ULL)) {
    cfg_.validate();
    variant_.validate();
    if (!out_dir_.empty()) std::filesystem::create_directories(out_dir_);
  }

  SelgModel<T>& model() { return *model_; }
  const VariantSpec& variant() const { return variant_; }

  // Fine-tuning entry: restores weights from a checkpoint trained with the
  // SI-SNR loss alone and enables the InfoNCE term; schedule state resets.
  void load_base_checkpoint(const std::string& path, bool enable_infonce) {
    if constexpr (std::is_same_v<T, float>) {
      auto ckpt = read_checkpoint(path);
      load_into(model_.get(), ckpt);
      if (enable_infonce) {
        if (ckpt.extra.contains("variant") &&
            ckpt.extra["variant"].value("use_infonce", false))
          throw std::invalid_argument(
              "load_base_checkpoint: base checkpoint was already trained with "
              "InfoNCE");
        variant_.use_infonce = true;
        variant_.validate();
      }
    } else {
      throw std::invalid_argument("checkpoints are float32-only");
    }
  }

  // Frozen lip-embedding provider for gesture-only InfoNCE fine-tuning: the
  // lip embeddings come from a lip-using model's encoder (typically the
  // lip-only baseline checkpoint).
  void set_lip_provider(const std::string& ckpt_path) {
    if constexpr (std::is_same_v<T, float>) {
      auto ckpt = read_checkpoint(ckpt_path);
      if (!ckpt.config.use_lip)
        throw std::invalid_argument("set_lip_provider: checkpoint has no lip encoder");
      lip_provider_ = std::make_unique<SelgModel<T>>(ckpt.config);
      load_into(lip_provider_.get(), ckpt);
    } else {
      throw std::invalid_argument("checkpoints are float32-only");
    }
  }

  double lr_at(int64_t step) const {
    return lr_schedule(step, base_lr_, cfg_.warmup_steps,
                       variant_.fusion == FusionKind::kAttention);
  }

  struct Result {
    double best_val_loss = 0.0;
    int best_epoch = -1;
    int64_t total_steps = 0;
    std::vector<EpochLog> log;
    bool early_stopped = false;
  };

  // Per-sample loss with mandatory grad scaling: contributes loss/effective
  // batch so that one optimizer step equals the mean over the batch.
  ad::VarPtr<T> sample_loss(const TrainSample& sample, const nn::Ctx& ctx) {
    TrainSample s = truncate_to_clip(sample, cfg_.max_clip_s);
    auto res = model_->extract_full(s.mixture, s.lip ? &*s.lip : nullptr,
                                    s.gesture ? &*s.gesture : nullptr, ctx);
    auto target = ad::constant(waveform_to_tensor<T>(s.target));
    auto base = loss::si_snr_loss(target, res.s_hat, cfg_.loss.eps);
    if (!variant_.use_infonce) return base;
    // InfoNCE at the native 15 FPS rate; skipped when either embedding is
    // unavailable for this sample.
    ad::VarPtr<T> v_lip = res.v_lip_native;
    if (!v_lip && lip_provider_ && s.lip) {
      ad::NoGradGuard guard;
      nn::Ctx eval_ctx;
      v_lip = lip_provider_->embed_lip(*s.lip, eval_ctx);
    }
    if (!v_lip || !res.v_gesture_native) return base;
    return ad::add(base, ad::scale(loss::info_nce(v_lip, res.v_gesture_native,
                                                  cfg_.loss.kappa),
                                   cfg_.loss.infonce_weight));
  }

  Result train(const SampleSource& train_src, const SampleSource& val_src,
               const std::function<bool(int64_t step)>& stop_cb = nullptr) {
    Result result;
    base_lr_ = cfg_.lr;
    int64_t step = 0;
    PlateauState plateau;
    std::ofstream log_file;
    if (!out_dir_.empty()) log_file.open(out_dir_ + "/train_log.jsonl");

    std::vector<int> order(train_src.size());
    for (int i = 0; i < train_src.size(); ++i) order[i] = i;

    bool stop = false;
    for (int epoch = 0; epoch < cfg_.max_epochs && !stop; ++epoch) {
      std::mt19937_64 shuffle_rng(mix64(cfg_.seed, 0xe90c ^ (uint64_t)epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      const int steps_this_epoch =
          cfg_.steps_per_epoch > 0
              ? cfg_.steps_per_epoch
              : std::max(1, train_src.size() / cfg_.effective_batch);

      double train_loss_acc = 0.0;
      int64_t train_loss_count = 0;
      int cursor = 0;
      for (int s = 0; s < steps_this_epoch && !stop; ++s) {
        model_->store().zero_grads();
        std::vector<std::string> batch_ids;
        double batch_loss = 0.0;
        for (int b = 0; b < cfg_.effective_batch; ++b) {
          const int idx = order[cursor % order.size()];
          cursor = (cursor + 1) % static_cast<int>(order.size());
          auto sample = train_src.get(idx);
          batch_ids.push_back(sample.id);
          nn::Ctx ctx{true, &dropout_rng_};
          auto l = ad::scale(sample_loss(sample, ctx),
                             1.0 / cfg_.effective_batch);
          if (!std::isfinite(static_cast<double>(l->value[0]))) {
            std::string ids;
            for (const auto& id : batch_ids) ids += id + " ";
            throw std::runtime_error("NaN loss at step " + std::to_string(step) +
                                     ", samples: " + ids);
          }
          batch_loss += static_cast<double>(l->value[0]);
          ad::backward(l);
        }
        clip_grad_norm(model_->store().params(), cfg_.grad_clip_norm);
        opt_.set_lr(lr_at(step));
        opt_.step(model_->store().params());
        ++step;
        train_loss_acc += batch_loss;
        ++train_loss_count;
        if (stop_cb && stop_cb(step)) stop = true;
      }

      const double val_loss = evaluate_loss(val_src);
      EpochLog log;
      log.epoch = epoch;
      log.step = step;
      log.lr = lr_at(step);
      log.train_loss = train_loss_count ? train_loss_acc / train_loss_count : 0.0;
      log.val_loss = val_loss;

      const bool improved = val_loss < plateau.bvl;
      if (plateau.observe(epoch, val_loss, cfg_.plateau_patience, cfg_.early_stop,
                          &base_lr_)) {
        stop = true;
        result.early_stopped = true;
      }
      if (improved) {
        result.best_epoch = epoch;
        save_best();
      }
      log.bvl = plateau.bvl;
      result.log.push_back(log);
      if (log_file) {
        log_file << "{\"epoch\":" << log.epoch << ",\"step\":" << log.step
                 << ",\"lr\":" << log.lr << ",\"train_loss\":" << log.train_loss
                 << ",\"val_loss\":" << log.val_loss << ",\"bvl\":" << log.bvl
                 << "}\n";
        log_file.flush();
      }
    }
    result.best_val_loss = plateau.bvl;
    result.total_steps = step;
    if (result.best_epoch < 0) save_best();
    return result;
  }

  // Mean SI-SNR validation loss (SI-SNR only, also during fine-tuning, so the
  // best-validation-loss stays comparable across stages).
  double evaluate_loss(const SampleSource& src) {
    ad::NoGradGuard guard;
    nn::Ctx ctx;  // eval
    double acc = 0.0;
    for (int i = 0; i < src.size(); ++i) {
      auto s = truncate_to_clip(src.get(i), cfg_.max_clip_s);
      auto res = model_->extract_full(s.mixture, s.lip ? &*s.lip : nullptr,
                                      s.gesture ? &*s.gesture : nullptr, ctx);
      acc += -loss::si_snr_db(s.target.samples, res.waveform.samples, cfg_.loss.eps);
    }
    return src.size() ? acc / src.size() : 0.0;
  }

  void save_checkpoint_to(const std::string& path) const {
    if constexpr (std::is_same_v<T, float>) {
      nlohmann::json extra;
      extra["variant"] = {{"name", variant_.name},
                          {"use_lip", variant_.use_lip},
                          {"use_gesture", variant_.use_gesture},
                          {"fusion", fusion_name(variant_.fusion)},
                          {"use_infonce", variant_.use_infonce}};
      selg::save_checkpoint(path, model_->config(), model_->store(), extra);
    }
  }

  static TrainSample truncate_to_clip(TrainSample s, double max_clip_s) {
    const int64_t max_len = static_cast<int64_t>(max_clip_s * kSampleRate);
    if (s.mixture.size() <= max_len) return s;
    s.mixture.samples.resize(max_len);
    s.target.samples.resize(max_len);
    const int64_t frames = max_len * kVisualFps / kSampleRate;
    if (s.lip && s.lip->num_frames() > frames) {
      Tensor<float> t({frames, s.lip->height(), s.lip->width()});
      std::copy_n(s.lip->frames.data(), t.numel(), t.data());
      s.lip->frames = std::move(t);
    }
    if (s.gesture && s.gesture->num_frames() > frames) {
      Tensor<float> t({frames, kNumJoints, 3});
      std::copy_n(s.gesture->frames.data(), t.numel(), t.data());
      s.gesture->frames = std::move(t);
    }
    return s;
  }

 private:
  void save_best() {
    if (!out_dir_.empty()) save_checkpoint_to(out_dir_ + "/best.ckpt");
  }

  VariantSpec variant_;
  TrainConfig cfg_;
  std::string out_dir_;
  std::unique_ptr<SelgModel<T>> model_;
  std::unique_ptr<SelgModel<T>> lip_provider_;
  AdamW<T> opt_;
  std::mt19937_64 dropout_rng_;
  double base_lr_ = 5e-4;
};

}  // namespace selg

#endif  // SELG_TRAINING_H_
