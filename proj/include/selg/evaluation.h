// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Test-set evaluation: SI-SNR improvement per sample, decomposition into the
// with/without-missing-cue subsets relative to the variant's utilized cues,
// and histogram/report export.

#ifndef SELG_EVALUATION_H_
#define SELG_EVALUATION_H_

#include <string>
#include <vector>

#include "selg/datasim.h"
#include "selg/training.h"

namespace selg {

// SI-SNR improvement of the estimate over the unprocessed mixture, both
// measured against the clean target.
double si_snri_db(const Waveform& mixture, const Waveform& target,
                  const Waveform& estimate, double eps = 1e-8);

// Subset rule: for multi-cue variants, "without missing" means every cue is
// present; for unimodal variants only the utilized cue counts.
bool is_wo_missing(const CueSetPresence& presence, const VariantSpec& variant);

struct EvalRecord {
  std::string id;
  double si_snr_mix = 0.0;
  double si_snr_est = 0.0;
  double si_snri = 0.0;
  CueSetPresence presence;
  bool wo_missing = false;
};

struct Histogram {
  double lo = -30.0;
  double hi = 30.0;
  double bin_width = 2.0;
  std::vector<int64_t> counts;  // out-of-range values land in the edge bins

  std::vector<double> edges() const {
    std::vector<double> e;
    for (double x = lo; x <= hi + 1e-9; x += bin_width) e.push_back(x);
    return e;
  }
};

Histogram make_histogram(const std::vector<EvalRecord>& records,
                         double bin_width = 2.0, double lo = -30.0,
                         double hi = 30.0);

struct EvalReport {
  std::string variant;
  double mean_full = 0.0;
  double mean_wo_missing = 0.0;
  double mean_w_missing = 0.0;
  int64_t n_full = 0;
  int64_t n_wo_missing = 0;
  int64_t n_w_missing = 0;
  Histogram histogram;
  std::vector<EvalRecord> records;
};

// Runs the model over one split of the corpus (deterministic id order).
EvalReport evaluate_model(const SelgModel<float>& model, const VariantSpec& variant,
                          const Manifest& manifest, const std::string& corpus_dir,
                          const std::string& split = "test");

// Aggregation over precomputed records (exposed for tests).
EvalReport aggregate_records(const std::string& variant,
                             std::vector<EvalRecord> records);

void write_report_json(const std::string& path, const EvalReport& report);
EvalReport read_report_json(const std::string& path);
void write_records_csv(const std::string& path, const std::vector<EvalRecord>& records);
void write_histogram_csv(const std::string& path, const Histogram& hist);
void write_histogram_svg(const std::string& path, const Histogram& hist,
                         const std::string& title);

}  // namespace selg

#endif  // SELG_EVALUATION_H_
