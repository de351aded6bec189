// Copyright 2026 SeLG Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "selg/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace selg {

namespace {

// Single compiled copy of the metric so that si_snri(m, t, m) cancels to an
// exact zero (two inlined copies may be vectorized differently).
__attribute__((noinline)) double metric_db(const std::vector<float>& s,
                                           const std::vector<float>& s_hat,
                                           double eps) {
  return loss::si_snr_db(s, s_hat, eps);
}

}  // namespace

double si_snri_db(const Waveform& mixture, const Waveform& target,
                  const Waveform& estimate, double eps) {
  if (mixture.size() != target.size() || estimate.size() != target.size())
    throw std::invalid_argument("si_snri: length mismatch");
  return metric_db(target.samples, estimate.samples, eps) -
         metric_db(target.samples, mixture.samples, eps);
}

bool is_wo_missing(const CueSetPresence& presence, const VariantSpec& variant) {
  bool ok = true;
  if (variant.use_lip) ok = ok && presence.has_lip;
  if (variant.use_gesture) ok = ok && presence.has_gesture;
  return ok;
}

Histogram make_histogram(const std::vector<EvalRecord>& records, double bin_width,
                         double lo, double hi) {
  if (records.empty())
    throw std::invalid_argument("make_histogram: no records");
  if (bin_width <= 0 || hi <= lo)
    throw std::invalid_argument("make_histogram: bad binning");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.bin_width = bin_width;
  const int64_t nbins = static_cast<int64_t>(std::ceil((hi - lo) / bin_width));
  h.counts.assign(nbins, 0);
  for (const auto& r : records) {
    int64_t idx = static_cast<int64_t>(std::floor((r.si_snri - lo) / bin_width));
    idx = std::clamp<int64_t>(idx, 0, nbins - 1);
    ++h.counts[idx];
  }
  return h;
}

EvalReport aggregate_records(const std::string& variant,
                             std::vector<EvalRecord> records) {
  EvalReport rep;
  rep.variant = variant;
  double sum_full = 0, sum_wo = 0, sum_w = 0;
  for (const auto& r : records) {
    sum_full += r.si_snri;
    ++rep.n_full;
    if (r.wo_missing) {
      sum_wo += r.si_snri;
      ++rep.n_wo_missing;
    } else {
      sum_w += r.si_snri;
      ++rep.n_w_missing;
    }
  }
  rep.mean_full = rep.n_full ? sum_full / rep.n_full : 0.0;
  rep.mean_wo_missing = rep.n_wo_missing ? sum_wo / rep.n_wo_missing : 0.0;
  rep.mean_w_missing = rep.n_w_missing ? sum_w / rep.n_w_missing : 0.0;
  if (!records.empty()) rep.histogram = make_histogram(records);
  rep.records = std::move(records);
  return rep;
}

EvalReport evaluate_model(const SelgModel<float>& model, const VariantSpec& variant,
                          const Manifest& manifest, const std::string& corpus_dir,
                          const std::string& split) {
  auto entries = manifest.split(split);
  if (entries.empty())
    throw std::invalid_argument("evaluate: split '" + split + "' is empty");
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry* a, const ManifestEntry* b) { return a->id < b->id; });
  std::vector<EvalRecord> records;
  records.reserve(entries.size());
  for (const ManifestEntry* e : entries) {
    MixtureSample s;
    try {
      s = load_sample(*e, corpus_dir);
    } catch (const std::exception& ex) {
      throw std::runtime_error("evaluate: sample " + e->id + ": " + ex.what());
    }
    const LipSequence* lip = s.lip ? &*s.lip : nullptr;
    const PoseSequence* gesture = s.gesture ? &*s.gesture : nullptr;
    auto estimate = model.extract(s.mixture, lip, gesture);
    EvalRecord r;
    r.id = s.id;
    r.presence = s.presence;
    r.si_snr_mix = loss::si_snr_db(s.target.samples, s.mixture.samples);
    r.si_snr_est = loss::si_snr_db(s.target.samples, estimate.samples);
    r.si_snri = r.si_snr_est - r.si_snr_mix;
    r.wo_missing = is_wo_missing(s.presence, variant);
    records.push_back(std::move(r));
  }
  return aggregate_records(variant.name, std::move(records));
}

void write_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["variant"] = report.variant;
  j["full"] = report.mean_full;
  j["wo_missing"] = report.mean_wo_missing;
  j["w_missing"] = report.mean_w_missing;
  j["counts"] = {{"full", report.n_full},
                 {"wo_missing", report.n_wo_missing},
                 {"w_missing", report.n_w_missing}};
  j["histogram"] = {{"edges", report.histogram.edges()},
                    {"counts", report.histogram.counts}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_report_json: cannot open " + path);
  os << std::setprecision(17) << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_report_json: cannot open " + path);
  nlohmann::json j;
  is >> j;
  EvalReport rep;
  rep.variant = j.at("variant").get<std::string>();
  rep.mean_full = j.at("full").get<double>();
  rep.mean_wo_missing = j.at("wo_missing").get<double>();
  rep.mean_w_missing = j.at("w_missing").get<double>();
  rep.n_full = j.at("counts").at("full").get<int64_t>();
  rep.n_wo_missing = j.at("counts").at("wo_missing").get<int64_t>();
  rep.n_w_missing = j.at("counts").at("w_missing").get<int64_t>();
  rep.histogram.counts = j.at("histogram").at("counts").get<std::vector<int64_t>>();
  const auto edges = j.at("histogram").at("edges").get<std::vector<double>>();
  if (edges.size() >= 2) {
    rep.histogram.lo = edges.front();
    rep.histogram.hi = edges.back();
    rep.histogram.bin_width = edges[1] - edges[0];
  }
  return rep;
}

void write_records_csv(const std::string& path,
                       const std::vector<EvalRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_records_csv: cannot open " + path);
  os << "id,si_snr_mix,si_snr_est,si_snri,has_lip,has_gesture,subset\n";
  os << std::setprecision(10) << std::fixed;
  for (const auto& r : records)
    os << r.id << "," << r.si_snr_mix << "," << r.si_snr_est << "," << r.si_snri
       << "," << (r.presence.has_lip ? 1 : 0) << ","
       << (r.presence.has_gesture ? 1 : 0) << ","
       << (r.wo_missing ? "wo_missing" : "w_missing") << "\n";
}

void write_histogram_csv(const std::string& path, const Histogram& hist) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_histogram_csv: cannot open " + path);
  os << "bin_lo,bin_hi,count\n";
  for (size_t i = 0; i < hist.counts.size(); ++i)
    os << hist.lo + i * hist.bin_width << "," << hist.lo + (i + 1) * hist.bin_width
       << "," << hist.counts[i] << "\n";
}

void write_histogram_svg(const std::string& path, const Histogram& hist,
                         const std::string& title) {
  const int w = 640, h = 360, ml = 50, mb = 40, mt = 30, mr = 10;
  const int plot_w = w - ml - mr, plot_h = h - mt - mb;
  int64_t max_count = 1;
  for (int64_t c : hist.counts) max_count = std::max(max_count, c);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"13\">"
      << title << "</text>\n";
  const double bw = static_cast<double>(plot_w) / hist.counts.size();
  for (size_t i = 0; i < hist.counts.size(); ++i) {
    const double bh = plot_h * static_cast<double>(hist.counts[i]) / max_count;
    svg << "<rect x=\"" << ml + i * bw << "\" y=\"" << mt + plot_h - bh
        << "\" width=\"" << bw * 0.9 << "\" height=\"" << bh
        << "\" fill=\"#4878a8\"/>\n";
  }
  // x axis labels every 5 bins
  for (size_t i = 0; i <= hist.counts.size(); i += 5)
    svg << "<text x=\"" << ml + i * bw << "\" y=\"" << h - mb + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << hist.lo + i * hist.bin_width << "</text>\n";
  svg << "<text x=\"" << ml + plot_w / 2 << "\" y=\"" << h - 6
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">SI-SNRi (dB)</text>\n"
      << "<text x=\"14\" y=\"" << mt + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
         "transform=\"rotate(-90 14 "
      << mt + plot_h / 2 << ")\">samples</text>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
      << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n"
      << "</svg>\n";
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_histogram_svg: cannot open " + path);
  os << svg.str();
}

}  // namespace selg
