#include "rftrack/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rft {

SplitScan delta_statistic(const EvidenceSeries& series, Epoch scan_lo, Epoch scan_hi) {
  SplitScan out;
  const auto& cands = series.candidates;
  if (cands.empty() || series.domain.size() < 2) return out;
  const Epoch d_first = series.domain.first();
  const Epoch d_last = series.domain.last();
  scan_lo = std::max(scan_lo, d_first + 1);  // prefix needs at least one epoch
  scan_hi = std::min(scan_hi, d_last);
  if (scan_lo > scan_hi) return out;

  const int nc = static_cast<int>(cands.size());
  double best_total = -std::numeric_limits<double>::infinity();
  int arg_total = 0;
  for (int c = 0; c < nc; ++c)
    if (cands[c].total > best_total) {
      best_total = cands[c].total;
      arg_total = c;
    }
  out.pre_container = cands[arg_total].container;
  out.post_container = cands[arg_total].container;

  // Per-candidate incremental prefix state: carried + evidence at domain
  // epochs before `prefix_upto`.
  std::vector<double> prefix(nc);
  std::vector<size_t> next_point(nc);
  Epoch prefix_upto = scan_lo;
  int64_t covered = series.domain.count_leq(scan_lo - 1);
  for (int c = 0; c < nc; ++c) {
    const auto& pe = cands[c];
    double s = pe.carried;
    size_t i = 0;
    while (i < pe.points.size() && pe.points[i].first < scan_lo) s += pe.points[i++].second;
    s += pe.default_value * static_cast<double>(covered - static_cast<int64_t>(i));
    prefix[c] = s;
    next_point[c] = i;
  }

  double best_split = -std::numeric_limits<double>::infinity();
  Epoch best_t = scan_lo;
  int best_pre = arg_total, best_post = arg_total;
  for (const auto& span : series.domain.spans()) {
    if (span.second < scan_lo) continue;
    if (span.first > scan_hi) break;
    for (Epoch t = std::max(span.first, scan_lo); t <= std::min(span.second, scan_hi); ++t) {
      if (t > prefix_upto) {
        // extend every prefix over domain epochs in [prefix_upto, t)
        int64_t upto_count = series.domain.count_leq(t - 1);
        for (int c = 0; c < nc; ++c) {
          const auto& pe = cands[c];
          size_t i = next_point[c];
          int64_t n_points = 0;
          while (i < pe.points.size() && pe.points[i].first < t) {
            prefix[c] += pe.points[i].second;
            ++i;
            ++n_points;
          }
          prefix[c] += pe.default_value * static_cast<double>(upto_count - covered - n_points);
          next_point[c] = i;
        }
        covered = upto_count;
        prefix_upto = t;
      }
      double lp = -std::numeric_limits<double>::infinity();
      double ls = -std::numeric_limits<double>::infinity();
      int ap = 0, as = 0;
      for (int c = 0; c < nc; ++c) {
        double p = prefix[c];
        double s = cands[c].total - p;
        if (p > lp) {
          lp = p;
          ap = c;
        }
        if (s > ls) {
          ls = s;
          as = c;
        }
      }
      ++out.n_scanned;
      if (lp + ls > best_split) {
        best_split = lp + ls;
        best_t = t;
        best_pre = ap;
        best_post = as;
      }
    }
  }
  if (out.n_scanned == 0) return out;
  double gain = best_split - best_total;
  if (gain > 0) {
    out.delta = gain;
    out.t_split = best_t;
    out.pre_container = cands[best_pre].container;
    out.post_container = cands[best_post].container;
  }
  return out;
}

Threshold calibrate_threshold(const ReadRateTable& rates, Epoch horizon, int n_samples,
                              uint64_t seed, const CalibrationOptions& opts) {
  Threshold thr;
  thr.calibration.n_samples = n_samples;
  thr.calibration.horizon = horizon;
  thr.calibration.seed = seed;
  thr.calibration.margin = opts.margin;

  ContainmentMap planted;
  planted.n_containers = opts.n_containers;
  for (int c = 0; c < opts.n_containers; ++c)
    for (int o = 0; o < opts.objects_per_container; ++o) planted.container_of.push_back(c);

  double max_stat = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    auto sample = sample_trace(rates, planted, horizon, seed + static_cast<uint64_t>(i));
    ContainmentMap init = initial_containment(sample.history, opts.em.candidate_opts);
    auto res = run_em(sample.history, rates, init, opts.em);
    for (int o = 0; o < planted.n_objects(); ++o) {
      auto series = res.evidence_for(o);
      auto scan = delta_statistic(series, sample.history.t_begin + 1, sample.history.t_end);
      max_stat = std::max(max_stat, scan.delta);
    }
  }
  thr.calibration.max_statistic = max_stat;
  thr.delta = max_stat + opts.margin;
  return thr;
}

Threshold calibrate_threshold(const ReadRateTable& rates,
                              std::span<const ObservationHistory> change_free,
                              const CalibrationOptions& opts) {
  Threshold thr;
  thr.calibration.n_samples = static_cast<int>(change_free.size());
  thr.calibration.margin = opts.margin;

  double max_stat = 0.0;
  Epoch horizon = 0;
  for (const ObservationHistory& h : change_free) {
    horizon = std::max(horizon, h.t_end - h.t_begin + 1);
    ContainmentMap init = initial_containment(h, opts.em.candidate_opts);
    auto res = run_em(h, rates, init, opts.em);
    for (int o = 0; o < h.n_objects; ++o) {
      auto series = res.evidence_for(o);
      auto scan = delta_statistic(series, h.t_begin + 1, h.t_end);
      max_stat = std::max(max_stat, scan.delta);
    }
  }
  thr.calibration.horizon = horizon;
  thr.calibration.max_statistic = max_stat;
  thr.delta = max_stat + opts.margin;
  return thr;
}

std::vector<ChangePointReport> detect(const InferenceResult& inference, const Threshold& threshold,
                                      std::vector<Epoch>& watermark, const DetectOptions& opts) {
  const int n_objects = static_cast<int>(inference.object_domains.size());
  if (static_cast<int>(watermark.size()) < n_objects)
    watermark.resize(n_objects, std::numeric_limits<Epoch>::min());

  std::vector<ChangePointReport> reports;
  for (int o = 0; o < n_objects; ++o) {
    if (inference.candidates.per_object[o].empty()) continue;
    EvidenceSeries series = inference.evidence_for(o);
    if (watermark[o] > std::numeric_limits<Epoch>::min())
      series.restrict_below(watermark[o] + 1);
    if (series.domain.size() < opts.min_domain_epochs) continue;
    Epoch hi = series.domain.last();
    Epoch lo = std::max(series.domain.first() + 1, hi - opts.scan_window + 1);
    auto scan = delta_statistic(series, lo, hi);
    if (scan.delta >= threshold.delta && scan.post_container != scan.pre_container) {
      reports.push_back({o, scan.t_split, scan.delta, scan.post_container});
      watermark[o] = scan.t_split - 1;
    }
  }
  return reports;
}

}  // namespace rft
