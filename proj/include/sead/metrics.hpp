// Copyright 2026 The sead Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEAD_METRICS_HPP_
#define SEAD_METRICS_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sead {

// Ratios beyond +-100 dB are reported as +-100 dB and flagged.
inline constexpr double kSaturationDb = 100.0;

struct MetricValue {
  double db = 0.0;
  bool saturated = false;
};

// Scale-invariant SDR: the estimate is projected onto the reference and the
// projection's power is compared with the residual's.
MetricValue SiSdr(std::span<const double> estimate, std::span<const double> reference);

// 10 log10(||ref||^2 / ||est - ref||^2).
MetricValue SnrDb(std::span<const double> estimate, std::span<const double> reference);

// SNR(adapted) - SNR(pretrained) on the same reference.
double DeltaSnr(std::span<const double> adapted, std::span<const double> pretrained,
                std::span<const double> reference);

struct MetricRecord {
  int64_t scene_id = 0;
  std::string method;
  std::string mode;
  double snr_lo = 0.0;
  double snr_hi = 0.0;
  int pair_id = 0;
  double si_sdr_db = 0.0;
  double snr_db = 0.0;
  bool saturated = false;

  bool operator==(const MetricRecord&) const = default;
};

struct TrajectoryRecord {
  int64_t scene_id = 0;
  std::string method;
  int update_idx = 0;
  double loss = 0.0;
  double probe_delta_snr_db = 0.0;

  bool operator==(const TrajectoryRecord&) const = default;
};

struct AggregateCell {
  std::string method;
  std::string mode;
  double snr_lo = 0.0;
  double snr_hi = 0.0;
  double mean_si_sdr_db = 0.0;
  double mean_snr_db = 0.0;
  size_t count = 0;
  size_t saturated_excluded = 0;

  bool operator==(const AggregateCell&) const = default;
};

struct ParamAccount {
  std::string method;
  size_t adaptable = 0;
  size_t total = 0;
  double percent() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(adaptable) / total;
  }
  bool operator==(const ParamAccount&) const = default;
};

struct AggregateReport {
  // Sorted by (method, mode, snr_lo, snr_hi).
  std::vector<AggregateCell> cells;
  std::vector<ParamAccount> params;
  // Mean probe delta-SNR per update, keyed by method.
  std::map<std::string, std::vector<double>> trajectory_means;

  bool operator==(const AggregateReport&) const = default;
};

// Means are taken over values sorted before summation, so the result does
// not depend on record order. Saturated pairs are excluded from means.
AggregateReport Aggregate(std::span<const MetricRecord> records,
                          std::span<const TrajectoryRecord> trajectory = {});

std::string ResultsCsv(std::span<const MetricRecord> records);
std::vector<MetricRecord> ParseResultsCsv(const std::string& text);
std::string TrajectoryCsv(std::span<const TrajectoryRecord> records);
std::vector<TrajectoryRecord> ParseTrajectoryCsv(const std::string& text);
std::string AggregateCsv(const AggregateReport& report);
std::vector<AggregateCell> ParseAggregateCsv(const std::string& text);

// Plain-text table: one row per (method, mode), one column group per SNR
// range. PESQ and STOI columns are kept and marked n/a.
std::string RenderReport(const AggregateReport& report);

// Shortest decimal form that parses back to the same double.
std::string FormatDouble(double v);

}  // namespace sead

#endif  // SEAD_METRICS_HPP_
