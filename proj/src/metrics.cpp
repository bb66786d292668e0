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

#include "sead/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include "sead/error.hpp"

namespace sead {
namespace {

constexpr double kSaturationRatio = 1e-20;

double Dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void CheckPair(std::span<const double> est, std::span<const double> ref) {
  Require(est.size() == ref.size(), ErrorKind::kShape,
          "metric: estimate and reference lengths differ");
  Require(!ref.empty(), ErrorKind::kInvalidInput, "metric: empty reference");
  Require(Dot(ref, ref) / static_cast<double>(ref.size()) > 1e-12,
          ErrorKind::kInvalidInput, "metric: silent reference");
}

MetricValue RatioDb(double signal, double residual) {
  if (residual < kSaturationRatio * signal) return {kSaturationDb, true};
  if (signal < kSaturationRatio * residual) return {-kSaturationDb, true};
  return {10.0 * std::log10(signal / residual), false};
}

double SortedMean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ParseDouble(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  Require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::kInvalidInput,
          "csv: bad number '" + s + "'");
  return v;
}

long long ParseInt(const std::string& s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  Require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::kInvalidInput,
          "csv: bad integer '" + s + "'");
  return v;
}

std::vector<std::vector<std::string>> ReadRows(const std::string& text,
                                               const std::string& header) {
  std::istringstream in(text);
  std::string line;
  Require(static_cast<bool>(std::getline(in, line)) && line == header,
          ErrorKind::kInvalidInput, "csv: unexpected header '" + line + "'");
  const size_t width = SplitCsvLine(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = SplitCsvLine(line);
    Require(fields.size() == width, ErrorKind::kInvalidInput, "csv: wrong field count");
    rows.push_back(std::move(fields));
  }
  return rows;
}

constexpr const char* kResultsHeader =
    "scene_id,method,mode,snr_lo,snr_hi,pair_id,si_sdr_db,snr_db";
constexpr const char* kTrajectoryHeader =
    "scene_id,method,update_idx,loss,probe_delta_snr_db";
constexpr const char* kAggregateHeader =
    "method,mode,snr_lo,snr_hi,mean_si_sdr_db,mean_snr_db,count,saturated_excluded";

}  // namespace

std::string FormatDouble(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

MetricValue SiSdr(std::span<const double> estimate, std::span<const double> reference) {
  CheckPair(estimate, reference);
  const double alpha = Dot(estimate, reference) / Dot(reference, reference);
  double target = 0.0, residual = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = estimate[i] - t;
    target += t * t;
    residual += e * e;
  }
  return RatioDb(target, residual);
}

MetricValue SnrDb(std::span<const double> estimate, std::span<const double> reference) {
  CheckPair(estimate, reference);
  double signal = 0.0, residual = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double e = estimate[i] - reference[i];
    signal += reference[i] * reference[i];
    residual += e * e;
  }
  return RatioDb(signal, residual);
}

double DeltaSnr(std::span<const double> adapted, std::span<const double> pretrained,
                std::span<const double> reference) {
  return SnrDb(adapted, reference).db - SnrDb(pretrained, reference).db;
}

AggregateReport Aggregate(std::span<const MetricRecord> records,
                          std::span<const TrajectoryRecord> trajectory) {
  Require(!records.empty(), ErrorKind::kInvalidInput, "aggregate: no records");
  using Key = std::tuple<std::string, std::string, double, double>;
  struct Acc {
    std::vector<double> si_sdr, snr;
    size_t saturated = 0;
  };
  std::map<Key, Acc> cells;
  for (const MetricRecord& r : records) {
    Acc& acc = cells[{r.method, r.mode, r.snr_lo, r.snr_hi}];
    if (r.saturated) {
      ++acc.saturated;
      continue;
    }
    acc.si_sdr.push_back(r.si_sdr_db);
    acc.snr.push_back(r.snr_db);
  }
  AggregateReport report;
  for (auto& [key, acc] : cells) {
    AggregateCell c;
    std::tie(c.method, c.mode, c.snr_lo, c.snr_hi) = key;
    c.count = acc.si_sdr.size();
    c.saturated_excluded = acc.saturated;
    if (c.count > 0) {
      c.mean_si_sdr_db = SortedMean(acc.si_sdr);
      c.mean_snr_db = SortedMean(acc.snr);
    }
    report.cells.push_back(std::move(c));
  }

  std::map<std::string, std::map<int, std::vector<double>>> traj;
  for (const TrajectoryRecord& t : trajectory) {
    traj[t.method][t.update_idx].push_back(t.probe_delta_snr_db);
  }
  for (auto& [method, updates] : traj) {
    std::vector<double>& means = report.trajectory_means[method];
    // Updates are numbered from 1.
    for (auto& [idx, values] : updates) {
      Require(idx >= 1, ErrorKind::kInvalidInput, "aggregate: update_idx must be >= 1");
      if (static_cast<size_t>(idx) > means.size()) means.resize(idx, 0.0);
      means[idx - 1] = SortedMean(values);
    }
  }
  return report;
}

std::string ResultsCsv(std::span<const MetricRecord> records) {
  std::ostringstream out;
  out << kResultsHeader << "\n";
  for (const MetricRecord& r : records) {
    out << r.scene_id << "," << r.method << "," << r.mode << "," << FormatDouble(r.snr_lo)
        << "," << FormatDouble(r.snr_hi) << "," << r.pair_id << ","
        << FormatDouble(r.si_sdr_db) << "," << FormatDouble(r.snr_db) << "\n";
  }
  return out.str();
}

std::vector<MetricRecord> ParseResultsCsv(const std::string& text) {
  std::vector<MetricRecord> out;
  for (const auto& f : ReadRows(text, kResultsHeader)) {
    MetricRecord r;
    r.scene_id = ParseInt(f[0]);
    r.method = f[1];
    r.mode = f[2];
    r.snr_lo = ParseDouble(f[3]);
    r.snr_hi = ParseDouble(f[4]);
    r.pair_id = static_cast<int>(ParseInt(f[5]));
    r.si_sdr_db = ParseDouble(f[6]);
    r.snr_db = ParseDouble(f[7]);
    r.saturated = std::abs(r.si_sdr_db) >= kSaturationDb || std::abs(r.snr_db) >= kSaturationDb;
    out.push_back(std::move(r));
  }
  return out;
}

std::string TrajectoryCsv(std::span<const TrajectoryRecord> records) {
  std::ostringstream out;
  out << kTrajectoryHeader << "\n";
  for (const TrajectoryRecord& t : records) {
    out << t.scene_id << "," << t.method << "," << t.update_idx << "," << FormatDouble(t.loss)
        << "," << FormatDouble(t.probe_delta_snr_db) << "\n";
  }
  return out.str();
}

std::vector<TrajectoryRecord> ParseTrajectoryCsv(const std::string& text) {
  std::vector<TrajectoryRecord> out;
  for (const auto& f : ReadRows(text, kTrajectoryHeader)) {
    TrajectoryRecord t;
    t.scene_id = ParseInt(f[0]);
    t.method = f[1];
    t.update_idx = static_cast<int>(ParseInt(f[2]));
    t.loss = ParseDouble(f[3]);
    t.probe_delta_snr_db = ParseDouble(f[4]);
    out.push_back(std::move(t));
  }
  return out;
}

std::string AggregateCsv(const AggregateReport& report) {
  std::ostringstream out;
  out << kAggregateHeader << "\n";
  for (const AggregateCell& c : report.cells) {
    out << c.method << "," << c.mode << "," << FormatDouble(c.snr_lo) << ","
        << FormatDouble(c.snr_hi) << "," << FormatDouble(c.mean_si_sdr_db) << ","
        << FormatDouble(c.mean_snr_db) << "," << c.count << "," << c.saturated_excluded
        << "\n";
  }
  return out.str();
}

std::vector<AggregateCell> ParseAggregateCsv(const std::string& text) {
  std::vector<AggregateCell> out;
  for (const auto& f : ReadRows(text, kAggregateHeader)) {
    AggregateCell c;
    c.method = f[0];
    c.mode = f[1];
    c.snr_lo = ParseDouble(f[2]);
    c.snr_hi = ParseDouble(f[3]);
    c.mean_si_sdr_db = ParseDouble(f[4]);
    c.mean_snr_db = ParseDouble(f[5]);
    c.count = static_cast<size_t>(ParseInt(f[6]));
    c.saturated_excluded = static_cast<size_t>(ParseInt(f[7]));
    out.push_back(std::move(c));
  }
  return out;
}

std::string RenderReport(const AggregateReport& report) {
  std::set<std::pair<double, double>> ranges;
  std::vector<std::pair<std::string, std::string>> rows;
  for (const AggregateCell& c : report.cells) {
    ranges.insert({c.snr_lo, c.snr_hi});
    const std::pair<std::string, std::string> row{c.method, c.mode};
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
  }
  auto find = [&](const std::string& m, const std::string& mode, double lo,
                  double hi) -> const AggregateCell* {
    for (const AggregateCell& c : report.cells) {
      if (c.method == m && c.mode == mode && c.snr_lo == lo && c.snr_hi == hi) return &c;
    }
    return nullptr;
  };
  auto account = [&](const std::string& m) -> const ParamAccount* {
    for (const ParamAccount& p : report.params) {
      if (p.method == m) return &p;
    }
    return nullptr;
  };

  int width = 12;
  for (const auto& [method, mode] : rows) width = std::max<int>(width, method.size() + 2);
  for (const auto& [method, means] : report.trajectory_means) {
    width = std::max<int>(width, method.size() + 2);
  }

  std::ostringstream out;
  out << std::fixed;
  out << std::left << std::setw(width) << "method" << std::setw(12) << "mode" << std::right
      << std::setw(10) << "params" << std::setw(9) << "%";
  for (const auto& [lo, hi] : ranges) {
    std::ostringstream head;
    head << "SNR [" << FormatDouble(lo) << "," << FormatDouble(hi) << "] dB";
    out << " | " << std::left << std::setw(36) << head.str() << std::right;
  }
  out << "\n" << std::string(width + 31, ' ');
  for (size_t i = 0; i < ranges.size(); ++i) {
    out << " | " << std::setw(5) << "PESQ" << std::setw(6) << "STOI" << std::setw(9)
        << "SI-SDR" << std::setw(9) << "SNR" << std::setw(4) << "n" << "   ";
  }
  out << "\n";
  for (const auto& [method, mode] : rows) {
    out << std::left << std::setw(width) << method << std::setw(12) << mode << std::right;
    if (const ParamAccount* p = account(method)) {
      out << std::setw(10) << p->adaptable << std::setw(9) << std::setprecision(2)
          << p->percent();
    } else {
      out << std::setw(10) << "-" << std::setw(9) << "-";
    }
    for (const auto& [lo, hi] : ranges) {
      out << " | " << std::setw(5) << "n/a" << std::setw(6) << "n/a";
      if (const AggregateCell* c = find(method, mode, lo, hi)) {
        out << std::setprecision(2) << std::setw(9) << c->mean_si_sdr_db << std::setw(9)
            << c->mean_snr_db << std::setw(4) << c->count << "   ";
      } else {
        out << std::setw(9) << "-" << std::setw(9) << "-" << std::setw(4) << 0 << "   ";
      }
    }
    out << "\n";
  }
  if (!report.trajectory_means.empty()) {
    out << "\nmean probe delta-SNR (dB) per update\n";
    for (const auto& [method, means] : report.trajectory_means) {
      out << std::left << std::setw(width) << method << std::right;
      for (double m : means) out << std::setw(8) << std::setprecision(3) << m;
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace sead
