#ifndef HELIOX_METRICS_HPP
#define HELIOX_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "heliox/core.hpp"
#include "heliox/csv.hpp"
#include "heliox/error.hpp"
#include "heliox/features.hpp"
#include "heliox/time.hpp"

namespace heliox {

/// KJ/m^2 per hour to mean W/m^2 over that hour.
inline constexpr double kKjPerHourPerWatt = 3.6;

inline constexpr double kDaytimeIrradiance = 20.0;  // KJ/m^2
inline constexpr double kDaytimeClearSky = 1.0;     // W/m^2

/// One forecast value at one step. All irradiance in KJ/m^2, clear-sky in W/m^2.
struct EvalRecord {
  std::string aoi_id;
  Instant issue_time{};
  int step = 1;  // 1..6
  double y = 0.0;
  double y_hat = 0.0;
  double ghi = 0.0;       // clear-sky at valid time
  double ghi_prev = 0.0;  // clear-sky at issue time
  double i_prev = 0.0;    // observed irradiance at issue time
  // Labels used for grouping.
  std::string scheme;
  std::string learner;
  std::string combo;

  [[nodiscard]] Instant valid_time() const { return issue_time + std::chrono::hours{step}; }

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

inline bool daytime_mask(const EvalRecord& r) { return r.y > kDaytimeIrradiance && r.ghi > kDaytimeClearSky; }

namespace detail {

/// Stable evaluation order so that sums do not depend on input order.
inline std::vector<const EvalRecord*> canonical_order(std::span<const EvalRecord> records) {
  std::vector<const EvalRecord*> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](const EvalRecord* a, const EvalRecord* b) {
    if (a->aoi_id != b->aoi_id) return a->aoi_id < b->aoi_id;
    if (a->issue_time != b->issue_time) return a->issue_time < b->issue_time;
    if (a->step != b->step) return a->step < b->step;
    if (a->y != b->y) return a->y < b->y;
    return a->y_hat < b->y_hat;
  });
  return out;
}

}  // namespace detail

/// RMSE over daytime records divided by their mean observation.
inline double nrmse(std::span<const EvalRecord> records) {
  double se = 0.0;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto* r : detail::canonical_order(records)) {
    if (!daytime_mask(*r)) continue;
    se += (r->y - r->y_hat) * (r->y - r->y_hat);
    sum += r->y;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::EmptyAfterMask, "no daytime records");
  const double mean = sum / static_cast<double>(n);
  if (!(mean > 0.0)) throw Error(ErrorCode::ZeroMean, "mean observation is zero");
  return std::sqrt(se / static_cast<double>(n)) / mean;
}

/// Clear-sky-ratio persistence: the last observed irradiance-to-clear-sky
/// ratio carried forward and rescaled by each future step's clear-sky value.
inline std::array<double, kHorizon> persistence_forecast(double i_prev, double ghi_prev,
                                                         std::span<const double, kHorizon> ghi_future) {
  if (!(ghi_prev > kDaytimeClearSky)) throw Error(ErrorCode::NightIssue, "clear-sky at issue " + std::to_string(ghi_prev));
  const double ratio = (i_prev / kKjPerHourPerWatt) / ghi_prev;
  std::array<double, kHorizon> out{};
  for (int s = 0; s < kHorizon; ++s)
    out[static_cast<std::size_t>(s)] = ratio * ghi_future[static_cast<std::size_t>(s)] * kKjPerHourPerWatt;
  return out;
}

/// A record takes part in the skill score when both it and its issue-time
/// observation are daytime and they fall in the same calendar month. For
/// step 1 this is exactly the set of consecutive daytime hour pairs.
inline bool skill_eligible(const EvalRecord& r) {
  return daytime_mask(r) && r.ghi_prev > kDaytimeClearSky && r.i_prev > kDaytimeIrradiance &&
         month_key(r.issue_time) == month_key(r.valid_time());
}

struct SkillResult {
  double s = 0.0;
  std::size_t months_used = 0;
  std::size_t months_skipped = 0;
  std::size_t records = 0;
};

/// Forecast skill with calendar-month periods:
///   U = rms((y - y_hat) / ghi), V = rms(i_prev / ghi_prev - y / ghi),
///   S = mean over months of (1 - U / V).
/// Clear-sky ratios use mean power (KJ/m^2 / 3.6). Months with V = 0 or
/// fewer than two eligible records are skipped and counted.
inline SkillResult skill_s(std::span<const EvalRecord> records) {
  struct Acc {
    double u = 0.0, v = 0.0;
    std::size_t n = 0;
  };
  std::map<int, Acc> months;
  for (const auto* r : detail::canonical_order(records)) {
    if (!skill_eligible(*r)) continue;
    const double ratio = r->y / (kKjPerHourPerWatt * r->ghi);
    const double err = (r->y - r->y_hat) / (kKjPerHourPerWatt * r->ghi);
    const double prev_ratio = r->i_prev / (kKjPerHourPerWatt * r->ghi_prev);
    auto& a = months[month_key(r->valid_time())];
    a.u += err * err;
    a.v += (prev_ratio - ratio) * (prev_ratio - ratio);
    ++a.n;
  }
  SkillResult out;
  double total = 0.0;
  for (const auto& [key, a] : months) {
    if (a.n < 2 || !(a.v > 0.0)) {
      ++out.months_skipped;
      continue;
    }
    const double u = std::sqrt(a.u / static_cast<double>(a.n));
    const double v = std::sqrt(a.v / static_cast<double>(a.n));
    total += 1.0 - u / v;
    ++out.months_used;
    out.records += a.n;
  }
  if (out.months_used == 0) throw Error(ErrorCode::NoValidPeriods, "no month with defined variability");
  out.s = total / static_cast<double>(out.months_used);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

enum class GroupKey { Aoi, Step, Month, Scheme, Learner, Combo };

inline std::string_view to_string(GroupKey k) {
  switch (k) {
    case GroupKey::Aoi: return "aoi";
    case GroupKey::Step: return "step";
    case GroupKey::Month: return "month";
    case GroupKey::Scheme: return "scheme";
    case GroupKey::Learner: return "learner";
    case GroupKey::Combo: return "combo";
  }
  return "aoi";
}

inline GroupKey parse_group_key(std::string_view s) {
  for (auto k : {GroupKey::Aoi, GroupKey::Step, GroupKey::Month, GroupKey::Scheme, GroupKey::Learner, GroupKey::Combo})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvalidConfig, "unknown group key '" + std::string(s) + "'");
}

inline std::string month_label(Instant t) {
  using namespace std::chrono;
  year_month_day ymd{floor<days>(t)};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()));
  return buf;
}

inline std::string group_value(const EvalRecord& r, GroupKey k) {
  switch (k) {
    case GroupKey::Aoi: return r.aoi_id;
    case GroupKey::Step: return std::to_string(r.step);
    case GroupKey::Month: return month_label(r.valid_time());
    case GroupKey::Scheme: return r.scheme;
    case GroupKey::Learner: return r.learner;
    case GroupKey::Combo: return r.combo;
  }
  return {};
}

struct MetricCell {
  std::vector<std::string> keys;  // values, in report group_by order
  std::string metric;             // "nrmse" or "skill_s"
  double mean = 0.0;
  std::optional<double> std;      // sample std across AOIs; absent for a single AOI
  std::size_t n = 0;              // daytime records in the group
  std::size_t n_aois = 0;
  std::size_t months_skipped = 0;

  friend bool operator==(const MetricCell&, const MetricCell&) = default;
};

struct MetricReport {
  std::vector<GroupKey> group_by;
  std::vector<MetricCell> cells;
};

inline double sample_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::optional<double> sample_std(std::span<const double> v) {
  if (v.size() < 2) return std::nullopt;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// nRMSE and skill per group. When AOI is not a grouping key, each metric is
/// computed per AOI and summarised as mean and sample std across AOIs.
inline MetricReport aggregate(std::span<const EvalRecord> records, std::vector<GroupKey> group_by) {
  MetricReport report;
  report.group_by = group_by;
  const bool per_aoi = std::find(group_by.begin(), group_by.end(), GroupKey::Aoi) != group_by.end();

  std::map<std::vector<std::string>, std::map<std::string, std::vector<EvalRecord>>> groups;
  for (const auto& r : records) {
    std::vector<std::string> key;
    for (auto k : group_by) key.push_back(group_value(r, k));
    groups[key][r.aoi_id].push_back(r);
  }
  for (const auto& [key, by_aoi] : groups) {
    std::vector<double> nr, sk;
    std::size_t n_day = 0, skipped = 0;
    for (const auto& [aoi, recs] : by_aoi) {
      n_day += static_cast<std::size_t>(std::count_if(recs.begin(), recs.end(), daytime_mask));
      try {
        nr.push_back(nrmse(recs));
      } catch (const Error&) {
      }
      try {
        const auto s = skill_s(recs);
        sk.push_back(s.s);
        skipped += s.months_skipped;
      } catch (const Error&) {
      }
    }
    if (n_day == 0) continue;
    auto emit = [&](const char* name, const std::vector<double>& vals, std::size_t months_skipped) {
      if (vals.empty()) return;
      MetricCell c;
      c.keys = key;
      c.metric = name;
      c.mean = sample_mean(vals);
      c.std = per_aoi ? std::nullopt : sample_std(vals);
      c.n = n_day;
      c.n_aois = vals.size();
      c.months_skipped = months_skipped;
      report.cells.push_back(std::move(c));
    };
    emit("nrmse", nr, 0);
    emit("skill_s", sk, skipped);
  }
  return report;
}

inline void write_report_csv(std::ostream& out, const MetricReport& report) {
  for (auto k : report.group_by) out << to_string(k) << ',';
  out << "metric,mean,std,n\n";
  for (const auto& c : report.cells) {
    for (const auto& v : c.keys) out << csv::escape(v) << ',';
    out << c.metric << ',' << csv::format_double(c.mean) << ',' << (c.std ? csv::format_double(*c.std) : "") << ','
        << c.n << '\n';
  }
}

inline void write_report_jsonl(std::ostream& out, const MetricReport& report) {
  for (const auto& c : report.cells) {
    nlohmann::json j;
    for (std::size_t i = 0; i < report.group_by.size(); ++i) j[std::string(to_string(report.group_by[i]))] = c.keys[i];
    j["metric"] = c.metric;
    j["mean"] = c.mean;
    j["std"] = c.std ? nlohmann::json(*c.std) : nlohmann::json(nullptr);
    j["n"] = c.n;
    j["n_aois"] = c.n_aois;
    j["months_skipped"] = c.months_skipped;
    out << j.dump() << '\n';
  }
}

/// Parses a report written by write_report_csv.
inline MetricReport read_report_csv(std::istream& in) {
  MetricReport report;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "empty report");
  auto header = csv::split_line(line);
  if (header.size() < 4 || header[header.size() - 4] != "metric")
    throw Error(ErrorCode::MalformedRow, "report header");
  const std::size_t nkeys = header.size() - 4;
  for (std::size_t i = 0; i < nkeys; ++i) report.group_by.push_back(parse_group_key(header[i]));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    if (f.size() != header.size()) throw Error(ErrorCode::MalformedRow, "report line " + std::to_string(line_no));
    MetricCell c;
    c.keys.assign(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(nkeys));
    c.metric = f[nkeys];
    auto mean = csv::parse_double(f[nkeys + 1]);
    auto n = csv::parse_double(f[nkeys + 3]);
    if (!mean || !n) throw Error(ErrorCode::MalformedRow, "report line " + std::to_string(line_no));
    c.mean = *mean;
    c.std = csv::parse_double(f[nkeys + 2]);
    c.n = static_cast<std::size_t>(*n);
    report.cells.push_back(std::move(c));
  }
  return report;
}

inline constexpr const char* kRecordsHeader = "aoi_id,scheme,learner,combo,issue_time,step,valid_time,y,y_hat,ghi,ghi_prev,i_prev";

inline void write_records_csv(std::ostream& out, std::span<const EvalRecord> records) {
  out << kRecordsHeader << '\n';
  for (const auto& r : records) {
    out << csv::escape(r.aoi_id) << ',' << r.scheme << ',' << r.learner << ',' << r.combo << ','
        << format_iso8601(r.issue_time) << ',' << r.step << ',' << format_iso8601(r.valid_time()) << ','
        << csv::format_double(r.y) << ',' << csv::format_double(r.y_hat) << ',' << csv::format_double(r.ghi) << ','
        << csv::format_double(r.ghi_prev) << ',' << csv::format_double(r.i_prev) << '\n';
  }
}

inline std::vector<EvalRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) throw Error(ErrorCode::MalformedRow, "records header");
  std::vector<EvalRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    const std::string where = "records line " + std::to_string(line_no);
    if (f.size() != 12) throw Error(ErrorCode::MalformedRow, where);
    EvalRecord r;
    r.aoi_id = f[0];
    r.scheme = f[1];
    r.learner = f[2];
    r.combo = f[3];
    auto issue = parse_iso8601(f[4]);
    auto step = csv::parse_double(f[5]);
    auto y = csv::parse_double(f[7]);
    auto yh = csv::parse_double(f[8]);
    auto g = csv::parse_double(f[9]);
    auto gp = csv::parse_double(f[10]);
    auto ip = csv::parse_double(f[11]);
    if (!issue || !step || !y || !yh || !g || !gp || !ip) throw Error(ErrorCode::MalformedRow, where);
    r.issue_time = *issue;
    r.step = static_cast<int>(*step);
    if (r.step < 1 || r.step > kHorizon) throw Error(ErrorCode::MalformedRow, where + ": step");
    r.y = *y;
    r.y_hat = *yh;
    r.ghi = *g;
    r.ghi_prev = *gp;
    r.i_prev = *ip;
    out.push_back(std::move(r));
  }
  return out;
}

/// Expands one window and its forecast (KJ/m^2) into six records.
inline void append_records(std::vector<EvalRecord>& out, const SampleWindow& w,
                           std::span<const double, kHorizon> forecast_kj, const std::string& scheme,
                           const std::string& learner) {
  const auto& last = w.past.back();
  for (int s = 0; s < kHorizon; ++s) {
    const auto& f = w.future[static_cast<std::size_t>(s)];
    EvalRecord r;
    r.aoi_id = w.aoi_id;
    r.issue_time = w.issue_time;
    r.step = s + 1;
    r.y = f.target_raw;
    r.y_hat = forecast_kj[static_cast<std::size_t>(s)];
    r.ghi = f.clearsky_ghi;
    r.ghi_prev = last.clearsky_ghi;
    r.i_prev = last.irradiance_raw;
    r.scheme = scheme;
    r.learner = learner;
    r.combo = std::string(to_string(w.combo));
    out.push_back(std::move(r));
  }
}

}  // namespace heliox

#endif  // HELIOX_METRICS_HPP
