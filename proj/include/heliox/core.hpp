#ifndef HELIOX_CORE_HPP
#define HELIOX_CORE_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "heliox/csv.hpp"
#include "heliox/error.hpp"
#include "heliox/time.hpp"

namespace heliox {

struct AoiSite {
  std::string id;
  std::string name;
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]

  friend bool operator==(const AoiSite&, const AoiSite&) = default;
};

inline bool coordinates_in_range(double lat, double lon) {
  return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

/// One hourly observation. Irradiance is hourly-integrated KJ/m^2; weather
/// fields are absent rather than sentinel-filled when the source had no value.
struct ObservationRow {
  Instant timestamp{};
  double irradiance = 0.0;
  std::optional<double> cloud_pct;
  std::optional<double> precip_mm_hr;
  std::optional<double> pressure_mb;
  std::optional<double> rel_humidity_pct;
  std::optional<double> temp_k;
  std::optional<double> wind_speed_ms;
  std::optional<double> wind_dir_deg;
  /// Provider clear-sky GHI (W/m^2); overrides the computed model when present.
  std::optional<double> clearsky_ghi_wm2;

  [[nodiscard]] bool weather_complete() const {
    return cloud_pct && precip_mm_hr && pressure_mb && rel_humidity_pct && temp_k && wind_speed_ms &&
           wind_dir_deg;
  }

  friend bool operator==(const ObservationRow&, const ObservationRow&) = default;
};

using Series = std::vector<ObservationRow>;

/// Registry plus per-AOI time-sorted observations. Immutable once built;
/// construction validates that every series belongs to a registered AOI and
/// that timestamps are strictly increasing.
class SeriesStore {
 public:
  SeriesStore() = default;

  SeriesStore(std::vector<AoiSite> registry, std::map<std::string, Series> series)
      : registry_(std::move(registry)), series_(std::move(series)) {
    std::set<std::string> ids;
    for (const auto& s : registry_) {
      if (!ids.insert(s.id).second) throw Error(ErrorCode::DuplicateId, s.id);
    }
    for (const auto& [id, rows] : series_) {
      if (!ids.contains(id)) throw Error(ErrorCode::UnknownAoi, id);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!(rows[i - 1].timestamp < rows[i].timestamp))
          throw Error(ErrorCode::DuplicateTimestamp, id + " " + format_iso8601(rows[i].timestamp));
      }
    }
  }

  [[nodiscard]] const std::vector<AoiSite>& registry() const { return registry_; }
  [[nodiscard]] const std::map<std::string, Series>& all_series() const { return series_; }

  [[nodiscard]] const Series& series(const std::string& id) const {
    static const Series empty;
    auto it = series_.find(id);
    return it == series_.end() ? empty : it->second;
  }

  [[nodiscard]] const AoiSite& site(const std::string& id) const {
    for (const auto& s : registry_)
      if (s.id == id) return s;
    throw Error(ErrorCode::UnknownAoi, id);
  }

  [[nodiscard]] std::size_t row_count() const {
    std::size_t n = 0;
    for (const auto& [id, rows] : series_) n += rows.size();
    return n;
  }

  friend bool operator==(const SeriesStore&, const SeriesStore&) = default;

 private:
  std::vector<AoiSite> registry_;
  std::map<std::string, Series> series_;
};

struct DatasetSplit {
  SeriesStore train;
  SeriesStore test;
  Instant split_instant{};
  bool train_empty = false;  // EmptyPartition flags; warning-level
  bool test_empty = false;
};

inline const Instant kDefaultSplitInstant = make_instant(2019, 5, 1);

inline constexpr const char* kSitesHeader = "aoi_id,name,lat,lon";
inline constexpr const char* kObservationsHeader =
    "aoi_id,timestamp_utc,irradiance_kj_m2,cloud_pct,precip_mm_hr,pressure_mb,rel_humidity_pct,temp_k,"
    "wind_speed_ms,wind_dir_deg";
inline constexpr const char* kClearSkyColumn = "clearsky_ghi_wm2";

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  return in;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace detail

inline std::vector<AoiSite> parse_registry(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::strip_cr(line) != kSitesHeader)
    throw Error(ErrorCode::MalformedRow, "line 1: expected header '" + std::string(kSitesHeader) + "'");
  std::vector<AoiSite> sites;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    if (f.size() != 4 || f[0].empty()) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no));
    auto lat = csv::parse_double(f[2]);
    auto lon = csv::parse_double(f[3]);
    if (!lat || !lon) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no));
    if (!seen.insert(f[0]).second) throw Error(ErrorCode::DuplicateId, f[0]);
    if (!coordinates_in_range(*lat, *lon)) throw Error(ErrorCode::CoordinateOutOfRange, f[0]);
    sites.push_back({f[0], f[1], *lat, *lon});
  }
  return sites;
}

inline std::vector<AoiSite> load_registry(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_registry(in);
}

inline SeriesStore parse_observations(std::istream& in, const std::vector<AoiSite>& registry) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRow, "line 1: missing header");
  line = detail::strip_cr(line);
  const std::string base = kObservationsHeader;
  bool has_clearsky = false;
  if (line == base + "," + kClearSkyColumn) {
    has_clearsky = true;
  } else if (line != base) {
    throw Error(ErrorCode::MalformedRow, "line 1: unexpected header");
  }
  std::set<std::string> known;
  for (const auto& s : registry) known.insert(s.id);

  std::map<std::string, Series> grouped;
  const std::size_t width = has_clearsky ? 11 : 10;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    const std::string where = "line " + std::to_string(line_no);
    if (f.size() != width) throw Error(ErrorCode::MalformedRow, where);
    if (!known.contains(f[0])) throw Error(ErrorCode::UnknownAoi, f[0]);
    auto ts = parse_iso8601(f[1]);
    if (!ts) throw Error(ErrorCode::MalformedRow, where + ": bad timestamp");
    if (!is_hour_aligned(*ts)) throw Error(ErrorCode::MisalignedTimestamp, where + ": " + f[1]);
    ObservationRow row;
    row.timestamp = *ts;
    auto irr = csv::parse_double(f[2]);
    if (!irr) throw Error(ErrorCode::MalformedRow, where + ": irradiance");
    row.irradiance = *irr;
    auto opt = [&](std::size_t i) -> std::optional<double> {
      if (f[i].empty()) return std::nullopt;
      auto v = csv::parse_double(f[i]);
      if (!v) throw Error(ErrorCode::MalformedRow, where + ": column " + std::to_string(i + 1));
      return v;
    };
    row.cloud_pct = opt(3);
    row.precip_mm_hr = opt(4);
    row.pressure_mb = opt(5);
    row.rel_humidity_pct = opt(6);
    row.temp_k = opt(7);
    row.wind_speed_ms = opt(8);
    row.wind_dir_deg = opt(9);
    if (has_clearsky) row.clearsky_ghi_wm2 = opt(10);
    grouped[f[0]].push_back(row);
  }
  for (auto& [id, rows] : grouped) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ObservationRow& a, const ObservationRow& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i - 1].timestamp == rows[i].timestamp)
        throw Error(ErrorCode::DuplicateTimestamp, id + " " + format_iso8601(rows[i].timestamp));
    }
  }
  return SeriesStore(registry, std::move(grouped));
}

inline SeriesStore load_observations(const std::string& path, const std::vector<AoiSite>& registry) {
  auto in = detail::open_input(path);
  return parse_observations(in, registry);
}

inline void write_registry(std::ostream& out, const std::vector<AoiSite>& sites) {
  out << kSitesHeader << '\n';
  for (const auto& s : sites) {
    out << csv::escape(s.id) << ',' << csv::escape(s.name) << ',' << csv::format_double(s.latitude) << ','
        << csv::format_double(s.longitude) << '\n';
  }
}

/// Writes the observations table. The clear-sky column is emitted only when
/// some row carries a provider value.
inline void write_observations(std::ostream& out, const SeriesStore& store) {
  bool has_clearsky = false;
  for (const auto& [id, rows] : store.all_series())
    for (const auto& r : rows) has_clearsky = has_clearsky || r.clearsky_ghi_wm2.has_value();
  out << kObservationsHeader;
  if (has_clearsky) out << ',' << kClearSkyColumn;
  out << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  for (const auto& [id, rows] : store.all_series()) {
    const std::string eid = csv::escape(id);
    for (const auto& r : rows) {
      out << eid << ',' << format_iso8601(r.timestamp) << ',' << csv::format_double(r.irradiance) << ','
          << opt(r.cloud_pct) << ',' << opt(r.precip_mm_hr) << ',' << opt(r.pressure_mb) << ','
          << opt(r.rel_humidity_pct) << ',' << opt(r.temp_k) << ',' << opt(r.wind_speed_ms) << ','
          << opt(r.wind_dir_deg);
      if (has_clearsky) out << ',' << opt(r.clearsky_ghi_wm2);
      out << '\n';
    }
  }
}

inline SeriesStore clean_irradiance(const SeriesStore& store) {
  std::map<std::string, Series> out;
  for (const auto& [id, rows] : store.all_series()) {
    Series cleaned = rows;
    for (auto& r : cleaned) r.irradiance = std::max(0.0, r.irradiance);
    out.emplace(id, std::move(cleaned));
  }
  return SeriesStore(store.registry(), std::move(out));
}

inline DatasetSplit split_train_test(const SeriesStore& store, Instant split_instant = kDefaultSplitInstant) {
  if (!is_hour_aligned(split_instant))
    throw Error(ErrorCode::MisalignedTimestamp, "split instant " + format_iso8601(split_instant));
  std::map<std::string, Series> train;
  std::map<std::string, Series> test;
  for (const auto& [id, rows] : store.all_series()) {
    auto mid = std::lower_bound(rows.begin(), rows.end(), split_instant,
                                [](const ObservationRow& r, Instant t) { return r.timestamp < t; });
    if (mid != rows.begin()) train.emplace(id, Series(rows.begin(), mid));
    if (mid != rows.end()) test.emplace(id, Series(mid, rows.end()));
  }
  DatasetSplit split{SeriesStore(store.registry(), std::move(train)), SeriesStore(store.registry(), std::move(test)),
                     split_instant};
  split.train_empty = split.train.row_count() == 0;
  split.test_empty = split.test.row_count() == 0;
  return split;
}

}  // namespace heliox

#endif  // HELIOX_CORE_HPP
