#ifndef HELIOX_FEATURES_HPP
#define HELIOX_FEATURES_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heliox/core.hpp"
#include "heliox/error.hpp"
#include "heliox/time.hpp"

namespace heliox {

inline constexpr int kPastSteps = 12;
inline constexpr int kHorizon = 6;
inline constexpr int kWindowSteps = kPastSteps + kHorizon;

inline constexpr double kYearSeconds = 31'556'952.0;  // 365.2425 d
inline constexpr double kDaySeconds = 86'400.0;

/// Transformed value of zero irradiance; nothing below this is representable.
inline constexpr double kTransformFloor = -1.0;

// ---------------------------------------------------------------------------
// Irradiance transform

inline double transform_irradiance(double raw) {
  if (raw < 0.0 || std::isnan(raw)) throw Error(ErrorCode::NegativeInput, std::to_string(raw));
  return std::max(3.0, std::log(raw + 1.0)) - 4.0;
}

/// The floor carries no information, so it maps back to 0 KJ/m^2.
inline double inverse_transform_irradiance(double t) {
  if (t < kTransformFloor - 1e-9) throw Error(ErrorCode::BelowFloor, std::to_string(t));
  if (t <= kTransformFloor) return 0.0;
  return std::exp(t + 4.0) - 1.0;
}

// ---------------------------------------------------------------------------
// Weather normalisation

struct NormalizedWeather {
  double cloud_z = 0.0;
  double precip_z = 0.0;
  double pressure_z = 0.0;
  double humidity_z = 0.0;
  double temp_z = 0.0;
  double clearsky_ln = 0.0;
  double wind_ns = 0.0;
  double wind_ew = 0.0;

  static constexpr int kWidth = 8;

  [[nodiscard]] std::array<double, kWidth> as_array() const {
    return {cloud_z, precip_z, pressure_z, humidity_z, temp_z, clearsky_ln, wind_ns, wind_ew};
  }

  friend bool operator==(const NormalizedWeather&, const NormalizedWeather&) = default;
};

inline NormalizedWeather normalize_weather(const ObservationRow& row, double clear_sky_ghi) {
  auto need = [](const std::optional<double>& v, std::string_view name) {
    if (!v) throw Error(ErrorCode::MissingField, std::string(name));
    return *v;
  };
  const double cloud = need(row.cloud_pct, "cloud_pct");
  const double precip = need(row.precip_mm_hr, "precip_mm_hr");
  const double pressure = need(row.pressure_mb, "pressure_mb");
  const double humidity = need(row.rel_humidity_pct, "rel_humidity_pct");
  const double temp = need(row.temp_k, "temp_k");
  const double speed = need(row.wind_speed_ms, "wind_speed_ms");
  const double dir = need(row.wind_dir_deg, "wind_dir_deg") * std::numbers::pi / 180.0;
  NormalizedWeather w;
  w.cloud_z = (cloud - 60.0) / 30.0;
  w.precip_z = (precip - 0.1) / 0.33;
  w.pressure_z = (pressure - 1000.0) / 15.5;
  w.humidity_z = (humidity - 82.0) / 13.0;
  w.temp_z = (temp - 283.0) / 5.5;
  w.clearsky_ln = std::log(std::max(0.0, clear_sky_ghi) + 1.0);
  w.wind_ns = speed * std::cos(dir);
  w.wind_ew = speed * std::sin(dir);
  return w;
}

// ---------------------------------------------------------------------------
// Calendar and solar geometry

struct CalculatedFeatures {
  double year_sin = 0.0;
  double year_cos = 1.0;
  double day_sin = 0.0;
  double day_cos = 1.0;
  double solar_altitude = 0.0;
  double azimuth_sin = 0.0;
  double azimuth_cos = 1.0;

  static constexpr int kWidth = 7;

  [[nodiscard]] std::array<double, kWidth> as_array() const {
    return {year_sin, year_cos, day_sin, day_cos, solar_altitude, azimuth_sin, azimuth_cos};
  }

  friend bool operator==(const CalculatedFeatures&, const CalculatedFeatures&) = default;
};

struct CyclicTime {
  double year_sin, year_cos, day_sin, day_cos;
};

inline CyclicTime cyclic_time_features(Instant ts) {
  const double s = static_cast<double>(epoch_seconds(ts));
  const double year_angle = 2.0 * std::numbers::pi * std::fmod(s, kYearSeconds) / kYearSeconds;
  const double day_angle = 2.0 * std::numbers::pi * std::fmod(s, kDaySeconds) / kDaySeconds;
  return {std::sin(year_angle), std::cos(year_angle), std::sin(day_angle), std::cos(day_angle)};
}

struct SolarPosition {
  double elevation_deg;
  double azimuth_deg;  // clockwise from north, [0, 360)
};

/// Solar ephemeris after Meeus as used in the NOAA solar calculator: mean
/// elements in Julian centuries, equation of centre, nutation-corrected
/// obliquity. Good to ~0.01 deg for 1900-2100. No refraction correction.
inline SolarPosition solar_position(double lat_deg, double lon_deg, Instant ts) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double secs = static_cast<double>(epoch_seconds(ts));
  const double jc = (secs / kDaySeconds + 2440587.5 - 2451545.0) / 36525.0;

  const double l0 = std::fmod(280.46646 + jc * (36000.76983 + jc * 0.0003032), 360.0) * kDeg;
  const double m = (357.52911 + jc * (35999.05029 - 0.0001537 * jc)) * kDeg;
  const double e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc);
  const double centre = std::sin(m) * (1.914602 - jc * (0.004817 + 0.000014 * jc)) +
                        std::sin(2 * m) * (0.019993 - 0.000101 * jc) + std::sin(3 * m) * 0.000289;
  const double omega = (125.04 - 1934.136 * jc) * kDeg;
  const double app_long = l0 + (centre - 0.00569 - 0.00478 * std::sin(omega)) * kDeg;
  const double mean_obliq = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0;
  const double obliq = (mean_obliq + 0.00256 * std::cos(omega)) * kDeg;
  const double decl = std::asin(std::sin(obliq) * std::sin(app_long));

  const double y = std::pow(std::tan(obliq / 2.0), 2);
  const double eqtime_min = 4.0 / kDeg *
                            (y * std::sin(2 * l0) - 2 * e * std::sin(m) + 4 * e * y * std::sin(m) * std::cos(2 * l0) -
                             0.5 * y * y * std::sin(4 * l0) - 1.25 * e * e * std::sin(2 * m));

  const double utc_minutes = std::fmod(secs, kDaySeconds) / 60.0;
  const double true_solar_min = utc_minutes + eqtime_min + 4.0 * lon_deg;
  const double hour_angle = (true_solar_min / 4.0 - 180.0) * kDeg;
  const double lat = lat_deg * kDeg;

  double cos_zen = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
  cos_zen = std::clamp(cos_zen, -1.0, 1.0);
  const double elevation = std::asin(cos_zen) / kDeg;

  double az = std::atan2(std::sin(hour_angle),
                         std::cos(hour_angle) * std::sin(lat) - std::tan(decl) * std::cos(lat)) /
                  kDeg +
              180.0;
  az = std::fmod(az, 360.0);
  if (az < 0) az += 360.0;
  return {elevation, az};
}

struct SolarFeatures {
  double solar_altitude, azimuth_sin, azimuth_cos;
};

inline SolarFeatures solar_features_from(const SolarPosition& p) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  return {std::sin(p.elevation_deg * kDeg), std::sin(p.azimuth_deg * kDeg), std::cos(p.azimuth_deg * kDeg)};
}

inline SolarFeatures solar_features(double lat, double lon, Instant ts) {
  return solar_features_from(solar_position(lat, lon, ts));
}

/// Haurwitz clear-sky GHI in W/m^2 for a given solar elevation.
inline double haurwitz_ghi(double elevation_deg) {
  if (elevation_deg <= 0.0) return 0.0;
  const double s = std::sin(elevation_deg * std::numbers::pi / 180.0);
  return 1098.0 * s * std::exp(-0.057 / s);
}

inline double clear_sky_ghi(double lat, double lon, Instant ts) {
  return haurwitz_ghi(solar_position(lat, lon, ts).elevation_deg);
}

inline CalculatedFeatures calculated_features(double lat, double lon, Instant ts) {
  auto cyc = cyclic_time_features(ts);
  auto sol = solar_features(lat, lon, ts);
  return {cyc.year_sin, cyc.year_cos, cyc.day_sin, cyc.day_cos, sol.solar_altitude, sol.azimuth_sin, sol.azimuth_cos};
}

// ---------------------------------------------------------------------------
// Input combinations and sample windows

enum class InputCombo { All, Irradiance, Static, Weather };

inline constexpr bool uses_weather(InputCombo c) { return c == InputCombo::All || c == InputCombo::Weather; }
inline constexpr bool uses_irradiance(InputCombo c) { return c == InputCombo::All || c == InputCombo::Irradiance; }

inline std::string_view to_string(InputCombo c) {
  switch (c) {
    case InputCombo::All: return "all";
    case InputCombo::Irradiance: return "irradiance";
    case InputCombo::Static: return "static";
    case InputCombo::Weather: return "weather";
  }
  return "all";
}

inline InputCombo parse_combo(std::string_view s) {
  if (s == "all") return InputCombo::All;
  if (s == "irradiance") return InputCombo::Irradiance;
  if (s == "static") return InputCombo::Static;
  if (s == "weather") return InputCombo::Weather;
  throw Error(ErrorCode::InvalidConfig, "unknown input combo '" + std::string(s) + "'");
}

struct PastStep {
  Instant timestamp{};
  double irradiance_t = kTransformFloor;  // transformed
  double irradiance_raw = 0.0;            // KJ/m^2
  double clearsky_ghi = 0.0;              // W/m^2
  std::optional<NormalizedWeather> weather;
  CalculatedFeatures calc;

  friend bool operator==(const PastStep&, const PastStep&) = default;
};

struct FutureStep {
  Instant timestamp{};
  std::optional<NormalizedWeather> weather;
  CalculatedFeatures calc;
  double target_t = kTransformFloor;
  double target_raw = 0.0;
  double clearsky_ghi = 0.0;

  friend bool operator==(const FutureStep&, const FutureStep&) = default;
};

struct SampleWindow {
  std::string aoi_id;
  Instant issue_time{};
  InputCombo combo = InputCombo::All;
  std::array<PastStep, kPastSteps> past;
  std::array<FutureStep, kHorizon> future;

  friend bool operator==(const SampleWindow&, const SampleWindow&) = default;
};

/// Flattened feature width: per step calculated(7), weather(8) when used,
/// then past irradiance(1) for the 12 past steps when used.
inline constexpr int layout_width(InputCombo c) {
  int w = kWindowSteps * CalculatedFeatures::kWidth;
  if (uses_weather(c)) w += kWindowSteps * NormalizedWeather::kWidth;
  if (uses_irradiance(c)) w += kPastSteps;
  return w;
}

/// Writes the window's features in fixed order (step-major; within a step:
/// calculated, weather, irradiance). `out` must hold layout_width(combo) values.
inline void flatten_features(const SampleWindow& w, std::span<double> out) {
  if (static_cast<int>(out.size()) != layout_width(w.combo))
    throw Error(ErrorCode::LayoutMismatch, "feature buffer width");
  std::size_t k = 0;
  const bool weather = uses_weather(w.combo);
  const bool irr = uses_irradiance(w.combo);
  auto put_weather = [&](const std::optional<NormalizedWeather>& nw) {
    if (!nw) throw Error(ErrorCode::MissingField, "weather in window " + w.aoi_id);
    for (double v : nw->as_array()) out[k++] = v;
  };
  for (const auto& p : w.past) {
    for (double v : p.calc.as_array()) out[k++] = v;
    if (weather) put_weather(p.weather);
    if (irr) out[k++] = p.irradiance_t;
  }
  for (const auto& f : w.future) {
    for (double v : f.calc.as_array()) out[k++] = v;
    if (weather) put_weather(f.weather);
  }
}

inline std::vector<double> flatten_features(const SampleWindow& w) {
  std::vector<double> out(static_cast<std::size_t>(layout_width(w.combo)));
  flatten_features(w, out);
  return out;
}

/// Per-row derived values shared by every window that covers the row.
struct RowFeatures {
  Instant timestamp{};
  double irradiance_raw = 0.0;
  double irradiance_t = kTransformFloor;
  double clearsky_ghi = 0.0;
  std::optional<NormalizedWeather> weather;
  CalculatedFeatures calc;
};

inline RowFeatures row_features(const ObservationRow& row, const AoiSite& site) {
  RowFeatures f;
  f.timestamp = row.timestamp;
  f.irradiance_raw = std::max(0.0, row.irradiance);
  f.irradiance_t = transform_irradiance(f.irradiance_raw);
  const auto pos = solar_position(site.latitude, site.longitude, row.timestamp);
  f.clearsky_ghi = row.clearsky_ghi_wm2 ? std::max(0.0, *row.clearsky_ghi_wm2) : haurwitz_ghi(pos.elevation_deg);
  if (row.weather_complete()) f.weather = normalize_weather(row, f.clearsky_ghi);
  const auto cyc = cyclic_time_features(row.timestamp);
  const auto sol = solar_features_from(pos);
  f.calc = {cyc.year_sin, cyc.year_cos, cyc.day_sin, cyc.day_cos, sol.solar_altitude, sol.azimuth_sin, sol.azimuth_cos};
  return f;
}

struct WindowSet {
  std::vector<SampleWindow> windows;
  std::size_t skipped = 0;  // admissible-span issue times dropped for gaps or missing fields
};

inline WindowSet build_windows(const Series& series, InputCombo combo, const AoiSite& site) {
  WindowSet out;
  const std::size_t n = series.size();
  if (n < static_cast<std::size_t>(kWindowSteps)) return out;
  std::vector<RowFeatures> rows;
  rows.reserve(n);
  for (const auto& r : series) rows.push_back(row_features(r, site));

  const bool need_weather = uses_weather(combo);
  // contiguous_run[i]: length of the hourly-contiguous, field-complete run ending at row i.
  std::vector<std::size_t> run(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool complete = !need_weather || rows[i].weather.has_value();
    if (!complete) continue;
    const bool adjacent =
        i > 0 && epoch_seconds(rows[i].timestamp) - epoch_seconds(rows[i - 1].timestamp) == kSecondsPerHour;
    run[i] = adjacent ? run[i - 1] + 1 : 1;
  }
  for (std::size_t end = kWindowSteps - 1; end < n; ++end) {
    if (run[end] < static_cast<std::size_t>(kWindowSteps)) {
      ++out.skipped;
      continue;
    }
    const std::size_t start = end + 1 - kWindowSteps;
    SampleWindow w;
    w.aoi_id = site.id;
    w.combo = combo;
    w.issue_time = rows[start + kPastSteps - 1].timestamp;
    for (int j = 0; j < kPastSteps; ++j) {
      const auto& r = rows[start + static_cast<std::size_t>(j)];
      auto& p = w.past[static_cast<std::size_t>(j)];
      p.timestamp = r.timestamp;
      p.irradiance_t = r.irradiance_t;
      p.irradiance_raw = r.irradiance_raw;
      p.clearsky_ghi = r.clearsky_ghi;
      if (need_weather) p.weather = r.weather;
      p.calc = r.calc;
    }
    for (int j = 0; j < kHorizon; ++j) {
      const auto& r = rows[start + static_cast<std::size_t>(kPastSteps + j)];
      auto& f = w.future[static_cast<std::size_t>(j)];
      f.timestamp = r.timestamp;
      if (need_weather) f.weather = r.weather;
      f.calc = r.calc;
      f.target_t = r.irradiance_t;
      f.target_raw = r.irradiance_raw;
      f.clearsky_ghi = r.clearsky_ghi;
    }
    out.windows.push_back(std::move(w));
  }
  return out;
}

/// Windows for every AOI in the store, in registry order then issue time.
inline WindowSet build_all_windows(const SeriesStore& store, InputCombo combo, std::span<const std::string> aoi_ids) {
  WindowSet all;
  for (const auto& id : aoi_ids) {
    auto ws = build_windows(store.series(id), combo, store.site(id));
    all.skipped += ws.skipped;
    for (auto& w : ws.windows) all.windows.push_back(std::move(w));
  }
  return all;
}

}  // namespace heliox

#endif  // HELIOX_FEATURES_HPP
