#ifndef HELIOX_TIME_HPP
#define HELIOX_TIME_HPP

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace heliox {

/// UTC instant with one-second resolution.
using Instant = std::chrono::sys_seconds;

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;

inline std::int64_t epoch_seconds(Instant t) { return t.time_since_epoch().count(); }

inline Instant from_epoch_seconds(std::int64_t s) { return Instant{std::chrono::seconds{s}}; }

inline bool is_hour_aligned(Instant t) {
  auto s = epoch_seconds(t);
  return ((s % kSecondsPerHour) + kSecondsPerHour) % kSecondsPerHour == 0;
}

inline Instant make_instant(int y, unsigned mo, unsigned d, int h = 0, int mi = 0, int s = 0) {
  using namespace std::chrono;
  return sys_days{year{y} / month{mo} / day{d}} + hours{h} + minutes{mi} + seconds{s};
}

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z]`. Returns nullopt on any syntax or calendar error.
inline std::optional<Instant> parse_iso8601(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int consumed = 0;
  std::string buf(text);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) == 6) {
  } else if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d%n", &y, &mo, &d, &h, &mi, &consumed) == 5) {
    s = 0;
  } else {
    return std::nullopt;
  }
  std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z")) return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_iso8601(Instant t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Calendar month key, `year * 12 + (month - 1)`.
inline int month_key(Instant t) {
  using namespace std::chrono;
  year_month_day ymd{floor<days>(t)};
  return static_cast<int>(ymd.year()) * 12 + static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
}

/// Fractional day-of-year (0 at Jan 1 00:00 UTC) and the year's length in days.
inline double day_of_year(Instant t, double* year_days = nullptr) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  sys_days jan1{ymd.year() / January / 1};
  if (year_days != nullptr) *year_days = ymd.year().is_leap() ? 366.0 : 365.0;
  return static_cast<double>((t - jan1).count()) / static_cast<double>(kSecondsPerDay);
}

}  // namespace heliox

#endif  // HELIOX_TIME_HPP
