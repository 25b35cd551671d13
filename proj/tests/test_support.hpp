#ifndef HELIOX_TEST_SUPPORT_HPP
#define HELIOX_TEST_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "heliox/core.hpp"
#include "heliox/rng.hpp"

namespace heliox::testing {

inline std::filesystem::path temp_dir(const std::string& tag) {
  auto base = std::filesystem::temp_directory_path() /
              ("heliox_" + tag + "_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(base);
  return base;
}

inline ObservationRow complete_row(Instant t, double irradiance = 500.0) {
  ObservationRow r;
  r.timestamp = t;
  r.irradiance = irradiance;
  r.cloud_pct = 50.0;
  r.precip_mm_hr = 0.0;
  r.pressure_mb = 1010.0;
  r.rel_humidity_pct = 80.0;
  r.temp_k = 285.0;
  r.wind_speed_ms = 3.0;
  r.wind_dir_deg = 200.0;
  return r;
}

/// `hours` contiguous complete rows starting at `start`.
inline Series contiguous(Instant start, int hours, double irradiance = 500.0) {
  Series s;
  for (int h = 0; h < hours; ++h) s.push_back(complete_row(start + std::chrono::hours{h}, irradiance + h));
  return s;
}

/// Random store with gaps and missing fields, for property tests.
inline SeriesStore random_store(std::uint64_t seed, int n_sites = 3, int max_rows = 60) {
  Rng rng(seed);
  std::vector<AoiSite> sites;
  std::map<std::string, Series> series;
  for (int i = 0; i < n_sites; ++i) {
    const std::string id = "S" + std::to_string(i);
    sites.push_back({id, "site " + id, rng.uniform(-80, 80), rng.uniform(-170, 170)});
    Series rows;
    Instant t = make_instant(2019, 4, 28) + std::chrono::hours{static_cast<int>(rng.below(24))};
    const int n = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rows)));
    for (int k = 0; k < n; ++k) {
      t += std::chrono::hours{1 + static_cast<int>(rng.below(3))};
      auto r = complete_row(t, rng.uniform(-50, 3000));
      if (rng.uniform() < 0.2) r.cloud_pct.reset();
      if (rng.uniform() < 0.1) r.wind_dir_deg.reset();
      if (rng.uniform() < 0.3) r.clearsky_ghi_wm2 = rng.uniform(0, 900);
      r.temp_k = rng.uniform(260, 300);
      rows.push_back(r);
    }
    if (!rows.empty()) series.emplace(id, std::move(rows));
  }
  return SeriesStore(sites, std::move(series));
}

}  // namespace heliox::testing

#endif  // HELIOX_TEST_SUPPORT_HPP
