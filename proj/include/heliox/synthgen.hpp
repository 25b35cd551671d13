#ifndef HELIOX_SYNTHGEN_HPP
#define HELIOX_SYNTHGEN_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "heliox/core.hpp"
#include "heliox/features.hpp"
#include "heliox/rng.hpp"
#include "heliox/schemes.hpp"

namespace heliox::synth {

struct SynthConfig {
  int n_aois = 20;
  double lat_min = 50.0, lat_max = 58.5;
  double lon_min = -5.5, lon_max = 1.5;
  Instant start = make_instant(2015, 1, 1);
  Instant end = make_instant(2021, 1, 1);  // exclusive
  std::uint64_t seed = 42;
  double correlation_km = 150.0;  // cross-site noise correlation length; +inf = one shared field
  double persistence = 0.85;      // hourly AR coefficient of cloud cover
  double noise_scale = 25.0;      // stationary std of cloud cover around its seasonal mean (percent)
  double irradiance_noise = 0.15;  // std of the unobserved multiplicative irradiance factor
  double irradiance_noise_persistence = 0.8;
  double missing_rate = 0.0;  // probability that any one weather cell is blank

  void validate() const {
    if (n_aois < 2) throw Error(ErrorCode::InvalidConfig, "n_aois must be >= 2");
    if (!(lat_min <= lat_max) || !(lon_min <= lon_max) || !coordinates_in_range(lat_min, lon_min) ||
        !coordinates_in_range(lat_max, lon_max))
      throw Error(ErrorCode::InvalidConfig, "site bounding box");
    if (!(start <= kDefaultSplitInstant && kDefaultSplitInstant < end))
      throw Error(ErrorCode::InvalidConfig, "span must cover the default split date 2019-05-01");
    if (!is_hour_aligned(start) || !is_hour_aligned(end)) throw Error(ErrorCode::InvalidConfig, "span not hourly");
    if (!(persistence >= 0.0 && persistence < 1.0)) throw Error(ErrorCode::InvalidConfig, "persistence in [0,1)");
    if (!(irradiance_noise_persistence >= 0.0 && irradiance_noise_persistence < 1.0))
      throw Error(ErrorCode::InvalidConfig, "irradiance_noise_persistence in [0,1)");
    if (!(correlation_km > 0.0)) throw Error(ErrorCode::InvalidConfig, "correlation_km > 0");
    if (!(noise_scale >= 0.0) || !(irradiance_noise >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise >= 0");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw Error(ErrorCode::InvalidConfig, "missing_rate in [0,1)");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j;
  j["n_aois"] = c.n_aois;
  j["lat_range"] = {c.lat_min, c.lat_max};
  j["lon_range"] = {c.lon_min, c.lon_max};
  j["start"] = format_iso8601(c.start);
  j["end"] = format_iso8601(c.end);
  j["seed"] = c.seed;
  j["correlation_km"] = std::isinf(c.correlation_km) ? nlohmann::json("inf") : nlohmann::json(c.correlation_km);
  j["persistence"] = c.persistence;
  j["noise_scale"] = c.noise_scale;
  j["irradiance_noise"] = c.irradiance_noise;
  j["irradiance_noise_persistence"] = c.irradiance_noise_persistence;
  j["missing_rate"] = c.missing_rate;
  return j;
}

/// Reads the keys present in `j`, leaving the rest at their current values.
inline void merge_json(SynthConfig& c, const nlohmann::json& j) {
  auto instant = [](const nlohmann::json& v) {
    auto t = parse_iso8601(v.get<std::string>());
    if (!t) throw Error(ErrorCode::InvalidConfig, "bad timestamp " + v.dump());
    return *t;
  };
  try {
    if (j.contains("n_aois")) c.n_aois = j["n_aois"].get<int>();
    if (j.contains("lat_range")) {
      c.lat_min = j["lat_range"].at(0).get<double>();
      c.lat_max = j["lat_range"].at(1).get<double>();
    }
    if (j.contains("lon_range")) {
      c.lon_min = j["lon_range"].at(0).get<double>();
      c.lon_max = j["lon_range"].at(1).get<double>();
    }
    if (j.contains("start")) c.start = instant(j["start"]);
    if (j.contains("end")) c.end = instant(j["end"]);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("correlation_km")) {
      const auto& v = j["correlation_km"];
      c.correlation_km = v.is_string() && v.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                         : v.get<double>();
    }
    if (j.contains("persistence")) c.persistence = j["persistence"].get<double>();
    if (j.contains("noise_scale")) c.noise_scale = j["noise_scale"].get<double>();
    if (j.contains("irradiance_noise")) c.irradiance_noise = j["irradiance_noise"].get<double>();
    if (j.contains("irradiance_noise_persistence"))
      c.irradiance_noise_persistence = j["irradiance_noise_persistence"].get<double>();
    if (j.contains("missing_rate")) c.missing_rate = j["missing_rate"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

inline std::vector<AoiSite> generate_sites(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x517E));
  std::vector<AoiSite> sites;
  for (int i = 0; i < cfg.n_aois; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "AOI%02d", i + 1);
    const double lat = rng.uniform(cfg.lat_min, cfg.lat_max);
    const double lon = rng.uniform(cfg.lon_min, cfg.lon_max);
    sites.push_back({id, std::string("Synthetic site ") + (id + 3), lat, lon});
  }
  return sites;
}

/// Mixes independent per-site drivers into spatially correlated noise:
/// site i receives sum_j w_ij z_j / |w_i| with w_ij = exp(-d_ij / length).
class SpatialMixer {
 public:
  SpatialMixer(const std::vector<AoiSite>& sites, double length_km) {
    const std::size_t n = sites.size();
    weights_.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = std::exp(-haversine_km(sites[i], sites[j]) / length_km);
        weights_[i][j] = w;
        norm += w * w;
      }
      norm = std::sqrt(norm);
      for (auto& w : weights_[i]) w /= norm;
    }
  }

  /// Draws one hour of unit-variance correlated noise.
  void draw(Rng& rng, std::vector<double>& out) const {
    const std::size_t n = weights_.size();
    drivers_.resize(n);
    for (auto& z : drivers_) z = rng.normal();
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i] += weights_[i][j] * drivers_[j];
  }

 private:
  std::vector<std::vector<double>> weights_;
  mutable std::vector<double> drivers_;
};

namespace detail {

inline double seasonal_phase(Instant t) {
  return 2.0 * std::numbers::pi * static_cast<double>(epoch_seconds(t)) / kYearSeconds;
}

/// Mean cloud cover, cloudier in winter.
inline double seasonal_cloud(Instant t) {
  const double doy = day_of_year(t);
  return 60.0 + 5.0 * std::cos(2.0 * std::numbers::pi * doy / 365.2425);
}

inline std::size_t hour_count(const SynthConfig& cfg) {
  return static_cast<std::size_t>((epoch_seconds(cfg.end) - epoch_seconds(cfg.start)) / kSecondsPerHour);
}

}  // namespace detail

/// Hourly weather for every site (irradiance left at 0). Cloud cover is a
/// mean-reverting process around a seasonal mean; all noise is spatially
/// correlated through SpatialMixer.
inline SeriesStore generate_weather(const SynthConfig& cfg, const std::vector<AoiSite>& sites) {
  cfg.validate();
  const std::size_t n = sites.size();
  const std::size_t hours = detail::hour_count(cfg);
  const SpatialMixer mixer(sites, cfg.correlation_km);
  Rng cloud_rng(mix_seed(cfg.seed, 0xC10D));
  Rng temp_rng(mix_seed(cfg.seed, 0x7E3F));
  Rng press_rng(mix_seed(cfg.seed, 0xB4A0));
  Rng hum_rng(mix_seed(cfg.seed, 0x4C3D));
  Rng wind_rng(mix_seed(cfg.seed, 0x3A1D));
  Rng dir_rng(mix_seed(cfg.seed, 0xD14E));
  Rng rain_rng(mix_seed(cfg.seed, 0x4A14));

  const double rho = cfg.persistence;
  const double innovation = cfg.noise_scale * std::sqrt(1.0 - rho * rho);
  std::vector<double> cloud(n), temp_n(n, 0.0), press_n(n, 0.0), hum_n(n, 0.0), wind_n(n, 0.0), dir(n, 225.0);
  for (std::size_t i = 0; i < n; ++i) cloud[i] = detail::seasonal_cloud(cfg.start);

  std::map<std::string, Series> out;
  for (const auto& s : sites) out[s.id].reserve(hours);
  std::vector<double> zc, zt, zp, zh, zw, zd, zr;
  for (std::size_t h = 0; h < hours; ++h) {
    const Instant t = cfg.start + std::chrono::hours{static_cast<std::int64_t>(h)};
    mixer.draw(cloud_rng, zc);
    mixer.draw(temp_rng, zt);
    mixer.draw(press_rng, zp);
    mixer.draw(hum_rng, zh);
    mixer.draw(wind_rng, zw);
    mixer.draw(dir_rng, zd);
    mixer.draw(rain_rng, zr);
    const double mu = detail::seasonal_cloud(t);
    const double season = detail::seasonal_phase(t);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& site = sites[i];
      if (h > 0) cloud[i] = rho * cloud[i] + (1.0 - rho) * mu + innovation * zc[i];
      cloud[i] = std::clamp(cloud[i], 0.0, 100.0);
      temp_n[i] = 0.95 * temp_n[i] + 0.6 * zt[i];
      press_n[i] = 0.98 * press_n[i] + 2.0 * zp[i];
      hum_n[i] = 0.9 * hum_n[i] + 2.5 * zh[i];
      wind_n[i] = 0.9 * wind_n[i] + 0.8 * zw[i];
      dir[i] = std::fmod(dir[i] + 8.0 * zd[i] + 360.0, 360.0);

      const double local_hour = std::fmod(static_cast<double>(epoch_seconds(t) % kSecondsPerDay) / 3600.0 +
                                              site.longitude / 15.0 + 24.0,
                                          24.0);
      const double diurnal = std::cos(2.0 * std::numbers::pi * (local_hour - 15.0) / 24.0);
      ObservationRow row;
      row.timestamp = t;
      row.cloud_pct = cloud[i];
      row.temp_k = 283.0 - 6.0 * std::cos(season) + 4.0 * diurnal * (1.0 - 0.5 * cloud[i] / 100.0) -
                   0.5 * (site.latitude - 50.0) + temp_n[i];
      row.pressure_mb = 1013.0 - 0.15 * (cloud[i] - 60.0) + press_n[i];
      row.rel_humidity_pct = std::clamp(82.0 + 0.2 * (cloud[i] - 60.0) - 6.0 * diurnal + hum_n[i], 0.0, 100.0);
      row.precip_mm_hr = cloud[i] > 80.0 ? 0.05 * (cloud[i] - 80.0) * std::fabs(zr[i]) : 0.0;
      row.wind_speed_ms = std::fabs(4.0 + wind_n[i]);
      row.wind_dir_deg = dir[i];
      out[site.id].push_back(row);
    }
  }
  return SeriesStore(sites, std::move(out));
}

/// irradiance = 3.6 * clear_sky * (1 - 0.75 (cloud/100)^3) * (1 + eta), with
/// eta an unobserved, persistent, spatially correlated factor clipped to
/// [-0.6, 0.05]. Zero whenever the sun is below the horizon.
inline SeriesStore synth_irradiance(const SynthConfig& cfg, const std::vector<AoiSite>& sites,
                                    const SeriesStore& weather) {
  cfg.validate();
  const std::size_t n = sites.size();
  const SpatialMixer mixer(sites, cfg.correlation_km);
  Rng rng(mix_seed(cfg.seed, 0x1AAD));
  const double rho = cfg.irradiance_noise_persistence;
  std::vector<double> latent(n, 0.0), z;
  std::map<std::string, Series> out;
  for (const auto& s : sites) out[s.id] = weather.series(s.id);
  const std::size_t hours = out.empty() ? 0 : out.begin()->second.size();
  for (std::size_t h = 0; h < hours; ++h) {
    mixer.draw(rng, z);
    for (std::size_t i = 0; i < n; ++i) {
      latent[i] = h == 0 ? z[i] : rho * latent[i] + std::sqrt(1.0 - rho * rho) * z[i];
      auto& row = out[sites[i].id][h];
      const double eta = std::clamp(cfg.irradiance_noise * latent[i], -0.6, 0.05);
      const double ghi = clear_sky_ghi(sites[i].latitude, sites[i].longitude, row.timestamp);
      const double c = row.cloud_pct.value_or(0.0) / 100.0;
      row.irradiance = 3.6 * ghi * (1.0 - 0.75 * c * c * c) * (1.0 + eta);
    }
  }
  return SeriesStore(sites, std::move(out));
}

/// Blanks each weather cell independently with probability missing_rate.
inline SeriesStore apply_missing(const SynthConfig& cfg, const SeriesStore& store) {
  if (cfg.missing_rate <= 0.0) return store;
  Rng rng(mix_seed(cfg.seed, 0x3155));
  std::map<std::string, Series> out;
  for (const auto& [id, rows] : store.all_series()) {
    Series copy = rows;
    for (auto& r : copy) {
      for (auto* field : {&r.cloud_pct, &r.precip_mm_hr, &r.pressure_mb, &r.rel_humidity_pct, &r.temp_k,
                          &r.wind_speed_ms, &r.wind_dir_deg})
        if (rng.uniform() < cfg.missing_rate) field->reset();
    }
    out.emplace(id, std::move(copy));
  }
  return SeriesStore(store.registry(), std::move(out));
}

/// Complete dataset as a pure function of the config.
inline SeriesStore generate_dataset(const SynthConfig& cfg) {
  const auto sites = generate_sites(cfg);
  return apply_missing(cfg, synth_irradiance(cfg, sites, generate_weather(cfg, sites)));
}

struct Manifest {
  std::filesystem::path sites_csv;
  std::filesystem::path observations_csv;
  std::filesystem::path manifest_json;
  std::uint64_t content_hash = 0;
};

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline Manifest emit_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  const SeriesStore store = generate_dataset(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  std::ostringstream sites_text, obs_text;
  write_registry(sites_text, store.registry());
  write_observations(obs_text, store);

  Manifest m{out_dir / "sites.csv", out_dir / "observations.csv", out_dir / "manifest.json", 0};
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + p.string());
    f << text;
    if (!f) throw Error(ErrorCode::IoFailure, "write failed " + p.string());
  };
  write(m.sites_csv, sites_text.str());
  write(m.observations_csv, obs_text.str());
  m.content_hash = fnv1a(obs_text.str(), fnv1a(sites_text.str()));

  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["seed"] = cfg.seed;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.content_hash));
  j["content_hash"] = hash;
  j["files"] = {"sites.csv", "observations.csv"};
  write(m.manifest_json, j.dump(2) + "\n");
  return m;
}

}  // namespace heliox::synth

#endif  // HELIOX_SYNTHGEN_HPP
