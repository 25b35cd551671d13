#ifndef HELIOX_SCHEMES_HPP
#define HELIOX_SCHEMES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "heliox/core.hpp"
#include "heliox/error.hpp"
#include "heliox/features.hpp"

namespace heliox {

enum class SchemeKind { Local, Global, CV, KN };

inline std::string_view to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Local: return "local";
    case SchemeKind::Global: return "global";
    case SchemeKind::CV: return "cv";
    case SchemeKind::KN: return "kn";
  }
  return "global";
}

inline SchemeKind parse_scheme(std::string_view s) {
  if (s == "local") return SchemeKind::Local;
  if (s == "global") return SchemeKind::Global;
  if (s == "cv") return SchemeKind::CV;
  if (s == "kn") return SchemeKind::KN;
  throw Error(ErrorCode::InvalidConfig, "unknown scheme '" + std::string(s) + "'");
}

struct SchemeConfig {
  SchemeKind kind = SchemeKind::Global;
  int folds = 5;
  std::uint64_t seed = 0;
  /// KN only: donors closer than this are not eligible.
  double min_donor_km = 0.0;
};

using FoldAssignment = std::map<std::string, int>;

struct TrainingPlan {
  std::string id;
  std::vector<std::string> train_aois;  // sorted
  std::vector<std::string> eval_aois;   // sorted
  std::map<std::string, std::string> donor_map;  // KN only: eval AOI -> donor AOI

  friend bool operator==(const TrainingPlan&, const TrainingPlan&) = default;
};

/// Seeded shuffle of the sorted ids, then round-robin fold assignment.
inline FoldAssignment assign_folds(const std::vector<AoiSite>& aois, int folds, std::uint64_t seed) {
  if (folds < 2 || static_cast<std::size_t>(folds) > aois.size())
    throw Error(ErrorCode::TooManyFolds,
                std::to_string(folds) + " folds for " + std::to_string(aois.size()) + " AOIs");
  std::vector<std::string> ids;
  ids.reserve(aois.size());
  for (const auto& a : aois) ids.push_back(a.id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  FoldAssignment out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return out;
}

inline constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * kDeg;
  const double dlon = (lon2 - lon1) * kDeg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

inline double haversine_km(const AoiSite& a, const AoiSite& b) {
  return haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
}

/// Nearest candidate by great-circle distance; ties go to the smallest id.
/// Candidates nearer than `min_km` are ignored.
inline AoiSite nearest_donor(const AoiSite& target, const std::vector<AoiSite>& candidates, double min_km = 0.0) {
  const AoiSite* best = nullptr;
  double best_d = 0.0;
  for (const auto& c : candidates) {
    if (c.id == target.id) continue;
    const double d = haversine_km(target, c);
    if (d < min_km) continue;
    if (best == nullptr || d < best_d || (d == best_d && c.id < best->id)) {
      best = &c;
      best_d = d;
    }
  }
  if (best == nullptr) throw Error(ErrorCode::NoCandidates, "no donor for " + target.id);
  return *best;
}

inline std::vector<TrainingPlan> plan(const SchemeConfig& config, const std::vector<AoiSite>& registry) {
  if (registry.empty()) throw Error(ErrorCode::InvalidConfig, "empty registry");
  std::vector<std::string> all;
  for (const auto& s : registry) all.push_back(s.id);
  std::sort(all.begin(), all.end());

  std::vector<TrainingPlan> plans;
  switch (config.kind) {
    case SchemeKind::Local:
      for (const auto& id : all) plans.push_back({"local-" + id, {id}, {id}, {}});
      break;
    case SchemeKind::Global:
      plans.push_back({"global", all, all, {}});
      break;
    case SchemeKind::CV:
    case SchemeKind::KN: {
      const auto folds = assign_folds(registry, config.folds, config.seed);
      const std::string prefix = config.kind == SchemeKind::CV ? "cv-fold" : "kn-fold";
      for (int k = 0; k < config.folds; ++k) {
        TrainingPlan p;
        p.id = prefix + std::to_string(k);
        for (const auto& id : all) (folds.at(id) == k ? p.eval_aois : p.train_aois).push_back(id);
        if (config.kind == SchemeKind::KN) {
          std::vector<AoiSite> candidates;
          for (const auto& s : registry)
            if (folds.at(s.id) != k) candidates.push_back(s);
          for (const auto& id : p.eval_aois) {
            auto it = std::find_if(registry.begin(), registry.end(), [&](const AoiSite& s) { return s.id == id; });
            p.donor_map[id] = nearest_donor(*it, candidates, config.min_donor_km).id;
          }
        }
        plans.push_back(std::move(p));
      }
      break;
    }
  }
  return plans;
}

/// Replaces the past-irradiance channel with the donor's values at the same
/// clock hours. Everything else in the window stays the target's own.
inline SampleWindow substitute_realtime(const SampleWindow& window, const Series& donor_series) {
  SampleWindow out = window;
  for (auto& p : out.past) {
    auto it = std::lower_bound(donor_series.begin(), donor_series.end(), p.timestamp,
                               [](const ObservationRow& r, Instant t) { return r.timestamp < t; });
    if (it == donor_series.end() || it->timestamp != p.timestamp)
      throw Error(ErrorCode::DonorGap, format_iso8601(p.timestamp));
    const double raw = std::max(0.0, it->irradiance);
    p.irradiance_raw = raw;
    p.irradiance_t = transform_irradiance(raw);
  }
  return out;
}

inline nlohmann::json plans_to_json(const std::vector<TrainingPlan>& plans, const SchemeConfig& config) {
  nlohmann::json doc;
  doc["scheme"] = std::string(to_string(config.kind));
  doc["folds"] = config.folds;
  doc["seed"] = config.seed;
  doc["min_donor_km"] = config.min_donor_km;
  doc["plans"] = nlohmann::json::array();
  for (const auto& p : plans) {
    nlohmann::json j;
    j["id"] = p.id;
    j["train"] = p.train_aois;
    j["eval"] = p.eval_aois;
    j["donors"] = p.donor_map;
    doc["plans"].push_back(std::move(j));
  }
  return doc;
}

inline std::vector<TrainingPlan> plans_from_json(const nlohmann::json& doc) {
  std::vector<TrainingPlan> plans;
  for (const auto& j : doc.at("plans")) {
    TrainingPlan p;
    p.id = j.at("id").get<std::string>();
    p.train_aois = j.at("train").get<std::vector<std::string>>();
    p.eval_aois = j.at("eval").get<std::vector<std::string>>();
    p.donor_map = j.at("donors").get<std::map<std::string, std::string>>();
    plans.push_back(std::move(p));
  }
  return plans;
}

}  // namespace heliox

#endif  // HELIOX_SCHEMES_HPP
