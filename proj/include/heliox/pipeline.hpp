#ifndef HELIOX_PIPELINE_HPP
#define HELIOX_PIPELINE_HPP

#include <span>
#include <string>
#include <vector>

#include "heliox/core.hpp"
#include "heliox/features.hpp"
#include "heliox/learners/model.hpp"
#include "heliox/metrics.hpp"
#include "heliox/schemes.hpp"

namespace heliox {

/// Trains one plan's model on the plan's training AOIs.
inline learners::TrainedModel train_plan(const SeriesStore& train, const TrainingPlan& plan, InputCombo combo,
                                         const learners::LearnerConfig& cfg, SchemeKind scheme,
                                         learners::TrainHistory* history = nullptr) {
  const auto ws = build_all_windows(train, combo, plan.train_aois);
  return learners::train_model(ws.windows, cfg, std::string(to_string(scheme)), plan.id, history);
}

struct EvalOutcome {
  std::vector<EvalRecord> records;  // daytime records only
  std::size_t windows = 0;
  std::size_t skipped_gap = 0;
  std::size_t skipped_donor = 0;
};

inline void merge(EvalOutcome& into, EvalOutcome&& from) {
  into.records.insert(into.records.end(), std::make_move_iterator(from.records.begin()),
                      std::make_move_iterator(from.records.end()));
  into.windows += from.windows;
  into.skipped_gap += from.skipped_gap;
  into.skipped_donor += from.skipped_donor;
}

namespace detail {

inline void keep_daytime(std::vector<EvalRecord>& all, std::vector<EvalRecord>& out) {
  for (auto& r : all)
    if (daytime_mask(r)) out.push_back(std::move(r));
  all.clear();
}

}  // namespace detail

/// Forecasts every evaluation AOI of the plan over the test store. For plans
/// with a donor map, the past irradiance comes from the donor; records keep
/// the target AOI's own observations.
inline EvalOutcome evaluate_plan(const learners::TrainedModel& model, const TrainingPlan& plan, const SeriesStore& test,
                                 const std::string& learner_label) {
  EvalOutcome out;
  const InputCombo combo = model.meta.combo;
  for (const auto& id : plan.eval_aois) {
    auto ws = build_windows(test.series(id), combo, test.site(id));
    out.skipped_gap += ws.skipped;
    std::vector<const SampleWindow*> originals;
    std::vector<SampleWindow> inputs;
    const auto donor = plan.donor_map.find(id);
    for (const auto& w : ws.windows) {
      if (donor == plan.donor_map.end()) {
        inputs.push_back(w);
      } else {
        try {
          inputs.push_back(substitute_realtime(w, test.series(donor->second)));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DonorGap) throw;
          ++out.skipped_donor;
          continue;
        }
      }
      originals.push_back(&w);
    }
    const auto forecasts = learners::predict_batch(model, inputs);
    std::vector<EvalRecord> recs;
    for (std::size_t k = 0; k < forecasts.size(); ++k) {
      append_records(recs, *originals[k], forecasts[k].kj_m2, model.meta.scheme, learner_label);
      detail::keep_daytime(recs, out.records);
    }
    out.windows += forecasts.size();
  }
  return out;
}

/// Clear-sky-ratio persistence over the given AOIs. Windows issued at night
/// (clear-sky <= 1 W/m^2 at issue time) have no persistence forecast.
inline EvalOutcome evaluate_persistence(const SeriesStore& test, std::span<const std::string> aoi_ids,
                                        const std::string& scheme_label = "baseline") {
  EvalOutcome out;
  std::vector<EvalRecord> recs;
  for (const auto& id : aoi_ids) {
    auto ws = build_windows(test.series(id), InputCombo::Irradiance, test.site(id));
    out.skipped_gap += ws.skipped;
    for (const auto& w : ws.windows) {
      std::array<double, kHorizon> ghi{};
      for (int s = 0; s < kHorizon; ++s) ghi[static_cast<std::size_t>(s)] = w.future[static_cast<std::size_t>(s)].clearsky_ghi;
      const auto& last = w.past.back();
      if (!(last.clearsky_ghi > kDaytimeClearSky)) continue;
      const auto yhat = persistence_forecast(last.irradiance_raw, last.clearsky_ghi, ghi);
      append_records(recs, w, yhat, scheme_label, "persistence");
      detail::keep_daytime(recs, out.records);
      ++out.windows;
    }
  }
  return out;
}

}  // namespace heliox

#endif  // HELIOX_PIPELINE_HPP
