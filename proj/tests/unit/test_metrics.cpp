#include <sstream>

#include <gtest/gtest.h>

#include "heliox/metrics.hpp"
#include "test_support.hpp"

namespace heliox {
namespace {

EvalRecord rec(double y, double y_hat, double ghi = 500.0) {
  EvalRecord r;
  r.aoi_id = "A";
  r.issue_time = make_instant(2019, 6, 1, 10);
  r.y = y;
  r.y_hat = y_hat;
  r.ghi = ghi;
  r.ghi_prev = 500.0;
  r.i_prev = 1500.0;
  return r;
}

// Random daytime-heavy records over several AOIs and months.
std::vector<EvalRecord> random_records(std::uint64_t seed, int n_aois = 3, int hours = 24 * 90) {
  Rng rng(seed);
  std::vector<EvalRecord> out;
  for (int a = 0; a < n_aois; ++a) {
    for (int h = 0; h < hours; h += 1 + static_cast<int>(rng.below(3))) {
      const int step = 1 + static_cast<int>(rng.below(kHorizon));
      EvalRecord r;
      r.aoi_id = "S" + std::to_string(a);
      r.issue_time = make_instant(2019, 5, 1) + std::chrono::hours{h};
      r.step = step;
      r.ghi = rng.uniform() < 0.2 ? 0.0 : rng.uniform(2, 900);
      r.ghi_prev = rng.uniform() < 0.1 ? 0.5 : rng.uniform(2, 900);
      r.y = rng.uniform(0, 3000);
      r.i_prev = rng.uniform(0, 3000);
      r.y_hat = std::max(0.0, r.y + rng.normal() * 300);
      r.scheme = "global";
      r.learner = "mlp";
      r.combo = "all";
      out.push_back(r);
    }
  }
  return out;
}

TEST(Daytime, Examples) {
  EXPECT_TRUE(daytime_mask(rec(100, 0, 500)));
  EXPECT_FALSE(daytime_mask(rec(10, 0, 500)));
  EXPECT_FALSE(daytime_mask(rec(100, 0, 0.5)));
  EXPECT_FALSE(daytime_mask(rec(20, 0, 500)));
}

TEST(Nrmse, Examples) {
  std::vector<EvalRecord> perfect{rec(100, 100), rec(250, 250)};
  EXPECT_EQ(nrmse(perfect), 0.0);
  std::vector<EvalRecord> r{rec(100, 110), rec(200, 190), rec(300, 310)};
  EXPECT_NEAR(nrmse(r), 0.05, 1e-12);
  std::vector<EvalRecord> night{rec(5, 1), rec(100, 90, 0.0)};
  try {
    nrmse(night);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyAfterMask);
  }
}

TEST(Nrmse, IgnoresMaskedRecordsAndOrder) {
  std::vector<EvalRecord> r{rec(100, 110), rec(200, 190), rec(300, 310), rec(10, 5000), rec(900, 0, 0.2)};
  EXPECT_NEAR(nrmse(r), 0.05, 1e-12);
  auto big = random_records(4);
  const double a = nrmse(big);
  Rng rng(1);
  rng.shuffle(std::span<EvalRecord>(big));
  EXPECT_EQ(nrmse(big), a);
}

TEST(Persistence, Examples) {
  const std::array<double, 6> fut{800, 800, 800, 800, 800, 800};
  EXPECT_NEAR(persistence_forecast(300, 600, fut)[0], 400.0, 1e-12);
  const std::array<double, 6> flat{600, 600, 600, 600, 600, 600};
  for (double v : persistence_forecast(300, 600, flat)) EXPECT_NEAR(v, 300.0, 1e-12);
  try {
    persistence_forecast(300, 0.5, fut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NightIssue);
  }
}

// Direct restatement of the skill definition, month by month.
double skill_oracle(const std::vector<EvalRecord>& records) {
  std::map<std::string, std::vector<const EvalRecord*>> by_month;
  for (const auto& r : records) {
    const bool day = r.y > 20 && r.ghi > 1 && r.i_prev > 20 && r.ghi_prev > 1;
    if (day && month_label(r.issue_time) == month_label(r.valid_time())) by_month[month_label(r.valid_time())].push_back(&r);
  }
  double total = 0;
  int used = 0;
  for (const auto& [m, rs] : by_month) {
    if (rs.size() < 2) continue;
    double u = 0, v = 0;
    for (const auto* r : rs) {
      u += std::pow((r->y - r->y_hat) / (3.6 * r->ghi), 2);
      v += std::pow(r->i_prev / (3.6 * r->ghi_prev) - r->y / (3.6 * r->ghi), 2);
    }
    if (v == 0) continue;
    total += 1 - std::sqrt(u / rs.size()) / std::sqrt(v / rs.size());
    ++used;
  }
  return total / used;
}

TEST(Skill, MatchesDirectDefinition) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto r = random_records(seed, 1);
    EXPECT_NEAR(skill_s(r).s, skill_oracle(r), 1e-12) << "seed " << seed;
  }
}

TEST(Skill, PerfectForecastScoresOne) {
  auto r = random_records(1, 1);
  for (auto& x : r) x.y_hat = x.y;
  EXPECT_DOUBLE_EQ(skill_s(r).s, 1.0);
}

TEST(Skill, PersistenceScoresZero) {
  auto r = random_records(2, 1);
  for (auto& x : r) {
    if (x.ghi_prev <= 1.0) continue;
    std::array<double, 6> g{};
    g.fill(x.ghi);
    x.y_hat = persistence_forecast(x.i_prev, x.ghi_prev, g)[static_cast<std::size_t>(x.step - 1)];
  }
  EXPECT_NEAR(skill_s(r).s, 0.0, 1e-9);
}

TEST(Skill, WorseThanPersistenceIsNegative) {
  auto r = random_records(3, 1);
  for (auto& x : r) {
    const double persist = x.i_prev / x.ghi_prev * x.ghi;
    x.y_hat = persist + 2.0 * (persist - x.y) + 50.0;  // error three times persistence's, plus bias
  }
  EXPECT_LT(skill_s(r).s, 0.0);
}

TEST(Skill, SkipsDegenerateMonths) {
  std::vector<EvalRecord> r;
  // June: two usable records
  for (int h : {10, 11}) {
    auto x = rec(1000 + h, 900);
    x.issue_time = make_instant(2019, 6, 3, h);
    r.push_back(x);
  }
  // July: one record only
  auto lone = rec(800, 700);
  lone.issue_time = make_instant(2019, 7, 3, 10);
  r.push_back(lone);
  // August: zero variability (ratio unchanged)
  for (int h : {10, 11}) {
    auto x = rec(1800, 1700);
    x.i_prev = 1800;
    x.issue_time = make_instant(2019, 8, 3, h);
    r.push_back(x);
  }
  auto s = skill_s(r);
  EXPECT_EQ(s.months_used, 1u);
  EXPECT_EQ(s.months_skipped, 2u);
  std::vector<EvalRecord> none{lone};
  EXPECT_THROW(skill_s(none), Error);
}

TEST(Skill, PairsAcrossMonthBoundaryAreDropped) {
  auto x = rec(1000, 900);
  x.issue_time = make_instant(2019, 6, 30, 23);
  x.step = 2;
  EXPECT_FALSE(skill_eligible(x));
  x.issue_time = make_instant(2019, 6, 30, 20);
  EXPECT_TRUE(skill_eligible(x));
}

TEST(Aggregate, MeanAndSampleStdAcrossAois) {
  auto records = random_records(8, 4);
  auto report = aggregate(records, {GroupKey::Scheme});
  std::vector<double> per;
  for (int a = 0; a < 4; ++a) {
    std::vector<EvalRecord> mine;
    for (const auto& r : records)
      if (r.aoi_id == "S" + std::to_string(a)) mine.push_back(r);
    per.push_back(nrmse(mine));
  }
  double m = (per[0] + per[1] + per[2] + per[3]) / 4;
  double ss = 0;
  for (double v : per) ss += (v - m) * (v - m);
  const auto& cell = report.cells.at(0);
  ASSERT_EQ(cell.metric, "nrmse");
  EXPECT_NEAR(cell.mean, m, 1e-12);
  ASSERT_TRUE(cell.std);
  EXPECT_NEAR(*cell.std, std::sqrt(ss / 3), 1e-12);
  EXPECT_EQ(cell.n_aois, 4u);
  EXPECT_EQ(cell.n, static_cast<std::size_t>(std::count_if(records.begin(), records.end(), daytime_mask)));
  EXPECT_EQ(report.cells.at(1).metric, "skill_s");
}

TEST(Aggregate, GroupsAreDisjointAndNonEmpty) {
  auto records = random_records(9, 3);
  auto report = aggregate(records, {GroupKey::Aoi, GroupKey::Step});
  std::size_t total = 0;
  for (const auto& c : report.cells) {
    EXPECT_GT(c.n, 0u);
    EXPECT_FALSE(c.std.has_value());
    if (c.metric == "nrmse") total += c.n;
  }
  EXPECT_EQ(total, static_cast<std::size_t>(std::count_if(records.begin(), records.end(), daytime_mask)));
  EXPECT_EQ(report.cells.size(), 3u * 6u * 2u);
}

TEST(Aggregate, MonthKeyUsesValidTime) {
  auto x = rec(500, 400);
  x.issue_time = make_instant(2019, 6, 30, 22);
  x.step = 3;
  EXPECT_EQ(group_value(x, GroupKey::Month), "2019-07");
}

TEST(Report, CsvRoundTrip) {
  auto report = aggregate(random_records(10, 3), {GroupKey::Learner, GroupKey::Month});
  std::ostringstream out;
  write_report_csv(out, report);
  std::istringstream in(out.str());
  auto back = read_report_csv(in);
  EXPECT_EQ(back.group_by, report.group_by);
  ASSERT_EQ(back.cells.size(), report.cells.size());
  for (std::size_t i = 0; i < back.cells.size(); ++i) {
    EXPECT_EQ(back.cells[i].keys, report.cells[i].keys);
    EXPECT_EQ(back.cells[i].metric, report.cells[i].metric);
    EXPECT_EQ(back.cells[i].mean, report.cells[i].mean);
    EXPECT_EQ(back.cells[i].std, report.cells[i].std);
    EXPECT_EQ(back.cells[i].n, report.cells[i].n);
  }
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "learner,month,metric,mean,std,n");
}

TEST(Report, JsonLinesCarryCounts) {
  auto report = aggregate(random_records(11, 2), {GroupKey::Step});
  std::ostringstream out;
  write_report_jsonl(out, report);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("step"));
    EXPECT_TRUE(j.contains("n_aois"));
    ++lines;
  }
  EXPECT_EQ(lines, report.cells.size());
}

TEST(Records, CsvRoundTrip) {
  auto records = random_records(12, 2, 200);
  std::ostringstream out;
  write_records_csv(out, records);
  std::istringstream in(out.str());
  EXPECT_EQ(read_records_csv(in), records);
}

TEST(Records, AppendFromWindow) {
  auto s = testing::contiguous(make_instant(2019, 6, 1, 4), 18, 100.0);
  auto w = build_windows(s, InputCombo::All, {"A", "A", 52, 0}).windows.at(0);
  std::vector<EvalRecord> out;
  const std::array<double, 6> fc{1, 2, 3, 4, 5, 6};
  append_records(out, w, fc, "global", "mlp");
  ASSERT_EQ(out.size(), 6u);
  EXPECT_EQ(out[2].step, 3);
  EXPECT_EQ(out[2].valid_time(), w.future[2].timestamp);
  EXPECT_EQ(out[2].y, w.future[2].target_raw);
  EXPECT_EQ(out[2].y_hat, 3.0);
  EXPECT_EQ(out[2].i_prev, 111.0);
  EXPECT_EQ(out[2].ghi_prev, w.past[11].clearsky_ghi);
  EXPECT_EQ(out[2].combo, "all");
}

}  // namespace
}  // namespace heliox
