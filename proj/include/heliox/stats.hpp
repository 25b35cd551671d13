#ifndef HELIOX_STATS_HPP
#define HELIOX_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "heliox/csv.hpp"
#include "heliox/error.hpp"

namespace heliox::stats {

/// Ranks (1-based) with ties sharing the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

struct WilcoxonResult {
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  double p_two_sided = 1.0;
  std::size_t n = 0;       // pairs after dropping zero differences
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactLimit = 20;

/// Paired two-sided signed-rank test. Exact null distribution for n <= 20
/// (all 2^n sign assignments, counted by subset-sum over doubled ranks so
/// tied half-ranks stay integral); tie-corrected normal approximation above.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidConfig, "paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] - y[i] != 0.0) diff.push_back(x[i] - y[i]);
  const std::size_t n = diff.size();
  if (n < 5) throw Error(ErrorCode::TooFewPairs, std::to_string(n) + " non-zero differences");

  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::fabs(diff[i]);
  const auto ranks = average_ranks(mags);

  WilcoxonResult out;
  out.n = n;
  for (std::size_t i = 0; i < n; ++i)
    if (diff[i] > 0) out.statistic += ranks[i];

  if (n <= kWilcoxonExactLimit) {
    out.exact = true;
    std::vector<std::uint64_t> doubled(n);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<std::uint64_t>(std::llround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<std::uint64_t> counts(total + 1, 0);
    counts[0] = 1;
    for (auto r : doubled)
      for (std::uint64_t s = total; s >= r; --s) {
        counts[s] += counts[s - r];
        if (s == r) break;
      }
    const auto w = static_cast<std::uint64_t>(std::llround(2.0 * out.statistic));
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t s = 0; s <= total; ++s) {
      if (s <= w) le += counts[s];
      if (s >= w) ge += counts[s];
    }
    const double denom = std::ldexp(1.0, static_cast<int>(n));
    out.p_two_sided = std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / denom);
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    std::vector<double> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      var -= (t * t * t - t) / 48.0;
      i = j + 1;
    }
    out.p_two_sided = var > 0 ? normal_two_sided_p((out.statistic - mean) / std::sqrt(var)) : 1.0;
  }
  return out;
}

/// Problems (rows) x methods (columns).
struct ScoreMatrix {
  std::vector<std::string> methods;
  std::vector<std::string> problems;
  std::vector<std::vector<double>> values;  // values[problem][method]
  bool lower_is_better = true;
};

struct FriedmanResult {
  std::vector<double> avg_ranks;  // per method; lower = better
  double statistic = 0.0;
  double p = 1.0;
};

/// Friedman aligned-ranks test: subtract each problem's mean, rank all
/// aligned values jointly, compare rank totals against a chi-square with
/// k - 1 degrees of freedom.
inline FriedmanResult friedman_aligned_ranks(const ScoreMatrix& m) {
  const std::size_t n = m.values.size();
  const std::size_t k = m.methods.size();
  if (k < 2 || n < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 methods and 2 problems");
  std::vector<double> aligned;
  aligned.reserve(n * k);
  for (const auto& row : m.values) {
    if (row.size() != k) throw Error(ErrorCode::InvalidConfig, "ragged score matrix");
    const double sign = m.lower_is_better ? 1.0 : -1.0;
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(k);
    for (double v : row) aligned.push_back(sign * (v - mean));
  }
  if (std::all_of(aligned.begin(), aligned.end(), [&](double v) { return v == aligned.front(); }))
    throw Error(ErrorCode::DegenerateMatrix, "all aligned scores equal");
  const auto ranks = average_ranks(aligned);

  FriedmanResult out;
  std::vector<double> method_total(k, 0.0), problem_total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      method_total[j] += ranks[i * k + j];
      problem_total[i] += ranks[i * k + j];
    }
  for (double t : method_total) out.avg_ranks.push_back(t / static_cast<double>(n));

  const double kk = static_cast<double>(k);
  const double nn = static_cast<double>(n);
  const double kn = kk * nn;
  double sum_methods = 0.0, sum_problems = 0.0;
  for (double t : method_total) sum_methods += t * t;
  for (double t : problem_total) sum_problems += t * t;
  const double numer = (kk - 1.0) * (sum_methods - (kk * nn * nn / 4.0) * (kn + 1.0) * (kn + 1.0));
  const double denom = kn * (kn + 1.0) * (2.0 * kn + 1.0) / 6.0 - sum_problems / kk;
  out.statistic = denom > 0.0 ? numer / denom : 0.0;
  out.p = out.statistic > 0.0 ? boost::math::gamma_q((kk - 1.0) / 2.0, out.statistic / 2.0) : 1.0;
  return out;
}

struct HolmOutcome {
  double adjusted_p = 1.0;
  bool reject = false;

  friend bool operator==(const HolmOutcome&, const HolmOutcome&) = default;
};

/// Holm step-down adjustment; results are in input order.
inline std::vector<HolmOutcome> holm_posthoc(std::span<const double> p_values, double alpha = 0.1) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<HolmOutcome> out(m);
  double running = 0.0;
  bool rejecting = true;
  for (std::size_t pos = 0; pos < m; ++pos) {
    const std::size_t i = order[pos];
    running = std::max(running, std::min(1.0, static_cast<double>(m - pos) * p_values[i]));
    out[i].adjusted_p = running;
    rejecting = rejecting && running < alpha;
    out[i].reject = rejecting;
  }
  return out;
}

struct RankingRow {
  std::string method;
  double avg_rank = 0.0;
  std::optional<double> adjusted_p;  // absent for the control
  bool reject = false;
};

struct RankingTable {
  std::vector<RankingRow> rows;  // sorted by average rank
  FriedmanResult friedman;
};

/// Aligned-ranks test followed by Holm-adjusted comparisons of every method
/// against the best-ranked one (z = (R_j - R_0) / sqrt(k (n + 1) / 6)).
inline RankingTable compare_methods(const ScoreMatrix& m, double alpha = 0.1) {
  RankingTable table;
  table.friedman = friedman_aligned_ranks(m);
  const auto& r = table.friedman.avg_ranks;
  const std::size_t k = r.size();
  const std::size_t control =
      static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin());
  const double se = std::sqrt(static_cast<double>(k) * (static_cast<double>(m.values.size()) + 1.0) / 6.0);
  std::vector<double> ps;
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < k; ++j) {
    if (j == control) continue;
    ps.push_back(normal_two_sided_p((r[j] - r[control]) / se));
    others.push_back(j);
  }
  const auto holm = holm_posthoc(ps, alpha);
  table.rows.push_back({m.methods[control], r[control], std::nullopt, false});
  for (std::size_t i = 0; i < others.size(); ++i)
    table.rows.push_back({m.methods[others[i]], r[others[i]], holm[i].adjusted_p, holm[i].reject});
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const RankingRow& a, const RankingRow& b) { return a.avg_rank < b.avg_rank; });
  return table;
}

inline void write_rankings_csv(std::ostream& out, const RankingTable& t, const std::string& group_label = {},
                               bool header = true) {
  if (header) out << (group_label.empty() ? "" : "group,") << "method,rank,p,reject\n";
  for (const auto& row : t.rows) {
    if (!group_label.empty()) out << csv::escape(group_label) << ',';
    out << csv::escape(row.method) << ',' << csv::format_double(row.avg_rank) << ','
        << (row.adjusted_p ? csv::format_double(*row.adjusted_p) : "-") << ',' << (row.reject ? "true" : "false")
        << '\n';
  }
}

}  // namespace heliox::stats

#endif  // HELIOX_STATS_HPP
