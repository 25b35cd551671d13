#ifndef HELIOX_LEARNERS_FOREST_HPP
#define HELIOX_LEARNERS_FOREST_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "heliox/learners/common.hpp"

namespace heliox::learners {

struct ForestParams {
  int trees = 20;
  int min_leaf = 2;
  int max_depth = 32;
  int max_features = 0;  // features tried per node; 0 = ceil(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 1;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of the node's training examples
  int count = 0;

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  [[nodiscard]] double predict(std::span<const double> x) const {
    int k = 0;
    while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(k)];
      k = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }

  [[nodiscard]] int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (!nodes[i].is_leaf()) {
        d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      }
    }
    return best;
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

/// Best axis-aligned split of one node.
struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double children_sse = 0.0;
};

namespace detail {

/// Exhaustive scan over `features` for the split minimising the summed
/// squared error of the two children, subject to `min_leaf`. Candidate
/// thresholds are midpoints between consecutive distinct values. Ties keep the
/// first candidate in (feature order, ascending threshold).
inline SplitChoice best_split(const Matrix& x, std::span<const double> y, std::span<const Eigen::Index> rows,
                              std::span<const int> features, int min_leaf, double parent_sse, double parent_mean) {
  const std::size_t n = rows.size();
  SplitChoice best;
  double best_score = 0.0;  // reduction in SSE
  std::vector<std::pair<double, double>> col(n);
  for (int f : features) {
    for (std::size_t i = 0; i < n; ++i) col[i] = {x(f, rows[i]), y[static_cast<std::size_t>(rows[i])] - parent_mean};
    std::sort(col.begin(), col.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0;
    double total = 0.0;
    for (const auto& c : col) total += c.second;
    for (std::size_t k = 1; k < n; ++k) {
      left_sum += col[k - 1].second;
      if (k < static_cast<std::size_t>(min_leaf) || n - k < static_cast<std::size_t>(min_leaf)) continue;
      if (!(col[k - 1].first < col[k].first)) continue;
      const double right_sum = total - left_sum;
      const double score = left_sum * left_sum / static_cast<double>(k) +
                           right_sum * right_sum / static_cast<double>(n - k) - total * total / static_cast<double>(n);
      if (score > best_score) {
        best_score = score;
        best.feature = f;
        double mid = 0.5 * (col[k - 1].first + col[k].first);
        if (!(mid < col[k].first)) mid = col[k - 1].first;
        best.threshold = mid;
      }
    }
  }
  best.children_sse = parent_sse - best_score;
  // Reject splits whose gain is lost in rounding.
  if (best.feature >= 0 && !(best_score > 1e-12 * std::max(parent_sse, 1e-300))) best.feature = -1;
  return best;
}

}  // namespace detail

/// Grows one regression tree on columns `rows` of `x` (d x N). `rows` may
/// contain repeats (bootstrap).
inline Tree fit_tree(const Matrix& x, std::span<const double> y, std::vector<Eigen::Index> rows,
                     const ForestParams& hp, std::uint64_t seed) {
  const int d = static_cast<int>(x.rows());
  const int mtry = hp.max_features > 0 ? std::min(hp.max_features, d)
                                        : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  Rng rng(seed);
  std::vector<int> all_features(static_cast<std::size_t>(d));
  std::iota(all_features.begin(), all_features.end(), 0);

  struct Pending {
    int node;
    std::size_t begin, end;
    int depth;
  };
  Tree tree;
  tree.nodes.emplace_back();
  std::vector<Pending> stack{{0, 0, rows.size(), 0}};
  while (!stack.empty()) {
    const Pending p = stack.back();
    stack.pop_back();
    std::span<Eigen::Index> node_rows(rows.data() + p.begin, p.end - p.begin);
    const std::size_t n = node_rows.size();
    double mean = 0.0;
    for (auto r : node_rows) mean += y[static_cast<std::size_t>(r)];
    mean /= static_cast<double>(n);
    double sse = 0.0;
    for (auto r : node_rows) sse += (y[static_cast<std::size_t>(r)] - mean) * (y[static_cast<std::size_t>(r)] - mean);
    {
      auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
      node.value = mean;
      node.count = static_cast<int>(n);
    }
    if (p.depth >= hp.max_depth || n < 2 * static_cast<std::size_t>(hp.min_leaf) || sse <= 0.0) continue;

    // Partial Fisher-Yates: the first mtry entries become this node's features.
    for (int i = 0; i < mtry; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(d - i));
      std::swap(all_features[static_cast<std::size_t>(i)], all_features[j]);
    }
    std::vector<int> candidates(all_features.begin(), all_features.begin() + mtry);
    std::sort(candidates.begin(), candidates.end());
    const auto split = detail::best_split(x, y, node_rows, candidates, hp.min_leaf, sse, mean);
    if (split.feature < 0) continue;

    auto mid = std::stable_partition(node_rows.begin(), node_rows.end(), [&](Eigen::Index r) {
      return x(split.feature, r) <= split.threshold;
    });
    const std::size_t left_n = static_cast<std::size_t>(mid - node_rows.begin());
    const int left = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(p.node)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, p.begin + left_n, p.end, p.depth + 1});
    stack.push_back({left, p.begin, p.begin + left_n, p.depth + 1});
  }
  return tree;
}

/// One forest per forecast step; each step's prediction is the mean of its trees.
struct ForestModel {
  ForestParams hp;
  InputCombo combo = InputCombo::All;
  int input_width = 0;
  std::array<std::vector<Tree>, kHorizon> steps;

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

inline std::vector<Tree> fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& hp,
                                    std::uint64_t seed) {
  const auto n = static_cast<std::uint64_t>(x.cols());
  std::vector<Tree> trees;
  for (int t = 0; t < hp.trees; ++t) {
    const std::uint64_t tree_seed = mix_seed(seed, static_cast<std::uint64_t>(t));
    std::vector<Eigen::Index> rows(n);
    if (hp.bootstrap) {
      Rng rng(mix_seed(tree_seed, 0xB007));
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    trees.push_back(fit_tree(x, y, std::move(rows), hp, tree_seed));
  }
  return trees;
}

inline ForestModel train_forest(const Dataset& data, const ForestParams& hp) {
  if (hp.trees < 1 || hp.min_leaf < 1 || hp.max_depth < 0)
    throw Error(ErrorCode::InvalidConfig, "forest hyperparameters");
  if (data.size() < 2 * hp.min_leaf)
    throw Error(ErrorCode::InsufficientData, std::to_string(data.size()) + " windows");
  ForestModel m;
  m.hp = hp;
  m.combo = data.combo;
  m.input_width = static_cast<int>(data.features.rows());
  for (int s = 0; s < kHorizon; ++s) {
    const Vector target = data.targets.row(s).transpose();
    m.steps[static_cast<std::size_t>(s)] =
        fit_forest(data.features, std::span<const double>(target.data(), static_cast<std::size_t>(target.size())), hp,
                   mix_seed(hp.seed, 1000 + static_cast<std::uint64_t>(s)));
  }
  return m;
}

inline ForestModel train_forest(std::span<const SampleWindow> windows, const ForestParams& hp = {}) {
  if (windows.size() < 2 * static_cast<std::size_t>(std::max(hp.min_leaf, 1)))
    throw Error(ErrorCode::InsufficientData, std::to_string(windows.size()) + " windows");
  return train_forest(make_dataset(windows), hp);
}

inline std::array<double, kHorizon> predict_forest(const ForestModel& m, std::span<const double> features) {
  if (static_cast<int>(features.size()) != m.input_width)
    throw Error(ErrorCode::LayoutMismatch,
                "expected " + std::to_string(m.input_width) + " features, got " + std::to_string(features.size()));
  std::array<double, kHorizon> out{};
  for (int s = 0; s < kHorizon; ++s) {
    const auto& trees = m.steps[static_cast<std::size_t>(s)];
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(features);
    out[static_cast<std::size_t>(s)] = trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
  }
  return out;
}

inline std::array<double, kHorizon> predict_forest(const ForestModel& m, const SampleWindow& w) {
  if (layout_width(w.combo) != m.input_width)
    throw Error(ErrorCode::LayoutMismatch, "window layout differs from training layout");
  const auto f = flatten_features(w);
  return predict_forest(m, f);
}

}  // namespace heliox::learners

#endif  // HELIOX_LEARNERS_FOREST_HPP
