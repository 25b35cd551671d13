#ifndef HELIOX_LEARNERS_MLP_HPP
#define HELIOX_LEARNERS_MLP_HPP

#include <cmath>
#include <span>
#include <vector>

#include "heliox/learners/common.hpp"

namespace heliox::learners {

/// Fully connected regressor over the flattened window: ReLU hidden layers,
/// linear output of width 6 (one per forecast step).
struct MlpModel {
  InputCombo combo = InputCombo::All;
  std::vector<int> widths;  // input, hidden..., output
  std::vector<double> params;

  [[nodiscard]] std::vector<DenseSlot> slots() const {
    std::size_t cursor = 0;
    return chain_slots(widths, cursor);
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : slots()) n += s.size();
    return n;
  }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

struct MlpShape {
  std::vector<int> hidden{128, 128, 128};
};

inline MlpModel init_mlp(InputCombo combo, const MlpShape& shape, std::uint64_t seed, int input_width = -1) {
  MlpModel m;
  m.combo = combo;
  m.widths.push_back(input_width > 0 ? input_width : layout_width(combo));
  for (int h : shape.hidden) m.widths.push_back(h);
  m.widths.push_back(kHorizon);
  m.params.assign(m.parameter_count(), 0.0);
  Rng rng(seed);
  for (const auto& s : m.slots()) glorot_init(m.params, s, rng);
  return m;
}

/// Forward pass; `inputs` is width x B. Returns 6 x B raw (unclamped) outputs.
inline Matrix mlp_forward(const MlpModel& m, const Matrix& inputs) {
  std::vector<Matrix> acts;
  chain_forward(m.params, m.slots(), inputs, acts, false);
  return acts.back();
}

/// Mean squared error over all outputs of the batch, and its gradient.
inline double mlp_loss_and_grad(const MlpModel& m, const Matrix& inputs, const Matrix& targets,
                                std::vector<double>& grad) {
  const auto slots = m.slots();
  std::vector<Matrix> acts;
  chain_forward(m.params, slots, inputs, acts, false);
  const Matrix diff = acts.back() - targets;
  const double count = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / count;
  grad.assign(m.params.size(), 0.0);
  chain_backward(m.params, slots, acts, (2.0 / count) * diff, grad, false);
  return loss;
}

inline double mlp_loss(const MlpModel& m, const Matrix& inputs, const Matrix& targets) {
  return (mlp_forward(m, inputs) - targets).squaredNorm() / static_cast<double>(targets.size());
}

/// Trains from an already-initialised model on a prepared dataset.
inline MlpModel train_mlp(MlpModel model, const Dataset& data, const TrainConfig& cfg, TrainHistory* history = nullptr) {
  if (data.features.rows() != model.widths.front()) throw Error(ErrorCode::LayoutMismatch, "dataset width");
  run_epochs(model.params, data, cfg, history, "mlp",
             [&model](const Matrix& x, const Matrix& y, std::vector<double>& grad) {
               return mlp_loss_and_grad(model, x, y, grad);
             });
  return model;
}

inline MlpModel train_mlp(std::span<const SampleWindow> windows, const TrainConfig& cfg, const MlpShape& shape = {},
                          TrainHistory* history = nullptr) {
  if (windows.empty()) throw Error(ErrorCode::InsufficientData, "empty training set");
  const Dataset data = make_dataset(windows);
  return train_mlp(init_mlp(data.combo, shape, cfg.init_seed), data, cfg, history);
}

}  // namespace heliox::learners

#endif  // HELIOX_LEARNERS_MLP_HPP
