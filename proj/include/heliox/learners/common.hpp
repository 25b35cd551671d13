#ifndef HELIOX_LEARNERS_COMMON_HPP
#define HELIOX_LEARNERS_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string_view>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "heliox/error.hpp"
#include "heliox/features.hpp"
#include "heliox/rng.hpp"

namespace heliox::learners {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

struct TrainConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 20;
  int batch_size = 256;
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
  bool shuffle = true;

  void validate() const {
    if (!(learning_rate >= 0.0) || epochs < 1 || batch_size < 1)
      throw Error(ErrorCode::InvalidConfig, "learning_rate >= 0, epochs >= 1, batch_size >= 1 required");
  }
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean per-batch loss within each epoch
};

/// Adaptive moment estimation over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& cfg)
      : lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.epsilon), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

/// Location of one dense layer (W: out x in, column-major, then b: out)
/// inside a flat parameter buffer.
struct DenseSlot {
  int in = 0;
  int out = 0;
  std::size_t offset = 0;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(in) * out + static_cast<std::size_t>(out); }
  [[nodiscard]] ConstMatrixMap W(const std::vector<double>& p) const { return {p.data() + offset, out, in}; }
  [[nodiscard]] ConstVectorMap b(const std::vector<double>& p) const {
    return {p.data() + offset + static_cast<std::size_t>(in) * out, out};
  }
  [[nodiscard]] MatrixMap W(std::vector<double>& p) const { return {p.data() + offset, out, in}; }
  [[nodiscard]] VectorMap b(std::vector<double>& p) const {
    return {p.data() + offset + static_cast<std::size_t>(in) * out, out};
  }
};

/// Appends a chain of dense layers to a parameter layout and returns their slots.
inline std::vector<DenseSlot> chain_slots(std::span<const int> widths, std::size_t& cursor) {
  std::vector<DenseSlot> slots;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    DenseSlot s{widths[i], widths[i + 1], cursor};
    cursor += s.size();
    slots.push_back(s);
  }
  return slots;
}

/// Scaled-uniform initialisation, bound sqrt(6 / (fan_in + fan_out)); zero bias.
inline void glorot_init(std::vector<double>& p, const DenseSlot& s, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
  auto W = s.W(p);
  for (Eigen::Index j = 0; j < W.cols(); ++j)
    for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = rng.uniform(-bound, bound);
  s.b(p).setZero();
}

/// Random orthogonal square matrix (QR of a Gaussian matrix, sign-fixed).
inline Matrix orthogonal(int n, Rng& rng) {
  Matrix a(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

/// Dense forward pass through a chain; hidden layers use ReLU, the last layer
/// uses ReLU only when `relu_last`. Stores every layer's output in `acts`
/// (acts[0] = input).
inline void chain_forward(const std::vector<double>& p, const std::vector<DenseSlot>& slots, const Matrix& input,
                          std::vector<Matrix>& acts, bool relu_last) {
  acts.resize(slots.size() + 1);
  acts[0] = input;
  for (std::size_t l = 0; l < slots.size(); ++l) {
    const auto& s = slots[l];
    acts[l + 1].noalias() = s.W(p) * acts[l];
    acts[l + 1].colwise() += s.b(p);
    if (l + 1 < slots.size() || relu_last) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
  }
}

/// Backward pass for chain_forward. `d_out` is dLoss/d(last output); gradients
/// are accumulated into `grad`. Returns dLoss/d(input).
inline Matrix chain_backward(const std::vector<double>& p, const std::vector<DenseSlot>& slots,
                             const std::vector<Matrix>& acts, Matrix d_out, std::vector<double>& grad,
                             bool relu_last) {
  for (std::size_t l = slots.size(); l-- > 0;) {
    const auto& s = slots[l];
    if (l + 1 < slots.size() || relu_last) d_out = d_out.cwiseProduct((acts[l + 1].array() > 0.0).cast<double>().matrix());
    s.W(grad).noalias() += d_out * acts[l].transpose();
    s.b(grad) += d_out.rowwise().sum();
    Matrix d_in = s.W(p).transpose() * d_out;
    d_out = std::move(d_in);
  }
  return d_out;
}

/// FNV-style word hash over double bit patterns and strings.
class Fingerprint {
 public:
  void add(double v) {
    std::uint64_t bits = 0;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof v);
    hash_ = (hash_ ^ bits) * 0x100000001B3ULL;
    hash_ ^= hash_ >> 29;
  }
  void add(std::string_view s) {
    for (unsigned char c : s) {
      hash_ ^= c;
      hash_ *= 0x100000001B3ULL;
    }
  }
  [[nodiscard]] std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

/// Training matrices: features (width x N, column per window) and transformed
/// targets (6 x N).
struct Dataset {
  Matrix features;
  Matrix targets;
  InputCombo combo = InputCombo::All;
  std::uint64_t fingerprint = 0;

  [[nodiscard]] Eigen::Index size() const { return features.cols(); }
};

inline Dataset make_dataset(std::span<const SampleWindow> windows) {
  if (windows.empty()) throw Error(ErrorCode::InsufficientData, "no training windows");
  Dataset d;
  d.combo = windows.front().combo;
  const int width = layout_width(d.combo);
  const auto n = static_cast<Eigen::Index>(windows.size());
  d.features.resize(width, n);
  d.targets.resize(kHorizon, n);
  Fingerprint fp;
  fp.add(to_string(d.combo));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& w = windows[static_cast<std::size_t>(j)];
    if (w.combo != d.combo) throw Error(ErrorCode::ComboMismatch, "mixed input combos in training set");
    flatten_features(w, std::span<double>(d.features.col(j).data(), static_cast<std::size_t>(width)));
    for (int s = 0; s < kHorizon; ++s) d.targets(s, j) = w.future[static_cast<std::size_t>(s)].target_t;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < width; ++i) fp.add(d.features(i, j));
    for (int s = 0; s < kHorizon; ++s) fp.add(d.targets(s, j));
  }
  d.fingerprint = fp.value();
  return d;
}

/// Batch order for one epoch.
inline std::vector<Eigen::Index> epoch_order(Eigen::Index n, bool shuffle, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (shuffle) rng.shuffle(std::span<Eigen::Index>(idx));
  return idx;
}

/// Minibatch Adam over `data` for cfg.epochs. `loss_and_grad(xb, yb, grad)`
/// evaluates at the current `params`, returns the batch loss and fills `grad`.
template <typename LossAndGrad>
void run_epochs(std::vector<double>& params, const Dataset& data, const TrainConfig& cfg, TrainHistory* history,
                std::string_view tag, LossAndGrad&& loss_and_grad) {
  cfg.validate();
  if (data.size() == 0) throw Error(ErrorCode::InsufficientData, "empty training set");
  Adam adam(params.size(), cfg);
  Rng shuffle_rng(cfg.shuffle_seed);
  std::vector<double> grad;
  Matrix xb, yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), cfg.shuffle, shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      xb.resize(data.features.rows(), b);
      yb.resize(kHorizon, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        xb.col(j) = data.features.col(order[start + static_cast<std::size_t>(j)]);
        yb.col(j) = data.targets.col(order[start + static_cast<std::size_t>(j)]);
      }
      const double loss = loss_and_grad(xb, yb, grad);
      if (!std::isfinite(loss))
        throw Error(ErrorCode::NonFiniteLoss, std::string(tag) + " epoch " + std::to_string(epoch) + " batch " +
                                                  std::to_string(batches) + " loss " + std::to_string(loss));
      adam.step(params, grad);
      loss_sum += loss;
      ++batches;
    }
    if (history != nullptr) history->epoch_loss.push_back(loss_sum / batches);
  }
}

}  // namespace heliox::learners

#endif  // HELIOX_LEARNERS_COMMON_HPP
