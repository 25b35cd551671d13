#ifndef HELIOX_LEARNERS_LSTM_HPP
#define HELIOX_LEARNERS_LSTM_HPP

#include <cmath>
#include <span>
#include <vector>

#include "heliox/learners/common.hpp"

namespace heliox::learners {

struct LstmShape {
  std::vector<int> encoder{32, 32, 32};
  int hidden = 128;
  std::vector<int> decoder{128, 128};
};

/// Autoregressive recurrent forecaster. Each of the 18 steps feeds
/// [encoded weather, calculated features, irradiance] into one recurrent cell;
/// the first 12 steps consume observed irradiance, the last 6 consume the
/// model's own previous output. The weather encoder and the output decoder are
/// one set of weights applied at every step.
struct LstmModel {
  InputCombo combo = InputCombo::All;
  LstmShape shape;
  std::vector<double> params;

  struct Layout {
    std::vector<DenseSlot> encoder;  // empty when the combo has no weather
    DenseSlot input_gates;           // W_x (4H x I) and bias (4H), gate order i, f, g, o
    std::size_t recurrent_offset = 0;  // W_h (4H x H)
    std::vector<DenseSlot> decoder;
    int input_width = 0;
    int encoded_width = 0;
    std::size_t total = 0;
  };

  [[nodiscard]] Layout layout() const {
    Layout l;
    std::size_t cursor = 0;
    if (uses_weather(combo)) {
      std::vector<int> w{NormalizedWeather::kWidth};
      w.insert(w.end(), shape.encoder.begin(), shape.encoder.end());
      l.encoder = chain_slots(w, cursor);
      l.encoded_width = w.back();
    }
    l.input_width = l.encoded_width + CalculatedFeatures::kWidth + (uses_irradiance(combo) ? 1 : 0);
    const int h = shape.hidden;
    l.input_gates = DenseSlot{l.input_width, 4 * h, cursor};
    cursor += l.input_gates.size();
    l.recurrent_offset = cursor;
    cursor += static_cast<std::size_t>(4 * h) * h;
    std::vector<int> d{h};
    d.insert(d.end(), shape.decoder.begin(), shape.decoder.end());
    d.push_back(1);
    l.decoder = chain_slots(d, cursor);
    l.total = cursor;
    return l;
  }

  friend bool operator==(const LstmModel& a, const LstmModel& b) {
    return a.combo == b.combo && a.shape.encoder == b.shape.encoder && a.shape.hidden == b.shape.hidden &&
           a.shape.decoder == b.shape.decoder && a.params == b.params;
  }
};

inline MatrixMap recurrent_weights(std::vector<double>& p, const LstmModel::Layout& l, int hidden) {
  return {p.data() + l.recurrent_offset, 4 * hidden, hidden};
}
inline ConstMatrixMap recurrent_weights(const std::vector<double>& p, const LstmModel::Layout& l, int hidden) {
  return {p.data() + l.recurrent_offset, 4 * hidden, hidden};
}

inline LstmModel init_lstm(InputCombo combo, const LstmShape& shape, std::uint64_t seed) {
  LstmModel m;
  m.combo = combo;
  m.shape = shape;
  const auto l = m.layout();
  m.params.assign(l.total, 0.0);
  Rng rng(seed);
  for (const auto& s : l.encoder) glorot_init(m.params, s, rng);
  glorot_init(m.params, l.input_gates, rng);
  const int h = shape.hidden;
  auto wh = recurrent_weights(m.params, l, h);
  for (int g = 0; g < 4; ++g) wh.block(g * h, 0, h, h) = orthogonal(h, rng);
  l.input_gates.b(m.params).segment(h, h).setConstant(1.0);  // forget gate
  for (const auto& s : l.decoder) glorot_init(m.params, s, rng);
  return m;
}

/// Offsets of one step's channels inside a flattened window column (-1 = absent).
struct StepOffsets {
  int calc = -1;
  int weather = -1;
  int irradiance = -1;
};

inline std::array<StepOffsets, kWindowSteps> step_offsets(InputCombo combo) {
  std::array<StepOffsets, kWindowSteps> out{};
  int k = 0;
  for (int t = 0; t < kWindowSteps; ++t) {
    out[static_cast<std::size_t>(t)].calc = k;
    k += CalculatedFeatures::kWidth;
    if (uses_weather(combo)) {
      out[static_cast<std::size_t>(t)].weather = k;
      k += NormalizedWeather::kWidth;
    }
    if (t < kPastSteps && uses_irradiance(combo)) out[static_cast<std::size_t>(t)].irradiance = k++;
  }
  return out;
}

/// Applies the shared weather encoder to a (8 x B) block.
inline Matrix lstm_encode(const LstmModel& m, const Matrix& weather) {
  std::vector<Matrix> acts;
  chain_forward(m.params, m.layout().encoder, weather, acts, true);
  return acts.back();
}

namespace detail {

inline Matrix sigmoid(const Matrix& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

struct LstmTape {
  std::vector<std::vector<Matrix>> enc;  // per step encoder activations
  std::vector<Matrix> x, i, f, g, o, c, tc, h;
  std::vector<std::vector<Matrix>> dec;  // per step decoder activations (empty if not decoded)
  std::vector<Matrix> out;               // 1 x B per decoded step
};

inline bool decodes_at(int t, bool irradiance) {
  return t >= kPastSteps || (irradiance && t == kPastSteps - 1);
}

inline void lstm_run(const LstmModel& m, const LstmModel::Layout& l, const Matrix& features, LstmTape& tape) {
  const int h = m.shape.hidden;
  const Eigen::Index b = features.cols();
  const bool irr = uses_irradiance(m.combo);
  const auto offs = step_offsets(m.combo);
  const auto wx = l.input_gates.W(m.params);
  const auto bias = l.input_gates.b(m.params);
  const auto wh = recurrent_weights(m.params, l, h);

  tape.enc.assign(kWindowSteps, {});
  tape.dec.assign(kWindowSteps, {});
  for (auto* v : {&tape.x, &tape.i, &tape.f, &tape.g, &tape.o, &tape.c, &tape.tc, &tape.h, &tape.out})
    v->assign(kWindowSteps, Matrix());

  Matrix h_prev = Matrix::Zero(h, b);
  Matrix c_prev = Matrix::Zero(h, b);
  for (int t = 0; t < kWindowSteps; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const auto& off = offs[ut];
    Matrix x(l.input_width, b);
    int row = 0;
    if (off.weather >= 0) {
      chain_forward(m.params, l.encoder, features.middleRows(off.weather, NormalizedWeather::kWidth), tape.enc[ut],
                    true);
      x.topRows(l.encoded_width) = tape.enc[ut].back();
      row = l.encoded_width;
    }
    x.middleRows(row, CalculatedFeatures::kWidth) = features.middleRows(off.calc, CalculatedFeatures::kWidth);
    row += CalculatedFeatures::kWidth;
    if (irr) x.row(row) = t < kPastSteps ? Matrix(features.row(off.irradiance)) : tape.out[ut - 1];

    Matrix z = wx * x + wh * h_prev;
    z.colwise() += bias;
    tape.i[ut] = sigmoid(z.topRows(h));
    tape.f[ut] = sigmoid(z.middleRows(h, h));
    tape.g[ut] = z.middleRows(2 * h, h).array().tanh().matrix();
    tape.o[ut] = sigmoid(z.bottomRows(h));
    tape.c[ut] = tape.f[ut].cwiseProduct(c_prev) + tape.i[ut].cwiseProduct(tape.g[ut]);
    tape.tc[ut] = tape.c[ut].array().tanh().matrix();
    tape.h[ut] = tape.o[ut].cwiseProduct(tape.tc[ut]);
    tape.x[ut] = std::move(x);
    if (decodes_at(t, irr)) {
      chain_forward(m.params, l.decoder, tape.h[ut], tape.dec[ut], false);
      tape.out[ut] = tape.dec[ut].back();
    }
    h_prev = tape.h[ut];
    c_prev = tape.c[ut];
  }
}

}  // namespace detail

/// Raw (unclamped) outputs for the 6 prediction steps, 6 x B.
inline Matrix lstm_forward(const LstmModel& m, const Matrix& features) {
  const auto l = m.layout();
  detail::LstmTape tape;
  detail::lstm_run(m, l, features, tape);
  Matrix out(kHorizon, features.cols());
  for (int s = 0; s < kHorizon; ++s) out.row(s) = tape.out[static_cast<std::size_t>(kPastSteps + s)];
  return out;
}

inline double lstm_loss(const LstmModel& m, const Matrix& features, const Matrix& targets) {
  return (lstm_forward(m, features) - targets).squaredNorm() / static_cast<double>(targets.size());
}

/// MSE over the 6 prediction outputs and its gradient by backpropagation
/// through all 18 steps.
inline double lstm_loss_and_grad(const LstmModel& m, const Matrix& features, const Matrix& targets,
                                 std::vector<double>& grad) {
  const auto l = m.layout();
  const int h = m.shape.hidden;
  const Eigen::Index b = features.cols();
  const bool irr = uses_irradiance(m.combo);
  detail::LstmTape tape;
  detail::lstm_run(m, l, features, tape);

  const double count = static_cast<double>(kHorizon * b);
  double loss = 0.0;
  for (int s = 0; s < kHorizon; ++s)
    loss += (tape.out[static_cast<std::size_t>(kPastSteps + s)] - targets.row(s)).squaredNorm();
  loss /= count;

  grad.assign(m.params.size(), 0.0);
  const auto wx = l.input_gates.W(m.params);
  const auto wh = recurrent_weights(m.params, l, h);
  auto gwx = l.input_gates.W(grad);
  auto gb = l.input_gates.b(grad);
  auto gwh = recurrent_weights(grad, l, h);

  Matrix dh_next = Matrix::Zero(h, b);
  Matrix dc_next = Matrix::Zero(h, b);
  Matrix d_irr_next;  // dLoss/d(irradiance input at step t+1)
  for (int t = kWindowSteps - 1; t >= 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    Matrix dh = dh_next;
    if (detail::decodes_at(t, irr)) {
      Matrix d_out = Matrix::Zero(1, b);
      if (t >= kPastSteps) d_out += (2.0 / count) * (tape.out[ut] - targets.row(t - kPastSteps));
      if (irr && t + 1 < kWindowSteps) d_out += d_irr_next;
      dh += chain_backward(m.params, l.decoder, tape.dec[ut], d_out, grad, false);
    }
    const Matrix& c_prev = t > 0 ? tape.c[ut - 1] : Matrix::Zero(h, b).eval();
    const Matrix& h_prev = t > 0 ? tape.h[ut - 1] : Matrix::Zero(h, b).eval();
    const auto& i = tape.i[ut];
    const auto& f = tape.f[ut];
    const auto& g = tape.g[ut];
    const auto& o = tape.o[ut];
    const auto& tc = tape.tc[ut];

    Matrix dc = dc_next + dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
    Matrix dz(4 * h, b);
    dz.topRows(h) = dc.cwiseProduct(g).cwiseProduct((i.array() * (1.0 - i.array())).matrix());
    dz.middleRows(h, h) = dc.cwiseProduct(c_prev).cwiseProduct((f.array() * (1.0 - f.array())).matrix());
    dz.middleRows(2 * h, h) = dc.cwiseProduct(i).cwiseProduct((1.0 - g.array().square()).matrix());
    dz.bottomRows(h) = dh.cwiseProduct(tc).cwiseProduct((o.array() * (1.0 - o.array())).matrix());

    gwx.noalias() += dz * tape.x[ut].transpose();
    gwh.noalias() += dz * h_prev.transpose();
    gb += dz.rowwise().sum();

    Matrix dx = wx.transpose() * dz;
    dh_next = wh.transpose() * dz;
    dc_next = dc.cwiseProduct(f);
    if (!l.encoder.empty()) chain_backward(m.params, l.encoder, tape.enc[ut], dx.topRows(l.encoded_width), grad, true);
    if (irr) d_irr_next = dx.bottomRows(1);
  }
  return loss;
}

inline LstmModel train_lstm(LstmModel model, const Dataset& data, const TrainConfig& cfg,
                            TrainHistory* history = nullptr) {
  if (data.features.rows() != layout_width(model.combo)) throw Error(ErrorCode::LayoutMismatch, "dataset width");
  run_epochs(model.params, data, cfg, history, "lstm",
             [&model](const Matrix& x, const Matrix& y, std::vector<double>& grad) {
               return lstm_loss_and_grad(model, x, y, grad);
             });
  return model;
}

inline LstmModel train_lstm(std::span<const SampleWindow> windows, const TrainConfig& cfg, const LstmShape& shape = {},
                            TrainHistory* history = nullptr) {
  if (windows.empty()) throw Error(ErrorCode::InsufficientData, "empty training set");
  const Dataset data = make_dataset(windows);
  return train_lstm(init_lstm(data.combo, shape, cfg.init_seed), data, cfg, history);
}

}  // namespace heliox::learners

#endif  // HELIOX_LEARNERS_LSTM_HPP
