#ifndef HELIOX_LEARNERS_MODEL_HPP
#define HELIOX_LEARNERS_MODEL_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "heliox/learners/common.hpp"
#include "heliox/learners/forest.hpp"
#include "heliox/learners/lstm.hpp"
#include "heliox/learners/mlp.hpp"

namespace heliox::learners {

enum class LearnerKind { Forest, Mlp, Lstm };

inline std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::Forest: return "forest";
    case LearnerKind::Mlp: return "mlp";
    case LearnerKind::Lstm: return "lstm";
  }
  return "mlp";
}

inline LearnerKind parse_learner(std::string_view s) {
  if (s == "forest") return LearnerKind::Forest;
  if (s == "mlp") return LearnerKind::Mlp;
  if (s == "lstm") return LearnerKind::Lstm;
  throw Error(ErrorCode::InvalidConfig, "unknown learner '" + std::string(s) + "'");
}

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::array<char, 8> kModelMagic{'H', 'E', 'L', 'I', 'O', 'X', '0', '1'};

struct ModelMetadata {
  std::string scheme;
  std::string plan_id;
  InputCombo combo = InputCombo::All;
  std::uint64_t data_fingerprint = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint32_t format_version = kModelFormatVersion;

  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

/// A trained learner plus provenance. Treated as immutable once built.
struct TrainedModel {
  std::variant<ForestModel, MlpModel, LstmModel> learner;
  ModelMetadata meta;

  [[nodiscard]] LearnerKind kind() const { return static_cast<LearnerKind>(learner.index()); }
  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct Forecast {
  std::array<double, kHorizon> transformed{};  // clamped to >= -1
  std::array<double, kHorizon> kj_m2{};
};

inline Forecast make_forecast(const std::array<double, kHorizon>& raw) {
  Forecast f;
  for (int s = 0; s < kHorizon; ++s) {
    const auto us = static_cast<std::size_t>(s);
    f.transformed[us] = std::max(kTransformFloor, raw[us]);
    f.kj_m2[us] = inverse_transform_irradiance(f.transformed[us]);
  }
  return f;
}

/// Forecasts for a batch of windows, all of which must match the model's combo.
inline std::vector<Forecast> predict_batch(const TrainedModel& model, std::span<const SampleWindow> windows) {
  for (const auto& w : windows) {
    if (w.combo != model.meta.combo)
      throw Error(ErrorCode::ComboMismatch, "model combo " + std::string(to_string(model.meta.combo)) +
                                                ", window combo " + std::string(to_string(w.combo)));
  }
  std::vector<Forecast> out;
  out.reserve(windows.size());
  const int width = layout_width(model.meta.combo);
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t end = std::min(windows.size(), start + kChunk);
    Matrix x(width, static_cast<Eigen::Index>(end - start));
    for (std::size_t j = start; j < end; ++j)
      flatten_features(windows[j], std::span<double>(x.col(static_cast<Eigen::Index>(j - start)).data(),
                                                     static_cast<std::size_t>(width)));
    Matrix raw;
    if (const auto* f = std::get_if<ForestModel>(&model.learner)) {
      raw.resize(kHorizon, x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const auto p = predict_forest(*f, std::span<const double>(x.col(j).data(), static_cast<std::size_t>(width)));
        for (int s = 0; s < kHorizon; ++s) raw(s, j) = p[static_cast<std::size_t>(s)];
      }
    } else if (const auto* m = std::get_if<MlpModel>(&model.learner)) {
      if (m->widths.front() != width) throw Error(ErrorCode::LayoutMismatch, "mlp input width");
      raw = mlp_forward(*m, x);
    } else {
      raw = lstm_forward(std::get<LstmModel>(model.learner), x);
    }
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      std::array<double, kHorizon> r{};
      for (int s = 0; s < kHorizon; ++s) r[static_cast<std::size_t>(s)] = raw(s, j);
      out.push_back(make_forecast(r));
    }
  }
  return out;
}

inline Forecast predict(const TrainedModel& model, const SampleWindow& window) {
  return predict_batch(model, std::span<const SampleWindow>(&window, 1)).front();
}

// ---------------------------------------------------------------------------
// Persistence.
//
// Layout:
//   8 bytes   magic "HELIOX01"
//   u32 LE    format version
//   u64 LE    header length H
//   H bytes   JSON header: learner kind, combo, shapes, seeds, metadata, and
//             "blocks": [{"name", "count"}...] in file order
//   per block: u64 LE count, then count little-endian IEEE-754 doubles
//
// Forest nodes are stored 6 doubles each: feature, threshold, left, right,
// value, count (integers are exact in a double).

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 4);
}

inline void read_exact(std::istream& in, char* buf, std::size_t n, const char* what) {
  in.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw Error(ErrorCode::Truncated, what);
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

struct Block {
  std::string name;
  std::vector<double> values;
};

inline std::vector<double> encode_tree(const Tree& t) {
  std::vector<double> v;
  v.reserve(t.nodes.size() * 6);
  for (const auto& n : t.nodes) {
    v.insert(v.end(), {static_cast<double>(n.feature), n.threshold, static_cast<double>(n.left),
                       static_cast<double>(n.right), n.value, static_cast<double>(n.count)});
  }
  return v;
}

inline Tree decode_tree(const std::vector<double>& v) {
  if (v.size() % 6 != 0 || v.empty()) throw Error(ErrorCode::CorruptModel, "tree block size");
  Tree t;
  const auto n = static_cast<int>(v.size() / 6);
  for (int i = 0; i < n; ++i) {
    const double* p = v.data() + 6 * static_cast<std::size_t>(i);
    TreeNode node{static_cast<int>(p[0]), p[1], static_cast<int>(p[2]), static_cast<int>(p[3]), p[4],
                  static_cast<int>(p[5])};
    if (!node.is_leaf() && (node.left <= i || node.right <= i || node.left >= n || node.right >= n))
      throw Error(ErrorCode::CorruptModel, "tree child index");
    t.nodes.push_back(node);
  }
  return t;
}

}  // namespace detail

inline void save_model(const TrainedModel& model, std::ostream& out) {
  nlohmann::json h;
  h["learner"] = std::string(to_string(model.kind()));
  h["combo"] = std::string(to_string(model.meta.combo));
  h["scheme"] = model.meta.scheme;
  h["plan_id"] = model.meta.plan_id;
  h["data_fingerprint"] = model.meta.data_fingerprint;
  h["init_seed"] = model.meta.init_seed;
  h["shuffle_seed"] = model.meta.shuffle_seed;

  std::vector<detail::Block> blocks;
  if (const auto* f = std::get_if<ForestModel>(&model.learner)) {
    h["forest"] = {{"trees", f->hp.trees},          {"min_leaf", f->hp.min_leaf}, {"max_depth", f->hp.max_depth},
                   {"max_features", f->hp.max_features}, {"bootstrap", f->hp.bootstrap}, {"seed", f->hp.seed},
                   {"input_width", f->input_width}};
    for (int s = 0; s < kHorizon; ++s) {
      const auto& trees = f->steps[static_cast<std::size_t>(s)];
      for (std::size_t t = 0; t < trees.size(); ++t)
        blocks.push_back({"step" + std::to_string(s) + "/tree" + std::to_string(t), detail::encode_tree(trees[t])});
    }
  } else if (const auto* m = std::get_if<MlpModel>(&model.learner)) {
    h["mlp"] = {{"widths", m->widths}};
    blocks.push_back({"params", m->params});
  } else {
    const auto& l = std::get<LstmModel>(model.learner);
    h["lstm"] = {{"encoder", l.shape.encoder}, {"hidden", l.shape.hidden}, {"decoder", l.shape.decoder}};
    blocks.push_back({"params", l.params});
  }
  h["blocks"] = nlohmann::json::array();
  for (const auto& b : blocks) h["blocks"].push_back({{"name", b.name}, {"count", b.values.size()}});

  const std::string header = h.dump();
  out.write(kModelMagic.data(), kModelMagic.size());
  detail::put_u32(out, kModelFormatVersion);
  detail::put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& b : blocks) {
    detail::put_u64(out, b.values.size());
    for (double v : b.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "model write failed");
}

inline void save_model(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  save_model(model, out);
}

inline TrainedModel load_model(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size())) {
    if (in.gcount() == 0) throw Error(ErrorCode::Truncated, "empty model file");
    throw Error(ErrorCode::Truncated, "magic");
  }
  if (magic != kModelMagic) throw Error(ErrorCode::BadMagic, std::string(magic.data(), magic.size()));
  const auto version = detail::get_u32(in, "version");
  if (version != kModelFormatVersion) throw Error(ErrorCode::VersionUnsupported, std::to_string(version));
  const auto header_len = detail::get_u64(in, "header length");
  if (header_len > (1u << 26)) throw Error(ErrorCode::CorruptModel, "header length");
  std::string header(header_len, '\0');
  detail::read_exact(in, header.data(), header.size(), "header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptModel, e.what());
  }

  std::vector<detail::Block> blocks;
  try {
    for (const auto& b : h.at("blocks")) {
      detail::Block blk{b.at("name").get<std::string>(), {}};
      const auto expected = b.at("count").get<std::uint64_t>();
      const auto count = detail::get_u64(in, "block length");
      if (count != expected) throw Error(ErrorCode::CorruptModel, "block " + blk.name + " length");
      if (count > (std::uint64_t{1} << 32)) throw Error(ErrorCode::CorruptModel, "block " + blk.name + " too large");
      blk.values.resize(count);
      for (auto& v : blk.values) v = std::bit_cast<double>(detail::get_u64(in, "block data"));
      blocks.push_back(std::move(blk));
    }

    TrainedModel model;
    model.meta.scheme = h.at("scheme").get<std::string>();
    model.meta.plan_id = h.at("plan_id").get<std::string>();
    model.meta.combo = parse_combo(h.at("combo").get<std::string>());
    model.meta.data_fingerprint = h.at("data_fingerprint").get<std::uint64_t>();
    model.meta.init_seed = h.at("init_seed").get<std::uint64_t>();
    model.meta.shuffle_seed = h.at("shuffle_seed").get<std::uint64_t>();
    model.meta.format_version = version;

    switch (parse_learner(h.at("learner").get<std::string>())) {
      case LearnerKind::Forest: {
        ForestModel f;
        const auto& j = h.at("forest");
        f.hp.trees = j.at("trees").get<int>();
        f.hp.min_leaf = j.at("min_leaf").get<int>();
        f.hp.max_depth = j.at("max_depth").get<int>();
        f.hp.max_features = j.at("max_features").get<int>();
        f.hp.bootstrap = j.at("bootstrap").get<bool>();
        f.hp.seed = j.at("seed").get<std::uint64_t>();
        f.input_width = j.at("input_width").get<int>();
        f.combo = model.meta.combo;
        if (blocks.size() != static_cast<std::size_t>(kHorizon * f.hp.trees))
          throw Error(ErrorCode::CorruptModel, "forest block count");
        for (std::size_t i = 0; i < blocks.size(); ++i)
          f.steps[i / static_cast<std::size_t>(f.hp.trees)].push_back(detail::decode_tree(blocks[i].values));
        model.learner = std::move(f);
        break;
      }
      case LearnerKind::Mlp: {
        MlpModel m;
        m.combo = model.meta.combo;
        m.widths = h.at("mlp").at("widths").get<std::vector<int>>();
        if (blocks.size() != 1 || blocks[0].values.size() != m.parameter_count())
          throw Error(ErrorCode::CorruptModel, "mlp parameter count");
        m.params = std::move(blocks[0].values);
        model.learner = std::move(m);
        break;
      }
      case LearnerKind::Lstm: {
        LstmModel l;
        l.combo = model.meta.combo;
        const auto& j = h.at("lstm");
        l.shape.encoder = j.at("encoder").get<std::vector<int>>();
        l.shape.hidden = j.at("hidden").get<int>();
        l.shape.decoder = j.at("decoder").get<std::vector<int>>();
        if (blocks.size() != 1 || blocks[0].values.size() != l.layout().total)
          throw Error(ErrorCode::CorruptModel, "lstm parameter count");
        l.params = std::move(blocks[0].values);
        model.learner = std::move(l);
        break;
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptModel, e.what());
  }
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  return load_model(in);
}

/// Trains the requested learner on a window set and wraps it with metadata.
struct LearnerConfig {
  LearnerKind kind = LearnerKind::Mlp;
  TrainConfig train;
  ForestParams forest;
  MlpShape mlp;
  LstmShape lstm;
};

inline TrainedModel train_model(std::span<const SampleWindow> windows, const LearnerConfig& cfg,
                                const std::string& scheme, const std::string& plan_id,
                                TrainHistory* history = nullptr) {
  if (windows.empty()) throw Error(ErrorCode::InsufficientData, "no training windows for plan " + plan_id);
  const Dataset data = make_dataset(windows);
  TrainedModel out;
  out.meta.scheme = scheme;
  out.meta.plan_id = plan_id;
  out.meta.combo = data.combo;
  out.meta.data_fingerprint = data.fingerprint;
  switch (cfg.kind) {
    case LearnerKind::Forest:
      out.meta.init_seed = cfg.forest.seed;
      out.learner = train_forest(data, cfg.forest);
      break;
    case LearnerKind::Mlp:
      out.meta.init_seed = cfg.train.init_seed;
      out.meta.shuffle_seed = cfg.train.shuffle_seed;
      out.learner = train_mlp(init_mlp(data.combo, cfg.mlp, cfg.train.init_seed), data, cfg.train, history);
      break;
    case LearnerKind::Lstm:
      out.meta.init_seed = cfg.train.init_seed;
      out.meta.shuffle_seed = cfg.train.shuffle_seed;
      out.learner = train_lstm(init_lstm(data.combo, cfg.lstm, cfg.train.init_seed), data, cfg.train, history);
      break;
  }
  return out;
}

}  // namespace heliox::learners

#endif  // HELIOX_LEARNERS_MODEL_HPP
