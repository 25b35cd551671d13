#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "heliox/learners/model.hpp"
#include "test_support.hpp"

namespace heliox::learners {
namespace {

std::vector<SampleWindow> windows_for(InputCombo combo, int hours = 60) {
  auto s = testing::contiguous(make_instant(2019, 6, 1), hours);
  Rng rng(3);
  for (auto& r : s) {
    r.irradiance = rng.uniform(0, 2500);
    r.cloud_pct = rng.uniform(0, 100);
  }
  return build_windows(s, combo, {"A", "SiteA", 52, -1}).windows;
}

LearnerConfig small_config(LearnerKind kind) {
  LearnerConfig cfg;
  cfg.kind = kind;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 8;
  cfg.forest.trees = 3;
  cfg.mlp.hidden = {8, 8};
  cfg.lstm = LstmShape{{4}, 5, {4}};
  return cfg;
}

std::string serialise(const TrainedModel& m) {
  std::ostringstream out(std::ios::binary);
  save_model(m, out);
  return out.str();
}

TrainedModel deserialise(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return load_model(in);
}

ErrorCode load_error(const std::string& bytes) {
  try {
    deserialise(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCode::IoFailure;
}

class ModelIo : public ::testing::TestWithParam<LearnerKind> {};

TEST_P(ModelIo, RoundTripIsExact) {
  auto windows = windows_for(InputCombo::All);
  auto model = train_model(windows, small_config(GetParam()), "global", "global");
  const auto bytes = serialise(model);
  auto loaded = deserialise(bytes);
  EXPECT_EQ(loaded, model);
  EXPECT_EQ(serialise(loaded), bytes);
  for (const auto& w : windows) {
    const auto a = predict(model, w), b = predict(loaded, w);
    EXPECT_EQ(std::memcmp(a.transformed.data(), b.transformed.data(), sizeof a.transformed), 0);
    EXPECT_EQ(a.kj_m2, b.kj_m2);
  }
}

TEST_P(ModelIo, TrainingIsByteDeterministic) {
  auto windows = windows_for(InputCombo::Irradiance);
  const auto cfg = small_config(GetParam());
  EXPECT_EQ(serialise(train_model(windows, cfg, "local", "local-A")),
            serialise(train_model(windows, cfg, "local", "local-A")));
}

TEST_P(ModelIo, DamagedFilesAreRejected) {
  const auto bytes = serialise(train_model(windows_for(InputCombo::Static), small_config(GetParam()), "cv", "cv-fold0"));
  auto bad_magic = bytes;
  bad_magic[2] = 'X';
  EXPECT_EQ(load_error(bad_magic), ErrorCode::BadMagic);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_EQ(load_error(bad_version), ErrorCode::VersionUnsupported);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{14}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 1})
    EXPECT_EQ(load_error(bytes.substr(0, cut)), ErrorCode::Truncated) << "cut at " << cut;
}

INSTANTIATE_TEST_SUITE_P(Learners, ModelIo,
                         ::testing::Values(LearnerKind::Forest, LearnerKind::Mlp, LearnerKind::Lstm),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Predict, SameWindowTwiceIsIdentical) {
  auto windows = windows_for(InputCombo::All);
  auto model = train_model(windows, small_config(LearnerKind::Mlp), "global", "global");
  const auto a = predict(model, windows[3]);
  const auto b = predict(model, windows[3]);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Predict, BatchMatchesSingle) {
  auto windows = windows_for(InputCombo::All, 200);
  auto model = train_model(windows, small_config(LearnerKind::Lstm), "global", "global");
  auto batch = predict_batch(model, windows);
  for (std::size_t j = 0; j < windows.size(); j += 17) {
    const auto one = predict(model, windows[j]);
    for (int s = 0; s < kHorizon; ++s) EXPECT_NEAR(one.transformed[s], batch[j].transformed[s], 1e-12);
  }
}

TEST(Predict, ComboMismatchThrows) {
  auto model = train_model(windows_for(InputCombo::Weather), small_config(LearnerKind::Forest), "global", "global");
  auto all = windows_for(InputCombo::All);
  try {
    predict(model, all[0]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ComboMismatch);
  }
}

TEST(Predict, OutputsAreClampedAtFloor) {
  auto windows = windows_for(InputCombo::Static);
  auto model = train_model(windows, small_config(LearnerKind::Mlp), "global", "global");
  auto& mlp = std::get<MlpModel>(model.learner);
  mlp.slots().back().b(mlp.params).setConstant(-50.0);  // push every output far below the floor
  for (const auto& f : predict_batch(model, windows)) {
    for (int s = 0; s < kHorizon; ++s) {
      EXPECT_EQ(f.transformed[s], -1.0);
      EXPECT_EQ(f.kj_m2[s], 0.0);
    }
  }
}

TEST(Predict, ForecastUnitsFollowInverseTransform) {
  auto f = make_forecast({2.908755, -3.0, -1.0, 0.0, 1.0, 4.0});
  EXPECT_NEAR(f.kj_m2[0], 1000.0, 1e-3);
  EXPECT_EQ(f.transformed[1], -1.0);
  EXPECT_EQ(f.kj_m2[1], 0.0);
  EXPECT_NEAR(f.kj_m2[3], std::exp(4.0) - 1.0, 1e-9);
}

TEST(Metadata, RecordsProvenance) {
  auto windows = windows_for(InputCombo::Irradiance);
  auto cfg = small_config(LearnerKind::Mlp);
  cfg.train.init_seed = 11;
  cfg.train.shuffle_seed = 12;
  auto m = train_model(windows, cfg, "kn", "kn-fold2");
  EXPECT_EQ(m.meta.scheme, "kn");
  EXPECT_EQ(m.meta.plan_id, "kn-fold2");
  EXPECT_EQ(m.meta.combo, InputCombo::Irradiance);
  EXPECT_EQ(m.meta.init_seed, 11u);
  EXPECT_EQ(m.meta.shuffle_seed, 12u);
  EXPECT_EQ(m.meta.format_version, kModelFormatVersion);
  EXPECT_EQ(m.meta.data_fingerprint, make_dataset(windows).fingerprint);
  EXPECT_EQ(m.kind(), LearnerKind::Mlp);
}

TEST(ModelFile, PathOverloads) {
  auto dir = testing::temp_dir("model");
  auto model = train_model(windows_for(InputCombo::All), small_config(LearnerKind::Forest), "global", "global");
  const auto path = (dir / "global.hxm").string();
  save_model(model, path);
  EXPECT_EQ(load_model(path), model);
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "HELIOX01");
  EXPECT_THROW(load_model((dir / "missing.hxm").string()), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace heliox::learners
