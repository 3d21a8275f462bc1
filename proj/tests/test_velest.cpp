#include <gtest/gtest.h>

#include <filesystem>

#include "mdpose/harness/dataset.hpp"
#include "mdpose/velest/train.hpp"

using namespace mdpose;
using velest::VelModel;
using velest::VelocitySequence;

namespace {

caf::Spectrogram random_spectrogram(std::size_t T, std::size_t bins, std::uint64_t seed) {
  Rng rng(seed);
  caf::Spectrogram s;
  s.dt = 0.1;
  for (std::size_t k = 0; k < bins; ++k) s.doppler_axis.push_back(-70.0 + 5.0 * double(k));
  s.values.resize(T * bins);
  for (auto& v : s.values) v = rng.uniform();
  return s;
}

VelocitySequence random_velocity(std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  VelocitySequence v;
  v.values.resize(T);
  for (auto& row : v.values)
    for (auto& j : row) j = {rng.normal(), rng.normal(), rng.normal()};
  return v;
}

std::vector<float> flat_params(VelModel& m) {
  std::vector<float> out;
  for (const auto& n : m.named()) out.insert(out.end(), n.tensor->data.begin(), n.tensor->data.end());
  return out;
}

const harness::Sample& short_walk() {
  static const harness::Sample s = [] {
    harness::DatasetConfig dc;
    dc.duration_s = 2.0;
    dc.activities = {motion::ActivityKind::Wplus};
    return harness::build_sample(dc, harness::RadarConfig{}, 0);
  }();
  return s;
}

}  // namespace

TEST(VelForward, ZeroFinalLayerGivesZeroVelocity) {
  VelModel m(29, 3);
  auto& last = std::get<nn::Linear<float>>(m.net().layer(m.net().size() - 1));
  std::fill(last.w->value.data.begin(), last.w->value.data.end(), 0.0f);
  std::fill(last.b->value.data.begin(), last.b->value.data.end(), 0.0f);
  const auto v = velest::vel_forward(m, random_spectrogram(12, 29, 1));
  for (const auto& row : v.values)
    for (const auto& j : row) EXPECT_EQ(norm(j), 0.0);
}

TEST(VelForward, DeterministicAndOneFramePerColumn) {
  VelModel m(29, 4);
  for (std::size_t T : {1u, 7u, 40u}) {
    const auto s = random_spectrogram(T, 29, T);
    const auto a = velest::vel_forward(m, s), b = velest::vel_forward(m, s);
    ASSERT_EQ(a.size(), T);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < 17; ++j) {
        EXPECT_EQ(a[t][j], b[t][j]);
        EXPECT_TRUE(is_finite(a[t][j]));
      }
  }
}

TEST(VelForward, RejectsWidthMismatch) {
  VelModel m(29, 1);
  EXPECT_THROW(velest::vel_forward(m, random_spectrogram(5, 31, 1)), InvalidInput);
  EXPECT_THROW(VelModel(3, 1), InvalidInput);  // conv stack needs a wider input
}

TEST(VelModelArch, LayerStack) {
  VelModel m(29, 1);
  EXPECT_EQ(m.net().size(), 15u);
  EXPECT_EQ(m.net().conv_stage_end(), 9u);
  EXPECT_EQ(m.net().output_features(), 51u);
  const auto& lstm = std::get<nn::Lstm<float>>(m.net().layer(9));
  EXPECT_TRUE(lstm.spec.bidirectional);
  EXPECT_EQ(lstm.spec.hidden, 64u);
  EXPECT_EQ(lstm.spec.layers, 2u);
  EXPECT_EQ(lstm.input, 64u);
}

TEST(VelLoss, ClosedForms) {
  const auto t = random_velocity(5, 1);
  EXPECT_EQ(velest::vel_loss(t, t), 0.0);
  VelocitySequence a, b;
  a.values.resize(1);
  b.values.resize(1);
  b.values[0][0] = {1, 1, 1};
  EXPECT_NEAR(velest::vel_loss(a, b), 3.0 / 17.0, 1e-15);  // one joint off by (1,1,1): sum 3 over N = 17
  for (auto& j : b.values[0]) j = {1, -1, 1};
  EXPECT_NEAR(velest::vel_loss(a, b), 3.0, 1e-15);
  EXPECT_THROW(velest::vel_loss(a, t), InvalidInput);
}

TEST(VelLoss, MatchesLoopOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = random_velocity(9, seed), q = random_velocity(9, seed + 100);
    double oracle = 0.0;
    for (int a = 0; a < 3; ++a)
      for (std::size_t j = 0; j < 17; ++j)
        for (std::size_t t = 0; t < 9; ++t) oracle += std::abs(p[t][j][a] - q[t][j][a]) / (9.0 * 17.0);
    EXPECT_NEAR(velest::vel_loss(p, q), oracle, 1e-6);
    EXPECT_GT(velest::vel_loss(p, q), 0.0);
  }
}

TEST(VelLoss, TrainingGraphLossAgreesWithVelLoss) {
  VelModel m(29, 2);
  const auto s = random_spectrogram(10, 29, 3);
  const auto truth = random_velocity(10, 4);
  const auto pred = m.forward(m.sequence_input(s), 10, 1, false);
  const auto loss =
      nn::l1_loss(pred, velest::velocity_target({&truth}, {0}, 10), static_cast<float>(10 * 17));
  EXPECT_NEAR(loss->value[0], velest::vel_loss(velest::vel_forward(m, s), truth), 1e-4);
}

TEST(VelModelConv, FeaturesArePerFrame) {
  VelModel m(29, 5);
  auto s = random_spectrogram(8, 29, 9);
  const auto base = m.conv_features(s);
  ASSERT_EQ(base.rows(), 8u);
  for (std::size_t probe_t : {0u, 3u, 7u}) {
    auto z = s;
    for (std::size_t k = 0; k < 29; ++k) z.at(k, probe_t) = 0.0;
    const auto f = m.conv_features(z);
    for (std::size_t t = 0; t < 8; ++t) {
      bool changed = false;
      for (std::size_t c = 0; c < f.cols(); ++c) changed = changed || f.at(t, c) != base.at(t, c);
      EXPECT_EQ(changed, t == probe_t) << "probe " << probe_t << " row " << t;
    }
  }
}

TEST(VelTrain, RejectsBadDatasets) {
  VelModel m(29, 1);
  EXPECT_THROW(velest::vel_train(m, {}, {}), InvalidInput);
  std::vector<velest::VelSample> bad{{random_spectrogram(5, 29, 1), random_velocity(6, 1)}};
  EXPECT_THROW(velest::vel_train(m, bad, {}), InvalidInput);
  velest::TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(VelTrain, ZeroLearningRateChangesNothing) {
  VelModel m(29, 6);
  std::vector<velest::VelSample> data{{short_walk().S, short_walk().vel}};
  velest::TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.val_fraction = 0.0;
  velest::vel_train(m, data, cfg);  // settles the batchnorm statistics
  const auto before = flat_params(m);
  const auto hist = velest::vel_train(m, data, cfg);
  EXPECT_EQ(flat_params(m), before);
  for (const auto& e : hist.epochs) EXPECT_EQ(e.train_loss, hist.epochs[0].train_loss);
}

TEST(VelTrain, OverfitsOneSample) {
  VelModel m(29, 7);
  std::vector<velest::VelSample> data{{short_walk().S, short_walk().vel}};
  velest::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 4;
  cfg.val_fraction = 0.0;
  const auto hist = velest::vel_train(m, data, cfg);
  ASSERT_EQ(hist.epochs.size(), 301u);
  EXPECT_LT(hist.epochs.back().train_loss, 0.1 * hist.epochs.front().train_loss)
      << hist.epochs.front().train_loss << " -> " << hist.epochs.back().train_loss;
}

TEST(VelTrain, DeterministicPerSeedAndCheckpointRoundTrip) {
  std::vector<velest::VelSample> data{{short_walk().S, short_walk().vel},
                                      {random_spectrogram(20, 29, 2), random_velocity(20, 2)}};
  velest::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 3;
  cfg.crop_frames = 8;
  VelModel a(29, 8), b(29, 8);
  const auto ha = velest::vel_train(a, data, cfg);
  const auto hb = velest::vel_train(b, data, cfg);
  EXPECT_EQ(flat_params(a), flat_params(b));
  EXPECT_EQ(ha.val_index, hb.val_index);
  ASSERT_EQ(ha.val_index.size(), 1u);

  const auto path = std::filesystem::temp_directory_path() / "mdpose_vel_ckpt.bin";
  a.save(path);
  auto c = VelModel::load(path);
  const auto s = random_spectrogram(6, 29, 5);
  const auto va = velest::vel_forward(a, s), vc = velest::vel_forward(c, s);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 17; ++j) EXPECT_EQ(va[t][j], vc[t][j]);
  std::filesystem::remove(path);

  const auto csv = std::filesystem::temp_directory_path() / "mdpose_vel_log.csv";
  ha.write_csv(csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("epoch,train_loss,val_loss,wall_seconds", 0), 0u);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4u);
  std::filesystem::remove(csv);
}
