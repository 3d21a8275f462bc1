#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "mdpose/harness/pipeline.hpp"
#include "mdpose/harness/profile.hpp"

using namespace mdpose;
using namespace mdpose::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mdpose_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

ExperimentConfig small_config(const fs::path& out, std::size_t count, double duration) {
  ExperimentConfig c;
  c.out_dir = out;
  c.dataset.count = count;
  c.dataset.duration_s = duration;
  return c;
}

std::string error_of(const Json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsRoundTripThroughJson) {
  ExperimentConfig c;
  EXPECT_DOUBLE_EQ(c.train_fraction, 0.23);
  const auto j = to_json(c);
  EXPECT_EQ(to_json(config_from_json(j)), j);
}

TEST(Config, FileRoundTrip) {
  const auto dir = scratch("cfg");
  auto c = small_config(dir, 7, 2.5);
  c.dataset.activities = {ActivityKind::SU, ActivityKind::BR};
  c.radar.interference.noise_std = 0.125;
  save_config(dir / "c.json", c);
  const auto back = load_config(dir / "c.json");
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, ErrorsNameTheField) {
  const auto base = to_json(ExperimentConfig{});
  auto j = base;
  j.erase("schema_version");
  EXPECT_EQ(error_of(j), "schema_version");
  j = base;
  j["schema_version"] = 99;
  EXPECT_EQ(error_of(j), "schema_version");
  j = base;
  j["radar"]["geometry"]["tx"] = Json::array({1, 2});
  EXPECT_EQ(error_of(j), "radar.geometry.tx");
  j = base;
  j["radar"]["interference"]["clutter"][1]["amplitude"] = "loud";
  EXPECT_EQ(error_of(j), "radar.interference.clutter[1].amplitude");
  j = base;
  j["dataset"]["activities"] = Json::array({"SU", "dance"});
  EXPECT_EQ(error_of(j), "dataset.activities[1]");
  j = base;
  j["dataset"]["colour"] = "red";
  EXPECT_EQ(error_of(j), "dataset.colour");
  j = base;
  j["vel_train"]["epochs"] = -3;
  EXPECT_EQ(error_of(j), "vel_train.epochs");
  j = base;
  j["vel_train"]["lr"] = -1.0;
  EXPECT_EQ(error_of(j), "vel_train");
}

TEST(Config, SplitFractionMustBeOpenUnitInterval) {
  for (double f : {0.0, 1.0, -0.1, 1.5}) {
    auto j = to_json(ExperimentConfig{});
    j["train_fraction"] = f;
    EXPECT_EQ(error_of(j), "train_fraction") << f;
  }
}

TEST(Config, TrainCountFollowsFraction) {
  ExperimentConfig c;
  EXPECT_EQ(c.train_count(200), 46u);
  EXPECT_EQ(c.train_count(3), 1u);
  c.train_fraction = 0.99;
  EXPECT_EQ(c.train_count(10), 9u);  // never the whole set
}

TEST(Dataset, NoInterferenceMakesMEqualS) {
  auto c = small_config(scratch("clean"), 2, 2.0);
  c.radar.interference = {};
  for (const auto& s : build_samples(c.dataset, c.radar)) {
    ASSERT_EQ(s.S.values.size(), s.M.values.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < s.S.values.size(); ++i) worst = std::max(worst, std::abs(s.S.values[i] - s.M.values[i]));
    EXPECT_LE(worst, 1e-6);
  }
}

TEST(Dataset, ManifestListsEveryTripletWithMatchingLengths) {
  const auto dir = scratch("manifest");
  auto c = small_config(dir, 20, 2.0);
  build_dataset(c);
  const auto man = load_manifest(dir / "dataset");
  const auto& entries = man.header.at("samples");
  ASSERT_EQ(entries.size(), 20u);
  for (const auto& e : entries) {
    const auto T = e.at("T").get<std::size_t>();
    const auto& f = e.at("files");
    EXPECT_EQ(caf::load_spectrogram(dir / "dataset" / f.at("S").get<std::string>()).frames(), T);
    EXPECT_EQ(caf::load_spectrogram(dir / "dataset" / f.at("M").get<std::string>()).frames(), T);
    EXPECT_EQ(caf::load_spectrogram(dir / "dataset" / f.at("D").get<std::string>()).frames(), T);
    EXPECT_EQ(motion::load_pose(dir / "dataset" / f.at("pose").get<std::string>()).size(), T);
  }
  EXPECT_EQ(man.header.at("meta").at("train_count").get<std::size_t>(), 5u);
}

TEST(Dataset, RerunIsBitIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  build_dataset(small_config(a, 3, 2.0));
  build_dataset(small_config(b, 3, 2.0));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "dataset")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a / "dataset");
    if (rel == "manifest.bin") continue;  // embeds out_dir
    EXPECT_EQ(slurp(e.path()), slurp(b / "dataset" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 15u);
}

TEST(Dataset, ThreadCountDoesNotChangeResults) {
  auto c = small_config(scratch("threads"), 3, 2.0);
  const auto one = build_samples(c.dataset, c.radar);
  c.dataset.threads = 3;
  const auto three = build_samples(c.dataset, c.radar);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].D.values, three[i].D.values);
}

TEST(Dataset, UnwritableDirectoryIsReported) {
  const auto dir = scratch("blocked");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  auto c = small_config(dir / "file", 2, 2.0);
  EXPECT_THROW(build_dataset(c), IoError);
}

TEST(Units, MillimetresPerFrame) {
  // 41 mm/s at 10 frames per second is 4.1 mm/frame.
  EXPECT_NEAR(mm_per_frame(0.041, 0.1), 4.1, 1e-12);
}

namespace {

struct EvalFixture : ::testing::Test {
  static std::vector<Sample>& samples() {
    static std::vector<Sample> s = [] {
      auto c = small_config(scratch("eval"), 6, 2.0);
      c.dataset.activities = {ActivityKind::Wplus, ActivityKind::SD, ActivityKind::BR};
      return build_samples(c.dataset, c.radar);
    }();
    return s;
  }
  static EvalOptions truth_init() {
    EvalOptions o;
    o.init = InitMode::truth;
    return o;
  }
};

VelPredictor perfect() {
  return [](const Sample& s, const caf::Spectrogram&) { return s.vel; };
}

}  // namespace

TEST_F(EvalFixture, PerfectStubGivesZeroErrors) {
  const auto rep = evaluate(samples(), {perfect(), {}}, truth_init());
  ASSERT_EQ(rep.activities.size(), 3u);
  for (const auto* g : {&rep.overall, &rep.activities[0], &rep.activities[1], &rep.activities[2]})
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        EXPECT_NEAR(g->vel_rr[c][j], 0.0, 1e-9);
        EXPECT_NEAR(g->vel_abs[c][j], 0.0, 1e-9);
        EXPECT_NEAR(g->pos_rr[c][j], 0.0, 1e-6);
        EXPECT_NEAR(g->pos_abs[c][j], 0.0, 1e-6);
      }
}

TEST_F(EvalFixture, ConstantOffsetGivesThreeMillimetresPerFrame) {
  // +1 mm/frame on every axis of every joint.
  VelPredictor off = [](const Sample& s, const caf::Spectrogram&) {
    auto v = s.vel;
    const double d = 1e-3 / v.dt;
    for (auto& f : v.values)
      for (auto& j : f) j += Vec3{d, d, d};
    return v;
  };
  const auto rep = evaluate(samples(), {off, {}}, truth_init());
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    EXPECT_NEAR(rep.overall.vel_abs[kD][j], 3.0, 1e-9);
    EXPECT_NEAR(rep.overall.vel_rr[kD][j], 0.0, 1e-9);  // a common offset is a root motion
  }
}

TEST_F(EvalFixture, RootJointIsZeroUnderRootRelativeConvention) {
  Rng rng(5);
  VelPredictor noisy = [&rng](const Sample& s, const caf::Spectrogram&) {
    auto v = s.vel;
    for (auto& f : v.values)
      for (auto& j : f) j += Vec3{rng.normal(), rng.normal(), rng.normal()};
    return v;
  };
  const auto rep = evaluate(samples(), {noisy, {}}, truth_init());
  EXPECT_EQ(rep.overall.vel_rr[kD][0], 0.0);
  EXPECT_EQ(rep.overall.pos_rr[kD][0], 0.0);
  EXPECT_GT(rep.overall.vel_rr[kD][5], 2.0);
  EXPECT_GT(rep.overall.vel_abs[kD][0], 2.0);
}

TEST_F(EvalFixture, VelocityMetricMatchesLoopOracle) {
  VelPredictor zero = [](const Sample& s, const caf::Spectrogram&) {
    auto v = s.vel;
    for (auto& f : v.values) f = {};
    return v;
  };
  EvalOptions o = truth_init();
  o.positions = false;
  const auto rep = evaluate(samples(), {zero, {}}, o);
  // zero prediction: absolute error is the mean L1 speed of each joint
  for (std::size_t j : {0u, 12u}) {
    double acc = 0.0, n = 0.0;
    for (const auto& s : samples())
      for (std::size_t t = 0; t < s.vel.size(); ++t, n += 1.0)
        acc += (std::abs(s.vel[t][j].x) + std::abs(s.vel[t][j].y) + std::abs(s.vel[t][j].z)) * s.vel.dt * 1000.0;
    EXPECT_NEAR(rep.overall.vel_abs[kM][j], acc / n, 1e-9);
  }
}

TEST_F(EvalFixture, CsvRowCountAndRerunIdentity) {
  const auto dir = scratch("csv");
  velest::VelModel m(samples()[0].S.bins(), 3);
  const auto rep = evaluate(samples(), {network_predictor(m), {}}, truth_init());
  write_metrics_csv(dir / "a.csv", rep);
  const std::size_t A = 3;
  EXPECT_EQ(line_count(dir / "a.csv"), 1 + 17 * A + (A + 1) + 17);
  const auto rep2 = evaluate(samples(), {network_predictor(m), {}}, truth_init());
  write_metrics_csv(dir / "b.csv", rep2);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const auto table = format_table(rep);
  EXPECT_NE(table.find("overall"), std::string::npos);
  EXPECT_NE(table.find("BR"), std::string::npos);
}

TEST_F(EvalFixture, ThreadedEvaluationMatchesSerial) {
  velest::VelModel m(samples()[0].S.bins(), 4);
  EvalOptions o = truth_init();
  const auto a = evaluate(samples(), {network_predictor(m), {}}, o);
  o.threads = 3;
  const auto b = evaluate(samples(), {network_predictor(m), {}}, o);
  for (std::size_t j = 0; j < kNumJoints; ++j) EXPECT_EQ(a.overall.pos_rr[kD][j], b.overall.pos_rr[kD][j]);
}

TEST_F(EvalFixture, OptimizeInitRecordsTracesAndDrift) {
  poseopt::OptModel om(2);
  EvalOptions o;
  o.optimize.max_epochs = 3;
  const auto rep = evaluate(samples(), {perfect(), poseopt::model_predictor(om)}, o);
  EXPECT_EQ(rep.opt_traces.size(), samples().size());
  EXPECT_EQ(rep.drift[kD].size(), samples()[0].vel.size());
  const auto dir = scratch("drift");
  write_drift_csv(dir / "drift.csv", rep.drift[kD], rep.drift[kM]);
  EXPECT_EQ(line_count(dir / "drift.csv"), 1 + rep.drift[kD].size());
  write_traces_csv(dir / "traces.csv", rep.opt_traces);
  EXPECT_GT(line_count(dir / "traces.csv"), samples().size());
}

TEST_F(EvalFixture, OptimizeInitWithoutModelIsRejected) {
  EXPECT_THROW(evaluate(samples(), {perfect(), {}}, EvalOptions{}), InvalidInput);
}

TEST(Profile, StageAccountingHolds) {
  auto c = small_config(scratch("profile"), 1, 2.0);
  const auto s = build_sample(c.dataset, c.radar, 0);
  velest::VelModel vm(s.M.bins(), 1);
  poseopt::OptModel om(1);
  poseopt::OptConfig oc;
  oc.max_epochs = 5;
  oc.tolerance = 0.0;
  const auto p = profile_runtime(caf::slice_frames(s.M, 0, 10), c.radar.denoise, vm, poseopt::model_predictor(om), motion::t_pose(), oc, 8);
  ASSERT_EQ(p.runs.size(), 8u);
  EXPECT_EQ(p.frames, 10u);
  EXPECT_EQ(p.opt_epochs, 5u);
  for (const auto& r : p.runs) {
    EXPECT_GE(r.total, std::max({r.denoise, r.network, r.optimize}));
    EXPECT_LE(r.stage_sum(), 1.1 * r.total);
  }
  EXPECT_LT(p.total_cv, 0.5);
  const auto dir = scratch("profile_csv");
  write_profile_csv(dir / "p.csv", p);
  EXPECT_EQ(line_count(dir / "p.csv"), 1 + 8 + 1);
}
