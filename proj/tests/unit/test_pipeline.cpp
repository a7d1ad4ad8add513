#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "groovesynth/errors.hpp"
#include "groovesynth/pipeline.hpp"
#include "test_support.hpp"

namespace gs = groovesynth;
namespace fs = std::filesystem;
using gs::testing::error_kind;

namespace {

gs::TrainConfig quick(const std::string& stage, int epochs) {
  gs::TrainConfig cfg = gs::default_config(stage);
  cfg.epochs = epochs;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  return cfg;
}

// Two synthetic clips, trained briefly through every stage once per suite.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "groovesynth_pipeline_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    topo_ = new gs::SkeletonTopology(gs::SkeletonTopology::smpl24());
    gs::SynthConfig synth;
    synth.duration = 14.0;
    clips_ = new std::vector<gs::DanceClip>(gs::synth_dataset(2, 11, *topo_, synth));
    samples_ = new std::vector<gs::TrainingSample>(gs::load_samples(*clips_, *topo_, quick("bps", 1), "train"));

    auto bps = quick("bps", 3);
    bps.out = (dir_ / "bps.ckpt").string();
    gs::train_bps(bps, *samples_, *topo_);
    auto rps = quick("rps", 2);
    rps.bps_checkpoint = bps.out;
    rps.out = (dir_ / "rps.ckpt").string();
    gs::train_rps(rps, *samples_, *topo_);
    auto traj = quick("traj", 2);
    traj.rps_checkpoint = rps.out;
    traj.out = (dir_ / "traj.ckpt").string();
    gs::train_traj(traj, *samples_, *topo_);
  }

  static void TearDownTestSuite() {
    fs::remove_all(dir_);
    delete samples_;
    delete clips_;
    delete topo_;
  }

  static gs::PoseSequence seed_motion() {
    gs::PoseSequence seed = clips_->front().pose;
    seed.line_vectors = seed.line_vectors.leftCols(20).eval();
    seed.root = seed.root->leftCols(20).eval();
    return seed;
  }

  static inline fs::path dir_;
  static inline gs::SkeletonTopology* topo_ = nullptr;
  static inline std::vector<gs::DanceClip>* clips_ = nullptr;
  static inline std::vector<gs::TrainingSample>* samples_ = nullptr;
};

}  // namespace

TEST(Config, DefaultsOverridesAndErrors) {
  EXPECT_EQ(gs::default_config("bps").epochs, 500);
  EXPECT_EQ(gs::default_config("rps").epochs, 250);
  EXPECT_DOUBLE_EQ(gs::default_config("traj").lr, 1e-5);
  EXPECT_EQ(error_kind([] { gs::default_config("dance"); }), gs::ErrorKind::ConfigError);

  const auto cfg = gs::load_config("rps", {}, {"lr=0.01", "weights.contrastive=0.2", "disable_rtc=true", "out=x.ckpt"});
  EXPECT_DOUBLE_EQ(cfg.lr, 0.01);
  EXPECT_DOUBLE_EQ(cfg.weights.contrastive, 0.2);
  EXPECT_TRUE(cfg.disable_rtc);
  EXPECT_EQ(cfg.out, "x.ckpt");
  EXPECT_EQ(error_kind([] { gs::load_config("rps", {}, {"learning_rate=1"}); }), gs::ErrorKind::ConfigError);
  EXPECT_EQ(error_kind([] { gs::load_config("rps", {}, {"epochs=many"}); }), gs::ErrorKind::ConfigError);
  EXPECT_EQ(error_kind([] { gs::load_config("rps", {}, {"epochs"}); }), gs::ErrorKind::ConfigError);
  EXPECT_EQ(error_kind([] { gs::load_config("rps", {}, {"batch_size=0"}); }), gs::ErrorKind::ConfigError);
  EXPECT_EQ(error_kind([] { gs::load_config("rps", {}, {"stage=bps"}); }), gs::ErrorKind::ConfigError);

  const fs::path file = fs::temp_directory_path() / "groovesynth_config_test.json";
  std::ofstream(file) << R"({"epochs": 7, "weights": {"pose": 2.0}})";
  const auto from_file = gs::load_config("bps", file, {"epochs=9"});
  EXPECT_EQ(from_file.epochs, 9);
  EXPECT_DOUBLE_EQ(from_file.weights.pose, 2.0);
  std::ofstream(file) << R"({"epoch": 7})";
  EXPECT_EQ(error_kind([&] { gs::load_config("bps", file, {}); }), gs::ErrorKind::ConfigError);
  fs::remove(file);
}

TEST_F(PipelineTest, LoggedTotalsRecompose) {
  auto bps = quick("bps", 2);
  for (const auto& e : gs::train_bps(bps, *samples_, *topo_).log) {
    const double expected = 5.0 * e["pose_motion"].get<double>() + 3e-3 * e["leg_motion"].get<double>();
    EXPECT_NEAR(e["total"].get<double>(), expected, 1e-9);
  }
  auto rps = quick("rps", 2);
  rps.bps_checkpoint = (dir_ / "bps.ckpt").string();
  const auto result = gs::train_rps(rps, *samples_, *topo_);
  EXPECT_EQ(result.rtc_skipped, 0);
  for (const auto& e : result.log) {
    const double expected = 5.0 * e["pose_motion"].get<double>() + 3e-3 * e["leg_motion"].get<double>() +
                            5e-2 * e["generator"].get<double>() + 0.1 * e["contrastive"].get<double>();
    EXPECT_NEAR(e["total"].get<double>(), expected, 1e-9);
    EXPECT_EQ(e["rtc_skipped"].get<int>(), 0);
  }
}

TEST_F(PipelineTest, ResumeIsBitExact) {
  auto straight = quick("bps", 4);
  const auto full = gs::train_bps(straight, *samples_, *topo_);

  auto first = quick("bps", 2);
  first.out = (dir_ / "half.ckpt").string();
  gs::train_bps(first, *samples_, *topo_);
  auto second = quick("bps", 4);
  second.resume = first.out;
  const auto resumed = gs::train_bps(second, *samples_, *topo_);

  ASSERT_EQ(resumed.log.size(), 4u);
  for (int e = 2; e < 4; ++e) EXPECT_EQ(resumed.log[e]["total"].get<double>(), full.log[e]["total"].get<double>());
  const auto* a = full.checkpoint.find("bps/generator.input.weight");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(*a, *resumed.checkpoint.find("bps/generator.input.weight"));
}

TEST_F(PipelineTest, StageOrderingAndDisableBps) {
  auto rps = quick("rps", 1);
  EXPECT_EQ(error_kind([&] { gs::train_rps(rps, *samples_, *topo_); }), gs::ErrorKind::MissingCheckpoint);
  rps.bps_checkpoint = (dir_ / "missing.ckpt").string();
  EXPECT_EQ(error_kind([&] { gs::train_rps(rps, *samples_, *topo_); }), gs::ErrorKind::MissingCheckpoint);
  rps.bps_checkpoint.clear();
  rps.disable_bps = true;
  EXPECT_EQ(gs::train_rps(rps, *samples_, *topo_).log.size(), 1u);
  auto traj = quick("traj", 1);
  EXPECT_EQ(error_kind([&] { gs::train_traj(traj, *samples_, *topo_); }), gs::ErrorKind::MissingCheckpoint);
}

TEST_F(PipelineTest, DiscriminatorLearnsAgainstFrozenGenerator) {
  auto rps = quick("rps", 20);
  rps.bps_checkpoint = (dir_ / "bps.ckpt").string();
  rps.freeze_generator = true;
  const auto log = gs::train_rps(rps, *samples_, *topo_).log;
  double best = 0;
  for (const auto& e : log) best = std::max(best, e["discriminator_accuracy"].get<double>());
  EXPECT_GT(best, 0.9);
}

TEST_F(PipelineTest, GenerateLengthsChainingAndDeterminism) {
  const gs::ModelBundle bundle(gs::load_checkpoint(dir_ / "traj.ckpt"));
  ASSERT_NE(bundle.trajectory(), nullptr);
  const gs::AudioClip& audio14 = clips_->front().audio;
  gs::AudioClip audio7 = audio14;
  audio7.samples.resize(static_cast<std::size_t>(7.0 * audio14.sample_rate));

  const auto short_out = gs::generate(bundle, audio7, seed_motion(), 5);
  EXPECT_EQ(short_out.pose.frames(), 70);
  const auto long_out = gs::generate(bundle, audio14, seed_motion(), 5);
  EXPECT_EQ(long_out.pose.frames(), 140);
  ASSERT_GE(long_out.window_starts.size(), 2u);
  EXPECT_EQ(long_out.window_starts[0], 0);
  EXPECT_EQ(long_out.window_starts[1], 50);
  EXPECT_EQ(long_out.pose.line_vectors.leftCols(70), short_out.pose.line_vectors);
  gs::validate_pose(long_out.pose, *topo_);
  ASSERT_TRUE(long_out.pose.root.has_value());
  EXPECT_EQ(long_out.pose.line_vectors.leftCols(20), seed_motion().line_vectors);

  const auto again = gs::generate(bundle, audio14, seed_motion(), 5);
  EXPECT_EQ(again.pose.line_vectors, long_out.pose.line_vectors);
  EXPECT_EQ(*again.pose.root, *long_out.pose.root);
  EXPECT_NE(gs::generate(bundle, audio14, seed_motion(), 6).pose.line_vectors, long_out.pose.line_vectors);

  gs::AudioClip tiny = audio14;
  tiny.samples.resize(static_cast<std::size_t>(3.0 * audio14.sample_rate));
  EXPECT_EQ(error_kind([&] { gs::generate(bundle, tiny, seed_motion(), 5); }), gs::ErrorKind::TooShortAudio);
  gs::PoseSequence short_seed = seed_motion();
  short_seed.line_vectors = short_seed.line_vectors.leftCols(10).eval();
  short_seed.root = short_seed.root->leftCols(10).eval();
  EXPECT_EQ(error_kind([&] { gs::generate(bundle, audio14, short_seed, 5); }), gs::ErrorKind::TooShortSeed);
}

TEST_F(PipelineTest, TrajectoryTrainingIsDeterministic) {
  auto traj = quick("traj", 2);
  traj.rps_checkpoint = (dir_ / "rps.ckpt").string();
  const auto a = gs::train_traj(traj, *samples_, *topo_).log;
  const auto b = gs::train_traj(traj, *samples_, *topo_).log;
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a, b);
}
