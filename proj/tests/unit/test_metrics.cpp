#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "groovesynth/errors.hpp"
#include "groovesynth/metrics.hpp"
#include "test_support.hpp"

namespace gs = groovesynth;
using gs::testing::random_line_vectors;
using gs::testing::random_matrix;
using gs::testing::rest_pose;

namespace {

gs::PoseSequence moving_root(const gs::SkeletonTopology& topo, int frames, double step) {
  gs::PoseSequence p = rest_pose(topo, frames);
  for (int t = 0; t < frames; ++t) (*p.root)(0, t) = step * t;
  return p;
}

double brute_diversity(const Eigen::MatrixXd& f) {
  double sum = 0;
  int pairs = 0;
  for (Eigen::Index i = 0; i < f.cols(); ++i)
    for (Eigen::Index j = i + 1; j < f.cols(); ++j, ++pairs) sum += (f.col(i) - f.col(j)).norm();
  return sum / pairs;
}

double brute_bas(const std::vector<int>& music, const std::vector<int>& motion, double sigma) {
  double s = 0;
  for (int b : music) {
    double best = 1e300;
    for (int k : motion) best = std::min(best, double(b - k) * (b - k));
    s += std::exp(-best / (2 * sigma * sigma));
  }
  return s / music.size();
}

}  // namespace

TEST(KineticFeatures, FrozenScalingAndWidth) {
  const auto topo = gs::SkeletonTopology::smpl24();
  const auto frozen = gs::kinetic_features(rest_pose(topo, 12), topo);
  EXPECT_EQ(frozen.size(), 72);
  EXPECT_EQ(frozen.cwiseAbs().maxCoeff(), 0.0);
  const auto slow = gs::kinetic_features(moving_root(topo, 12, 0.05), topo);
  const auto fast = gs::kinetic_features(moving_root(topo, 12, 0.10), topo);
  EXPECT_GT(slow.maxCoeff(), 0.0);
  EXPECT_LT((fast - 4 * slow).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GeometricFeatures, StraightLegsAndHalfFrames) {
  const auto topo = gs::SkeletonTopology::smpl24();
  const auto& names = gs::geometric_feature_names();
  ASSERT_EQ(names.size(), 16u);
  const auto index = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) - names.begin(); };

  gs::PoseSequence pose = rest_pose(topo, 10);
  const auto still = gs::geometric_features(pose, topo);
  EXPECT_EQ(still(index("left_knee_bent_past_90")), 0.0);
  EXPECT_EQ(still(index("right_knee_bent_past_90")), 0.0);
  EXPECT_EQ(still(index("left_hand_above_head")), 0.0);

  for (int t = 1; t < 10; t += 2)
    for (const char* joint : {"left_elbow", "left_wrist", "left_hand"})
      pose.line_vectors.block<3, 1>(3 * topo.bone_of_joint(topo.find_joint(joint)), t) = Eigen::Vector3d(0, 1, 0);
  EXPECT_DOUBLE_EQ(gs::geometric_features(pose, topo)(index("left_hand_above_head")), 0.5);

  std::mt19937_64 rng(1);
  gs::PoseSequence wild = rest_pose(topo, 30);
  wild.line_vectors = random_line_vectors(23, 30, rng);
  const auto g = gs::geometric_features(wild, topo);
  EXPECT_GE(g.minCoeff(), 0.0);
  EXPECT_LE(g.maxCoeff(), 1.0);
}

TEST(Fid, SelfDistanceSymmetryAndGaussians) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_matrix(5, 40, rng);
  const Eigen::MatrixXd y = random_matrix(5, 30, rng, 2.0);
  EXPECT_LT(std::abs(gs::fid(x, x)), 1e-6);
  EXPECT_NEAR(gs::fid(x, y), gs::fid(y, x), 1e-9);
  Eigen::MatrixXd a = random_matrix(1, 10000, rng);
  Eigen::MatrixXd b = random_matrix(1, 10000, rng).array() + 1.0;
  EXPECT_NEAR(gs::fid(a, b), 1.0, 0.1);
  EXPECT_EQ(gs::testing::error_kind([&] { gs::fid(x.leftCols(1), y); }), gs::ErrorKind::DegenerateCorpus);
}

TEST(MotionDiversity, Oracles) {
  EXPECT_EQ(gs::motion_diversity(Eigen::MatrixXd::Ones(4, 6)), 0.0);
  Eigen::MatrixXd two(3, 2);
  two << 0, 2, 1, 1, 5, 5;
  EXPECT_DOUBLE_EQ(gs::motion_diversity(two), 2.0);
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd f = random_matrix(7, 50, rng);
  EXPECT_NEAR(gs::motion_diversity(f), brute_diversity(f), 1e-9);
  EXPECT_NEAR(gs::motion_diversity(3.0 * f), 3.0 * gs::motion_diversity(f), 1e-9);
}

TEST(BeatAlignment, AnalyticAndBruteForce) {
  EXPECT_NEAR(gs::beat_alignment_score({5, 15, 25}, {5, 15, 25, 33}, 3.0), 1.0, 1e-9);
  EXPECT_NEAR(gs::beat_alignment_score({5, 15, 25}, {8, 12, 28}, 3.0), std::exp(-0.5), 1e-9);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> frame(0, 99);
  for (int trial = 0; trial < 50; ++trial) {
    std::set<int> m, k;
    for (int i = 0; i < 8; ++i) m.insert(frame(rng));
    for (int i = 0; i < 12; ++i) k.insert(frame(rng));
    const std::vector<int> music(m.begin(), m.end()), motion(k.begin(), k.end());
    const double s = gs::beat_alignment_score(music, motion, 3.0);
    EXPECT_NEAR(s, brute_bas(music, motion, 3.0), 1e-12);
    std::vector<int> music2 = music, motion2 = motion;
    for (int& v : music2) v += 17;
    for (int& v : motion2) v += 17;
    EXPECT_NEAR(gs::beat_alignment_score(music2, motion2, 3.0), s, 1e-12);
  }
}

TEST(Pfc, StationaryConstantVelocityAndTranslation) {
  const auto topo = gs::SkeletonTopology::smpl24();
  EXPECT_EQ(gs::pfc(rest_pose(topo, 20), topo), 0.0);
  EXPECT_NEAR(gs::pfc(moving_root(topo, 20, 0.03), topo), 0.0, 1e-9);

  std::mt19937_64 rng(5);
  gs::PoseSequence wild = rest_pose(topo, 20);
  wild.line_vectors = random_line_vectors(23, 20, rng);
  *wild.root += random_matrix(3, 20, rng, 0.05);
  const double base = gs::pfc(wild, topo);
  EXPECT_GT(base, 0.0);
  gs::PoseSequence shifted = wild;
  shifted.root->colwise() += Eigen::Vector3d(3, 1, -2);
  EXPECT_NEAR(gs::pfc(shifted, topo), base, 1e-9);
}

TEST(LatentDispersion, ClipsNullAndDuplicates) {
  const auto plan = gs::SegmentPlan::make(70, 25, 5);
  std::mt19937_64 rng(6);
  std::vector<std::string> ids;
  std::vector<Eigen::MatrixXd> z;
  for (int c = 0; c < 100; ++c) {
    ids.push_back("clip" + std::to_string(c));
    z.push_back(random_matrix(8, 70, rng));
  }
  const auto out = gs::latent_dispersion_export(ids, z, plan);
  EXPECT_EQ(out.clips, 100);
  std::set<std::string> seen;
  for (const auto& s : out.segments) seen.insert(s["clip"].get<std::string>());
  EXPECT_EQ(seen.size(), 100u);
  ASSERT_TRUE(out.dispersion.has_value());

  const auto single = gs::latent_dispersion_export({"a"}, {random_matrix(8, 25, rng)}, plan);
  EXPECT_FALSE(single.dispersion.has_value());

  Eigen::MatrixXd dup(4, 50);
  const Eigen::MatrixXd block = random_matrix(4, 25, rng);
  dup << block, block;
  const auto d = gs::latent_dispersion_export({"a"}, {dup}, gs::SegmentPlan::make(51, 25, 25));
  ASSERT_TRUE(d.dispersion.has_value());
  EXPECT_NEAR(*d.dispersion, 1.0, 1e-12);
}
