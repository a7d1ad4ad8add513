#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "groovesynth/dataset.hpp"
#include "groovesynth/errors.hpp"
#include "groovesynth/metrics.hpp"
#include "test_support.hpp"

namespace gs = groovesynth;
namespace fs = std::filesystem;
using gs::testing::error_kind;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("groovesynth_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Partition oracle: every frame appears exactly once across the three sets.
bool partitions(const gs::FrameIndexSets& s) {
  std::vector<int> hits(s.total, 0);
  for (int f = 0; f < s.seed_length; ++f) ++hits[f];
  for (int f : s.nonseed_beats) ++hits[f];
  for (int f : s.repletion) ++hits[f];
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

gs::DanceClip synth_clip(double duration, std::uint64_t seed, std::vector<gs::SynthTruth>* truth = nullptr) {
  gs::SynthConfig cfg;
  cfg.duration = duration;
  return gs::synth_dataset(1, seed, gs::SkeletonTopology::smpl24(), cfg, truth).front();
}

}  // namespace

TEST(Windowing, ClipLengths) {
  const auto topo = gs::SkeletonTopology::smpl24();
  const gs::WindowConfig cfg;
  gs::WindowStats stats;
  const auto samples = gs::window_clip(synth_clip(21.0, 1), topo, cfg, &stats);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(stats.windows, 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].start, static_cast<int>(70 * i));
    EXPECT_EQ(samples[i].poses.cols(), 70);
    EXPECT_TRUE(partitions(samples[i].sets));
  }
  EXPECT_TRUE(gs::window_clip(synth_clip(6.0, 2), topo, cfg).empty());

  const auto again = gs::window_clip(synth_clip(21.0, 1), topo, cfg);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(again[i].start, samples[i].start);
    EXPECT_EQ(again[i].sets.beats, samples[i].sets.beats);
  }
}

TEST(SynthDataset, UnitNormsAndBeatRecovery) {
  const auto topo = gs::SkeletonTopology::smpl24();
  std::vector<gs::SynthTruth> truth;
  gs::SynthConfig cfg;
  cfg.duration = 14.0;
  const auto clips = gs::synth_dataset(6, 3, topo, cfg, &truth);
  ASSERT_EQ(clips.size(), 6u);
  int hits = 0, total = 0;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    EXPECT_GE(truth[c].bpm, 80.0);
    EXPECT_LE(truth[c].bpm, 140.0);
    gs::validate_pose(clips[c].pose, topo, 1e-12);
    const auto beats = gs::detect_beats(clips[c].audio, cfg.fps, 1000);
    for (double t : truth[c].click_times) {
      const int frame = static_cast<int>(std::lround(t * cfg.fps));
      if (frame >= clips[c].pose.frames()) continue;
      ++total;
      hits += std::any_of(beats.begin(), beats.end(), [&](int b) { return std::abs(b - frame) <= 1; });
    }
  }
  EXPECT_GE(hits, 0.9 * total) << hits << "/" << total;
}

TEST(SynthDataset, DanceAlignsWithOwnClicks) {
  const auto topo = gs::SkeletonTopology::smpl24();
  std::vector<gs::SynthTruth> truth;
  const auto clips = gs::synth_dataset(4, 4, topo, {}, &truth);
  for (std::size_t c = 0; c < clips.size(); ++c) {
    std::vector<int> music;
    for (double t : truth[c].click_times) {
      const int f = static_cast<int>(std::lround(t * 10.0));
      if (f < clips[c].pose.frames()) music.push_back(f);
    }
    EXPECT_GT(gs::beat_alignment_score(clips[c].pose, topo, music).score, 0.8) << c;
  }
}

TEST(DatasetIo, ManifestErrorsAndRoundTrip) {
  const auto topo = gs::SkeletonTopology::smpl24();
  const fs::path dir = fresh_dir("dataset_io");
  {
    std::ofstream(dir / "manifest.json") << R"({"clips": []})";
  }
  EXPECT_TRUE(gs::load_aist_dir(dir).empty());

  auto clips = gs::synth_dataset(2, 5, topo);
  clips[1].split = "test";
  gs::save_dataset(dir, clips, topo);
  const auto back = gs::load_aist_dir(dir);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].id, clips[i].id);
    EXPECT_EQ(back[i].split, clips[i].split);
    EXPECT_EQ(back[i].pose.line_vectors, clips[i].pose.line_vectors);
    EXPECT_EQ(*back[i].pose.root, *clips[i].pose.root);
  }

  fs::remove(dir / ("audio/" + clips[0].id + ".wav"));
  try {
    gs::load_aist_dir(dir);
    FAIL() << "expected ManifestError";
  } catch (const gs::Error& e) {
    EXPECT_EQ(e.kind(), gs::ErrorKind::ManifestError);
    EXPECT_NE(std::string(e.what()).find(clips[0].id), std::string::npos);
  }
  EXPECT_EQ(error_kind([&] { gs::load_aist_dir(dir / "nowhere"); }), gs::ErrorKind::ManifestError);
  fs::remove_all(dir);
}

TEST(FeatureCache, MatchesRecomputation) {
  const fs::path dir = fresh_dir("feature_cache");
  const auto clip = synth_clip(7.0, 6);
  gs::WindowConfig cfg;
  cfg.cache_dir = dir;
  const auto first = gs::cached_features(clip.audio, cfg);
  EXPECT_FALSE(fs::is_empty(dir));
  const auto cached = gs::cached_features(clip.audio, cfg);
  const auto direct = gs::extract_features(clip.audio, cfg.fps, cfg.beat_cap, cfg.n_mfcc, cfg.audio);
  EXPECT_LT((cached.mfcc - direct.mfcc).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((cached.chroma - direct.chroma).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(cached.beats, direct.beats);
  gs::WindowConfig other = cfg;
  other.n_mfcc = 13;
  EXPECT_NE(gs::feature_cache_key(clip.audio, cfg), gs::feature_cache_key(clip.audio, other));
  fs::remove_all(dir);
}

TEST(FeatureStats, StandardizesTrainingWindows) {
  const auto topo = gs::SkeletonTopology::smpl24();
  const auto samples = gs::window_corpus(gs::synth_dataset(3, 7, topo), topo, {});
  const auto stats = gs::FeatureStats::fit(samples);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(stats.mfcc_mean.size());
  double n = 0;
  for (const auto& s : samples) {
    sum += stats.apply(s.features).mfcc.rowwise().sum();
    n += s.features.mfcc.cols();
  }
  EXPECT_LT((sum / n).cwiseAbs().maxCoeff(), 1e-9);
  const auto back = gs::FeatureStats::from_json(stats.to_json());
  EXPECT_EQ(back.mfcc_mean, stats.mfcc_mean);
  EXPECT_EQ(back.mfcc_scale, stats.mfcc_scale);
}
