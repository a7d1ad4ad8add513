#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/audiofeat.hpp"
#include "groovesynth/skeleton.hpp"
#include "groovesynth/wav.hpp"

namespace groovesynth {

struct DanceClip {
  std::string id;
  PoseSequence pose;  // with root
  AudioClip audio;
  std::string genre;
  std::string split = "train";
};

struct WindowConfig {
  double fps = 10.0;
  int window = 70;
  int seed_length = 20;
  int beat_cap = 20;
  int n_mfcc = 20;
  AudioFeatureParams audio;
  std::optional<std::filesystem::path> cache_dir;
};

struct TrainingSample {
  std::string clip_id;
  int start = 0;  // first frame of the window within the clip
  AudioFeatureSet features;
  FrameIndexSets sets;
  Eigen::MatrixXd poses;  // 3(J-1) x T
  Eigen::Matrix3Xd root;  // 3 x T

  Eigen::MatrixXd seed_poses() const { return poses.leftCols(sets.seed_length); }
  Eigen::MatrixXd beat_poses() const;
  Eigen::MatrixXd repletion_poses() const;
};

struct WindowStats {
  int windows = 0;
  int dropped_no_seed_beat = 0;
  int dropped_no_beats = 0;
};

// Non-overlapping windows from the start of the clip; windows without a beat
// in the seed window are dropped and counted.
std::vector<TrainingSample> window_clip(const DanceClip& clip, const SkeletonTopology& topo,
                                        const WindowConfig& cfg, WindowStats* stats = nullptr);
std::vector<TrainingSample> window_corpus(const std::vector<DanceClip>& clips, const SkeletonTopology& topo,
                                          const WindowConfig& cfg, WindowStats* stats = nullptr);

// Feature extraction through the on-disk cache when `cache_dir` is set.
AudioFeatureSet cached_features(const AudioClip& clip, const WindowConfig& cfg);
std::string feature_cache_key(const AudioClip& clip, const WindowConfig& cfg);

struct SynthConfig {
  double duration = 7.0;
  double fps = 10.0;
  double sample_rate = 16000.0;
  double min_bpm = 80.0;
  double max_bpm = 140.0;
};

struct SynthTruth {
  double bpm = 0.0;
  std::vector<double> click_times;  // seconds
};

// Click-track audio with band-limited noise and a pitched pad, paired with a
// procedural dance whose bones swing between extremes on every click.
std::vector<DanceClip> synth_dataset(int n_clips, std::uint64_t seed, const SkeletonTopology& topo,
                                     const SynthConfig& cfg = {}, std::vector<SynthTruth>* truth = nullptr);

// Directory layout: manifest.json, motions/<id>.json, audio/<id>.wav.
// manifest: {"clips": [{"id", "motion", "audio", "split", "genre"}]}
void save_dataset(const std::filesystem::path& dir, const std::vector<DanceClip>& clips,
                  const SkeletonTopology& topo);
std::vector<DanceClip> load_aist_dir(const std::filesystem::path& dir, SkeletonTopology* topo = nullptr);

// Per-channel MFCC standardization fitted on training windows.
struct FeatureStats {
  Eigen::VectorXd mfcc_mean;
  Eigen::VectorXd mfcc_scale;

  static FeatureStats fit(const std::vector<TrainingSample>& samples);
  AudioFeatureSet apply(const AudioFeatureSet& feats) const;
  nlohmann::json to_json() const;
  static FeatureStats from_json(const nlohmann::json& doc);
};

}  // namespace groovesynth
