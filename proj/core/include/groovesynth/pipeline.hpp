#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/bps.hpp"
#include "groovesynth/checkpoint.hpp"
#include "groovesynth/config.hpp"
#include "groovesynth/dataset.hpp"
#include "groovesynth/metrics.hpp"
#include "groovesynth/rps.hpp"

namespace groovesynth {

struct ModelPresets {
  BpsConfig bps;
  RpsConfig rps;
  DiscriminatorConfig disc;
  TrajectoryConfig traj;
};

// "full" or "desk" widths for a skeleton with `bones` bones.
ModelPresets model_presets(const std::string& preset, int bones, int mfcc_channels);

// Windowing settings of a training config; the feature cache directory comes
// from GROOVESYNTH_CACHE when it is set.
WindowConfig window_config(const TrainConfig& cfg);

// Samples from the clips tagged `split`.
std::vector<TrainingSample> load_samples(const std::vector<DanceClip>& clips, const SkeletonTopology& topo,
                                         const TrainConfig& cfg, const std::string& split,
                                         WindowStats* stats = nullptr);

using EpochCallback = std::function<void(const nlohmann::json&)>;

struct TrainResult {
  // One entry per epoch: {"epoch", "samples", loss components..., "total"}.
  std::vector<nlohmann::json> log;
  Checkpoint checkpoint;
  int rtc_skipped = 0;
};

// Each stage writes cfg.out (when set) at the end and every
// cfg.checkpoint_every epochs, and resumes from cfg.resume (when set).
TrainResult train_bps(const TrainConfig& cfg, const std::vector<TrainingSample>& samples,
                      const SkeletonTopology& topo, const EpochCallback& on_epoch = {});
// Needs cfg.bps_checkpoint unless cfg.disable_bps.
TrainResult train_rps(const TrainConfig& cfg, const std::vector<TrainingSample>& samples,
                      const SkeletonTopology& topo, const EpochCallback& on_epoch = {});
// Needs cfg.rps_checkpoint.
TrainResult train_traj(const TrainConfig& cfg, const std::vector<TrainingSample>& samples,
                       const SkeletonTopology& topo, const EpochCallback& on_epoch = {});

// Frozen models restored from a stage checkpoint. A BPS checkpoint carries
// only the beat model; RPS adds the generator; trajectory adds the root
// predictor.
class ModelBundle {
 public:
  explicit ModelBundle(const Checkpoint& ckpt);

  const SkeletonTopology& topology() const { return topo_; }
  const FeatureStats& stats() const { return stats_; }
  const TrainConfig& config() const { return cfg_; }
  bool uses_bps() const { return !cfg_.disable_bps; }
  const BpsModel* bps() const { return bps_.get(); }
  const RpsGenerator* rps() const { return rps_.get(); }
  const TrajectoryPredictor* trajectory() const { return traj_.get(); }

 private:
  SkeletonTopology topo_;
  FeatureStats stats_;
  TrainConfig cfg_;
  std::unique_ptr<BpsModel> bps_;
  std::unique_ptr<RpsGenerator> rps_;
  std::unique_ptr<TrajectoryPredictor> traj_;
};

struct WindowResult {
  FrameIndexSets sets;
  Eigen::MatrixXd poses;    // 3(J-1) x T
  Eigen::Matrix3Xd root;    // 3 x T
  Eigen::MatrixXd latents;  // latent_dim x T, zero outside the repletion frames
};

// One window from raw features and ground-truth seed context. Without a
// trajectory model the root stays at the last seed root.
WindowResult generate_window(const ModelBundle& bundle, const AudioFeatureSet& features,
                             const Eigen::MatrixXd& seed_poses, const Eigen::Matrix3Xd& seed_root,
                             std::mt19937_64& rng);

// Beat poses only: 3(J-1) x |nonseed beats| alongside the index sets used.
struct BeatGeneration {
  FrameIndexSets sets;
  Eigen::MatrixXd poses;
};
BeatGeneration generate_beats(const ModelBundle& bundle, const AudioFeatureSet& features,
                              const Eigen::MatrixXd& seed_poses);

struct GenerationResult {
  PoseSequence pose;
  std::vector<int> music_beats;  // detected beats in output frames
  std::vector<int> window_starts;
};

// Consecutive windows; each later window starts at min(previous + T - T_S,
// L - T) and is seeded by the output frames before its non-seed part.
// TooShortAudio below one window, TooShortSeed below T_S frames.
GenerationResult generate(const ModelBundle& bundle, const AudioClip& audio, const PoseSequence& seed,
                          std::uint64_t seed_value);

// Motion corpus directory: a dataset (manifest.json) or loose motion JSONs.
// Generated files may carry a "music_beats" array used for beat alignment.
MetricsReport evaluate_dirs(const std::filesystem::path& reference, const std::filesystem::path& generated,
                            double sigma = 3.0);

// Repletion latents of every sample, on the full window timeline.
LatentDispersion export_latents(const ModelBundle& bundle, const std::vector<TrainingSample>& samples,
                                std::uint64_t seed_value);

}  // namespace groovesynth
