#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/audiofeat.hpp"
#include "groovesynth/layers.hpp"
#include "groovesynth/skeleton.hpp"

namespace groovesynth {

struct RpsConfig {
  int bones = 23;
  int noise_dim = 8;
  int latent_dim = 32;
  nn::ConvEncoderConfig mfcc_encoder;
  nn::ConvEncoderConfig chroma_encoder;
  nn::GraphPoseEncoderConfig pose_encoder;  // takes one extra indicator row
  nn::TransformerConfig encoder;
  nn::TransformerConfig latent_decoder;
  nn::TransformerConfig motion_decoder;
  std::uint64_t seed = 2;

  static RpsConfig full(int bones = 23, int mfcc_channels = 60);
  static RpsConfig desk(int bones = 23, int mfcc_channels = 60);
};

struct DiscriminatorConfig {
  int bones = 23;
  nn::GraphPoseEncoderConfig pose_encoder;
  int hidden = 64;
  std::uint64_t seed = 3;

  static DiscriminatorConfig full(int bones = 23);
  static DiscriminatorConfig desk(int bones = 23);
};

struct TrajectoryConfig {
  int bones = 23;
  int pose_dim = 16;
  nn::TransformerConfig encoder;
  nn::TransformerConfig decoder;
  std::uint64_t seed = 4;

  static TrajectoryConfig full(int bones = 23);
  static TrajectoryConfig desk(int bones = 23);
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RpsConfig, bones, noise_dim, latent_dim, mfcc_encoder, chroma_encoder,
                                   pose_encoder, encoder, latent_decoder, motion_decoder, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DiscriminatorConfig, bones, pose_encoder, hidden, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrajectoryConfig, bones, pose_dim, encoder, decoder, seed)

// One window of conditioning. `known_poses` is 3(J-1) x T and must hold real
// poses on the seed window and on the non-seed beats; repletion columns are
// ignored.
struct RpsInput {
  Eigen::MatrixXd mfcc;
  Eigen::MatrixXd chroma;
  Eigen::MatrixXd known_poses;
  FrameIndexSets sets;
};

struct RpsOutput {
  nn::Tensor repletion;  // 3(J-1) x |R|, unit bone vectors
  nn::Tensor latents;    // latent_dim x |R|
};

Eigen::MatrixXd draw_noise(int dim, int frames, std::mt19937_64& rng);

// Per-frame role row: 0 repletion, 0.5 seed, 1 beat.
Eigen::RowVectorXd frame_roles(const FrameIndexSets& sets);

class RpsGenerator {
 public:
  RpsGenerator(const RpsConfig& cfg, const SkeletonTopology& topo);
  RpsGenerator(const RpsGenerator&) = delete;
  RpsGenerator& operator=(const RpsGenerator&) = delete;
  RpsGenerator(RpsGenerator&&) = default;
  RpsGenerator& operator=(RpsGenerator&&) = default;

  const RpsConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // noise: noise_dim x T.
  RpsOutput forward(const RpsInput& input, const Eigen::MatrixXd& noise, const nn::Context& ctx = {}) const;

 private:
  RpsConfig cfg_;
  nn::ParameterSet params_;
  nn::ConvEncoder mfcc_;
  nn::ConvEncoder chroma_;
  nn::GraphPoseEncoder pose_;
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder latent_;
  nn::TransformerDecoder motion_;
};

RpsOutput rps_generate(const RpsGenerator& gen, const RpsInput& input, const Eigen::MatrixXd& noise,
                       const nn::Context& ctx = {});

// Scatters seed (3(J-1) x T_S), non-seed beat poses and repletion poses into
// one 3(J-1) x T sequence. CoverageError unless the sets partition the window
// and the column counts match.
nn::Tensor assemble_full_dance(const nn::Tensor& seed, const nn::Tensor& beat_poses, const nn::Tensor& repletion,
                               const FrameIndexSets& sets);
PoseSequence assemble_full_dance(const PoseSequence& seed, const Eigen::MatrixXd& beat_poses,
                                 const Eigen::MatrixXd& repletion, const FrameIndexSets& sets);

class RpsDiscriminator {
 public:
  RpsDiscriminator(const DiscriminatorConfig& cfg, const SkeletonTopology& topo);
  RpsDiscriminator(const RpsDiscriminator&) = delete;
  RpsDiscriminator& operator=(const RpsDiscriminator&) = delete;
  RpsDiscriminator(RpsDiscriminator&&) = default;
  RpsDiscriminator& operator=(RpsDiscriminator&&) = default;

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // 1x1 probability that the 3(J-1) x L sequence is real.
  nn::Tensor forward(const nn::Tensor& poses) const;

 private:
  DiscriminatorConfig cfg_;
  nn::ParameterSet params_;
  nn::GraphPoseEncoder pose_;
  nn::BiGRU gru_;
  nn::Linear fc1_, fc2_;
};

nn::Tensor disc_forward(const RpsDiscriminator& disc, const nn::Tensor& poses);

// Root offsets, relative to the last seed frame, for the repletion frames.
class TrajectoryPredictor {
 public:
  TrajectoryPredictor(const TrajectoryConfig& cfg);
  TrajectoryPredictor(const TrajectoryPredictor&) = delete;
  TrajectoryPredictor& operator=(const TrajectoryPredictor&) = delete;
  TrajectoryPredictor(TrajectoryPredictor&&) = default;
  TrajectoryPredictor& operator=(TrajectoryPredictor&&) = default;

  const TrajectoryConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // Teacher-forced pass; `previous` is 3 x |R| ground truth offsets.
  nn::Tensor forward_teacher(const nn::Tensor& dance, const std::vector<int>& frames,
                             const nn::Tensor& previous) const;
  // Autoregressive prediction, 3 x frames.size().
  nn::Tensor predict(const nn::Tensor& dance, const std::vector<int>& frames) const;
  // Exposes the decoder for causality checks: outputs given arbitrary feedback.
  nn::Tensor decode_with_feedback(const nn::Tensor& dance, const std::vector<int>& frames,
                                  const nn::Tensor& previous) const;

 private:
  nn::Tensor encode(const nn::Tensor& dance, const std::vector<int>& frames) const;

  TrajectoryConfig cfg_;
  nn::ParameterSet params_;
  nn::TransformerEncoder encoder_;
  nn::TransformerDecoder decoder_;
};

// dance: 3(J-1) x T assembled poses; frames: repletion frame indices.
nn::Tensor predict_trajectory(const TrajectoryPredictor& tp, const nn::Tensor& dance, const std::vector<int>& frames);

// Seed roots on the seed window, predicted offsets (plus the last seed root)
// on repletion frames, and linear interpolation over the remaining beats.
Eigen::Matrix3Xd assemble_root(const Eigen::Matrix3Xd& seed_root, const Eigen::MatrixXd& offsets,
                               const FrameIndexSets& sets);

}  // namespace groovesynth
