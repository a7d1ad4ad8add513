#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/audiofeat.hpp"
#include "groovesynth/layers.hpp"
#include "groovesynth/skeleton.hpp"

namespace groovesynth {

struct BpsConfig {
  int bones = 23;
  int max_seed_beats = 3;
  nn::ConvEncoderConfig mfcc_encoder;
  nn::ConvEncoderConfig chroma_encoder;
  nn::GraphPoseEncoderConfig pose_encoder;
  nn::TransformerConfig transformer;
  std::uint64_t seed = 1;

  // Widths and depths from the reference setup.
  static BpsConfig full(int bones = 23, int mfcc_channels = 60);
  // Same layout with two blocks and narrower layers, for CPU runs.
  static BpsConfig desk(int bones = 23, int mfcc_channels = 60);
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BpsConfig, bones, max_seed_beats, mfcc_encoder, chroma_encoder, pose_encoder,
                                   transformer, seed)

// Everything the beat generator sees for one window. Columns follow `beats`;
// the first `seed_count` columns of `poses` are real poses, the rest are
// ignored.
struct BpsInput {
  Eigen::MatrixXd mfcc;
  Eigen::MatrixXd chroma;
  Eigen::MatrixXd poses;
  std::vector<int> beats;
  int seed_count = 0;

  int generated() const { return static_cast<int>(beats.size()) - seed_count; }
};

// Column i is features[:, beats[i]].
Eigen::MatrixXd gather_beat_features(const Eigen::MatrixXd& features, const std::vector<int>& beats);

// Uses the last `max_seed_beats` beats of the seed window followed by every
// non-seed beat. `line_vectors` only needs valid seed columns.
BpsInput make_bps_input(const AudioFeatureSet& feats, const FrameIndexSets& sets,
                        const Eigen::MatrixXd& line_vectors, int max_seed_beats);

class BpsModel {
 public:
  BpsModel(const BpsConfig& cfg, const SkeletonTopology& topo);
  BpsModel(const BpsModel&) = delete;
  BpsModel& operator=(const BpsModel&) = delete;
  BpsModel(BpsModel&&) = default;
  BpsModel& operator=(BpsModel&&) = default;

  const BpsConfig& config() const { return cfg_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // 3(J-1) x (|B| - seed_count) unit bone vectors, one column per generated beat.
  nn::Tensor forward(const BpsInput& input, const nn::Context& ctx = {}) const;

 private:
  BpsConfig cfg_;
  nn::ParameterSet params_;
  nn::ConvEncoder mfcc_;
  nn::ConvEncoder chroma_;
  nn::GraphPoseEncoder pose_;
  nn::TransformerEncoder generator_;
};

// Throws EmptyBeats when there is nothing to generate.
nn::Tensor bps_forward(const BpsModel& model, const BpsInput& input, const nn::Context& ctx = {});

}  // namespace groovesynth
