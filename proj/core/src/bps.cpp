#include "groovesynth/bps.hpp"

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

BpsConfig make_config(int bones, int mfcc_channels, bool full) {
  BpsConfig cfg;
  cfg.bones = bones;
  const int hidden = full ? 64 : 32;
  cfg.mfcc_encoder = {mfcc_channels, 32, {hidden}, {3, 3}, 1};
  cfg.chroma_encoder = {12, 4, {full ? 16 : 8}, {3, 3}, 1};
  cfg.pose_encoder.bones = bones;
  cfg.pose_encoder.graph_channels = full ? std::vector<int>{16, 16} : std::vector<int>{8};
  cfg.pose_encoder.out_dim = 16;
  cfg.transformer = full ? nn::TransformerConfig{64, 4, 6, 128, 0.0} : nn::TransformerConfig{32, 4, 2, 64, 0.0};
  return cfg;
}

}  // namespace

BpsConfig BpsConfig::full(int bones, int mfcc_channels) { return make_config(bones, mfcc_channels, true); }
BpsConfig BpsConfig::desk(int bones, int mfcc_channels) { return make_config(bones, mfcc_channels, false); }

Eigen::MatrixXd gather_beat_features(const Eigen::MatrixXd& features, const std::vector<int>& beats) {
  Eigen::MatrixXd out(features.rows(), static_cast<Eigen::Index>(beats.size()));
  for (std::size_t i = 0; i < beats.size(); ++i) {
    require(beats[i] >= 0 && beats[i] < features.cols(), ErrorKind::IndexOutOfRange,
            "beat frame " + std::to_string(beats[i]) + " outside " + std::to_string(features.cols()) + " frames");
    out.col(static_cast<Eigen::Index>(i)) = features.col(beats[i]);
  }
  return out;
}

BpsInput make_bps_input(const AudioFeatureSet& feats, const FrameIndexSets& sets,
                        const Eigen::MatrixXd& line_vectors, int max_seed_beats) {
  require(feats.frames() == sets.total, ErrorKind::ShapeMismatch, "feature length differs from the window");
  BpsInput in;
  const int keep = std::min<int>(max_seed_beats, static_cast<int>(sets.seed_beats.size()));
  in.beats.assign(sets.seed_beats.end() - keep, sets.seed_beats.end());
  in.beats.insert(in.beats.end(), sets.nonseed_beats.begin(), sets.nonseed_beats.end());
  in.seed_count = keep;
  in.mfcc = gather_beat_features(feats.mfcc, in.beats);
  in.chroma = gather_beat_features(feats.chroma, in.beats);
  in.poses = Eigen::MatrixXd::Zero(line_vectors.rows(), static_cast<Eigen::Index>(in.beats.size()));
  for (int i = 0; i < keep; ++i) in.poses.col(i) = line_vectors.col(in.beats[static_cast<std::size_t>(i)]);
  return in;
}

BpsModel::BpsModel(const BpsConfig& cfg, const SkeletonTopology& topo) : cfg_(cfg) {
  require(topo.bones() == cfg.bones, ErrorKind::ConfigError, "beat model bone count differs from the skeleton");
  nn::Initializer init(cfg.seed);
  mfcc_ = nn::ConvEncoder(params_, "mfcc_encoder", cfg.mfcc_encoder, init);
  chroma_ = nn::ConvEncoder(params_, "chroma_encoder", cfg.chroma_encoder, init);
  require(cfg.pose_encoder.bones == cfg.bones && cfg.pose_encoder.extra_rows == 0, ErrorKind::ConfigError,
          "beat pose encoder must match the skeleton and take no extra rows");
  pose_ = nn::GraphPoseEncoder(params_, "pose_encoder", cfg.pose_encoder, topo.bone_adjacency(), init);
  const int audio = cfg.mfcc_encoder.out_channels + cfg.chroma_encoder.out_channels;
  generator_ = nn::TransformerEncoder(params_, "generator", cfg.transformer, audio + cfg.pose_encoder.out_dim, audio,
                                      3 * cfg.bones, init);
}

nn::Tensor BpsModel::forward(const BpsInput& input, const nn::Context& ctx) const {
  const auto count = static_cast<Eigen::Index>(input.beats.size());
  require(input.mfcc.cols() == count && input.chroma.cols() == count && input.poses.cols() == count,
          ErrorKind::ShapeMismatch, "beat inputs must have one column per beat");
  require(input.seed_count >= 1 && input.seed_count <= cfg_.max_seed_beats, ErrorKind::ShapeMismatch,
          "need between 1 and " + std::to_string(cfg_.max_seed_beats) + " seed beats, got " +
              std::to_string(input.seed_count));
  require(input.generated() > 0, ErrorKind::EmptyBeats, "all beats are seed beats; nothing to generate");

  const nn::Tensor audio = nn::concat_rows({mfcc_(nn::Tensor::constant(input.mfcc)),
                                            chroma_(nn::Tensor::constant(input.chroma))});
  Eigen::RowVectorXd keep = Eigen::RowVectorXd::Zero(count);
  keep.head(input.seed_count).setOnes();
  const nn::Tensor poses = pose_(nn::Tensor::constant(input.poses), keep);
  std::vector<double> positions(input.beats.begin(), input.beats.end());
  const nn::Tensor out = generator_(nn::concat_rows({audio, poses}), positions, &audio, &positions, ctx);
  return nn::normalize_groups(nn::slice_cols(out, input.seed_count, input.generated()), 3);
}

nn::Tensor bps_forward(const BpsModel& model, const BpsInput& input, const nn::Context& ctx) {
  return model.forward(input, ctx);
}

}  // namespace groovesynth
