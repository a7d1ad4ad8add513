#include "groovesynth/rps.hpp"

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

std::vector<double> frame_positions(int count) {
  std::vector<double> p(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) p[static_cast<std::size_t>(i)] = i;
  return p;
}

nn::GraphPoseEncoderConfig pose_encoder_config(int bones, bool full, int extra_rows) {
  nn::GraphPoseEncoderConfig cfg;
  cfg.bones = bones;
  cfg.extra_rows = extra_rows;
  cfg.graph_channels = full ? std::vector<int>{16, 16} : std::vector<int>{8};
  cfg.out_dim = 16;
  return cfg;
}

RpsConfig make_rps(int bones, int mfcc_channels, bool full) {
  RpsConfig cfg;
  cfg.bones = bones;
  cfg.mfcc_encoder = {mfcc_channels, 32, {full ? 64 : 32}, {3, 3}, 1};
  cfg.chroma_encoder = {12, 6, {full ? 16 : 8}, {3, 3}, 1};
  cfg.pose_encoder = pose_encoder_config(bones, full, 1);
  if (full) {
    cfg.encoder = {64, 8, 6, 128, 0.0};
    cfg.latent_decoder = {48, 3, 8, 96, 0.0};
    cfg.motion_decoder = {48, 3, 4, 96, 0.0};
  } else {
    cfg.encoder = {32, 8, 2, 64, 0.0};
    cfg.latent_decoder = {24, 3, 2, 48, 0.0};
    cfg.motion_decoder = {24, 3, 2, 48, 0.0};
  }
  return cfg;
}

void check_partition(const FrameIndexSets& sets) {
  try {
    sets.validate(static_cast<int>(sets.beats.size()));
  } catch (const Error& e) {
    fail(ErrorKind::CoverageError, e.what());
  }
}

}  // namespace

RpsConfig RpsConfig::full(int bones, int mfcc_channels) { return make_rps(bones, mfcc_channels, true); }
RpsConfig RpsConfig::desk(int bones, int mfcc_channels) { return make_rps(bones, mfcc_channels, false); }

DiscriminatorConfig DiscriminatorConfig::full(int bones) {
  return {bones, pose_encoder_config(bones, true, 0), 64, 3};
}
DiscriminatorConfig DiscriminatorConfig::desk(int bones) {
  return {bones, pose_encoder_config(bones, false, 0), 32, 3};
}

TrajectoryConfig TrajectoryConfig::full(int bones) {
  return {bones, 16, {32, 4, 6, 64, 0.0}, {16, 1, 8, 32, 0.0}, 4};
}
TrajectoryConfig TrajectoryConfig::desk(int bones) {
  return {bones, 16, {16, 4, 2, 32, 0.0}, {16, 1, 2, 32, 0.0}, 4};
}

Eigen::MatrixXd draw_noise(int dim, int frames, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd noise(dim, frames);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gauss(rng);
  return noise;
}

Eigen::RowVectorXd frame_roles(const FrameIndexSets& sets) {
  Eigen::RowVectorXd roles = Eigen::RowVectorXd::Zero(sets.total);
  roles.head(sets.seed_length).setConstant(0.5);
  for (int b : sets.beats) roles[b] = 1.0;
  return roles;
}

// ---- generator ------------------------------------------------------------------

RpsGenerator::RpsGenerator(const RpsConfig& cfg, const SkeletonTopology& topo) : cfg_(cfg) {
  require(topo.bones() == cfg.bones && cfg.pose_encoder.bones == cfg.bones, ErrorKind::ConfigError,
          "repletion model bone count differs from the skeleton");
  require(cfg.pose_encoder.extra_rows == 1, ErrorKind::ConfigError, "repletion pose encoder needs one role row");
  require(cfg.noise_dim >= 0 && cfg.latent_dim > 0, ErrorKind::ConfigError, "bad noise or latent width");
  nn::Initializer init(cfg.seed);
  mfcc_ = nn::ConvEncoder(params_, "mfcc_encoder", cfg.mfcc_encoder, init);
  chroma_ = nn::ConvEncoder(params_, "chroma_encoder", cfg.chroma_encoder, init);
  pose_ = nn::GraphPoseEncoder(params_, "pose_encoder", cfg.pose_encoder, topo.bone_adjacency(), init);
  const int audio = cfg.mfcc_encoder.out_channels + cfg.chroma_encoder.out_channels;
  encoder_ = nn::TransformerEncoder(params_, "encoder", cfg.encoder,
                                    audio + cfg.pose_encoder.out_dim + cfg.noise_dim, audio, 0, init);
  latent_ = nn::TransformerDecoder(params_, "latent_decoder", cfg.latent_decoder, cfg.encoder.model_dim,
                                   cfg.latent_dim, false, init, cfg.encoder.model_dim);
  motion_ = nn::TransformerDecoder(params_, "motion_decoder", cfg.motion_decoder, cfg.encoder.model_dim,
                                   3 * cfg.bones, false, init, cfg.latent_dim);
}

RpsOutput RpsGenerator::forward(const RpsInput& input, const Eigen::MatrixXd& noise, const nn::Context& ctx) const {
  const FrameIndexSets& sets = input.sets;
  const int total = sets.total;
  require(input.mfcc.cols() == total && input.chroma.cols() == total && input.known_poses.cols() == total,
          ErrorKind::ShapeMismatch, "repletion inputs must span the whole window");
  require(input.known_poses.rows() == 3 * cfg_.bones, ErrorKind::ShapeMismatch, "pose rows differ from the skeleton");
  require(noise.rows() == cfg_.noise_dim && noise.cols() == total, ErrorKind::ShapeMismatch,
          "noise must be noise_dim x T");
  check_partition(sets);
  require(!sets.repletion.empty(), ErrorKind::ShapeMismatch, "window has no repletion frames");

  const nn::Tensor audio = nn::concat_rows({mfcc_(nn::Tensor::constant(input.mfcc)),
                                            chroma_(nn::Tensor::constant(input.chroma))});
  const Eigen::RowVectorXd roles = frame_roles(sets);
  Eigen::RowVectorXd keep = Eigen::RowVectorXd::Ones(total);
  for (int r : sets.repletion) keep[r] = 0.0;
  const nn::Tensor role_row = nn::Tensor::constant(roles);
  const nn::Tensor poses = pose_(nn::Tensor::constant(input.known_poses), keep, &role_row);

  std::vector<nn::Tensor> parts{audio, poses};
  if (cfg_.noise_dim > 0) parts.push_back(nn::Tensor::constant(noise));
  const std::vector<double> positions = frame_positions(total);
  const nn::Tensor encoded = encoder_(nn::concat_rows(parts), positions, &audio, &positions, ctx);

  const std::vector<double> targets(sets.repletion.begin(), sets.repletion.end());
  RpsOutput out;
  out.latents = latent_.decode_queries(encoded, positions, nn::gather_cols(encoded, sets.repletion), targets, ctx);
  out.repletion = nn::normalize_groups(motion_.decode_queries(encoded, positions, out.latents, targets, ctx), 3);
  return out;
}

RpsOutput rps_generate(const RpsGenerator& gen, const RpsInput& input, const Eigen::MatrixXd& noise,
                       const nn::Context& ctx) {
  return gen.forward(input, noise, ctx);
}

nn::Tensor assemble_full_dance(const nn::Tensor& seed, const nn::Tensor& beat_poses, const nn::Tensor& repletion,
                               const FrameIndexSets& sets) {
  check_partition(sets);
  require(seed.cols() == sets.seed_length, ErrorKind::CoverageError,
          "seed has " + std::to_string(seed.cols()) + " frames, window expects " + std::to_string(sets.seed_length));
  require(beat_poses.cols() == static_cast<Eigen::Index>(sets.nonseed_beats.size()), ErrorKind::CoverageError,
          "got " + std::to_string(beat_poses.cols()) + " beat poses for " +
              std::to_string(sets.nonseed_beats.size()) + " beats");
  require(repletion.cols() == static_cast<Eigen::Index>(sets.repletion.size()), ErrorKind::CoverageError,
          "got " + std::to_string(repletion.cols()) + " repletion poses for " +
              std::to_string(sets.repletion.size()) + " frames");
  require(seed.rows() == beat_poses.rows() && seed.rows() == repletion.rows(), ErrorKind::ShapeMismatch,
          "pose parts have different bone counts");
  std::vector<int> seed_frames(static_cast<std::size_t>(sets.seed_length));
  for (int t = 0; t < sets.seed_length; ++t) seed_frames[static_cast<std::size_t>(t)] = t;
  nn::Tensor out = nn::scatter_cols(seed, seed_frames, sets.total);
  if (!sets.nonseed_beats.empty()) out = nn::add(out, nn::scatter_cols(beat_poses, sets.nonseed_beats, sets.total));
  if (!sets.repletion.empty()) out = nn::add(out, nn::scatter_cols(repletion, sets.repletion, sets.total));
  return out;
}

PoseSequence assemble_full_dance(const PoseSequence& seed, const Eigen::MatrixXd& beat_poses,
                                 const Eigen::MatrixXd& repletion, const FrameIndexSets& sets) {
  nn::NoGradGuard guard;
  PoseSequence out;
  out.fps = seed.fps;
  out.line_vectors = assemble_full_dance(nn::Tensor::constant(seed.line_vectors), nn::Tensor::constant(beat_poses),
                                         nn::Tensor::constant(repletion), sets)
                         .value();
  return out;
}

// ---- discriminator ------------------------------------------------------------------

RpsDiscriminator::RpsDiscriminator(const DiscriminatorConfig& cfg, const SkeletonTopology& topo) : cfg_(cfg) {
  require(topo.bones() == cfg.bones && cfg.pose_encoder.bones == cfg.bones, ErrorKind::ConfigError,
          "discriminator bone count differs from the skeleton");
  require(cfg.hidden > 0, ErrorKind::ConfigError, "discriminator hidden width must be positive");
  nn::Initializer init(cfg.seed);
  pose_ = nn::GraphPoseEncoder(params_, "pose_encoder", cfg.pose_encoder, topo.bone_adjacency(), init);
  gru_ = nn::BiGRU(params_, "gru", cfg.pose_encoder.out_dim, cfg.hidden, init);
  fc1_ = nn::Linear(params_, "fc0", 2 * cfg.hidden, cfg.hidden, init);
  fc2_ = nn::Linear(params_, "fc1", cfg.hidden, 1, init);
}

nn::Tensor RpsDiscriminator::forward(const nn::Tensor& poses) const {
  require(poses.cols() >= 1, ErrorKind::ShapeMismatch, "discriminator needs at least one frame");
  const nn::Tensor features = pose_(poses, Eigen::RowVectorXd::Ones(poses.cols()));
  const nn::Tensor pooled = nn::mean_cols(gru_(features));
  return nn::sigmoid(fc2_(nn::leaky_relu(fc1_(pooled), 0.2)));
}

nn::Tensor disc_forward(const RpsDiscriminator& disc, const nn::Tensor& poses) { return disc.forward(poses); }

// ---- trajectory ----------------------------------------------------------------------

TrajectoryPredictor::TrajectoryPredictor(const TrajectoryConfig& cfg) : cfg_(cfg) {
  nn::Initializer init(cfg.seed);
  encoder_ = nn::TransformerEncoder(params_, "encoder", cfg.encoder, 3 * cfg.bones, 0, cfg.pose_dim, init);
  decoder_ = nn::TransformerDecoder(params_, "decoder", cfg.decoder, cfg.pose_dim, 3, true, init);
}

nn::Tensor TrajectoryPredictor::encode(const nn::Tensor& dance, const std::vector<int>& frames) const {
  require(dance.rows() == 3 * cfg_.bones, ErrorKind::ShapeMismatch, "trajectory input rows differ from the skeleton");
  require(!frames.empty(), ErrorKind::ShapeMismatch, "trajectory needs at least one frame");
  const nn::Tensor encoded = encoder_(dance, frame_positions(static_cast<int>(dance.cols())));
  return nn::gather_cols(encoded, frames);
}

nn::Tensor TrajectoryPredictor::decode_with_feedback(const nn::Tensor& dance, const std::vector<int>& frames,
                                                     const nn::Tensor& previous) const {
  const std::vector<double> positions(frames.begin(), frames.end());
  return decoder_.decode_with_feedback(encode(dance, frames), positions, previous, positions);
}

nn::Tensor TrajectoryPredictor::forward_teacher(const nn::Tensor& dance, const std::vector<int>& frames,
                                                const nn::Tensor& previous) const {
  return decode_with_feedback(dance, frames, previous);
}

nn::Tensor TrajectoryPredictor::predict(const nn::Tensor& dance, const std::vector<int>& frames) const {
  const std::vector<double> positions(frames.begin(), frames.end());
  return decoder_.generate(encode(dance, frames), positions, positions);
}

nn::Tensor predict_trajectory(const TrajectoryPredictor& tp, const nn::Tensor& dance, const std::vector<int>& frames) {
  return tp.predict(dance, frames);
}

Eigen::Matrix3Xd assemble_root(const Eigen::Matrix3Xd& seed_root, const Eigen::MatrixXd& offsets,
                               const FrameIndexSets& sets) {
  require(sets.seed_length >= 1 && seed_root.cols() >= sets.seed_length, ErrorKind::ShapeMismatch,
          "seed root must cover the seed window");
  require(offsets.rows() == 3 && offsets.cols() == static_cast<Eigen::Index>(sets.repletion.size()),
          ErrorKind::ShapeMismatch, "one root offset per repletion frame required");
  Eigen::Matrix3Xd root = Eigen::Matrix3Xd::Zero(3, sets.total);
  std::vector<char> known(static_cast<std::size_t>(sets.total), 0);
  for (int t = 0; t < sets.seed_length; ++t) {
    root.col(t) = seed_root.col(t);
    known[static_cast<std::size_t>(t)] = 1;
  }
  const Eigen::Vector3d anchor = seed_root.col(sets.seed_length - 1);
  for (std::size_t i = 0; i < sets.repletion.size(); ++i) {
    root.col(sets.repletion[i]) = anchor + offsets.col(static_cast<Eigen::Index>(i));
    known[static_cast<std::size_t>(sets.repletion[i])] = 1;
  }
  for (int t = 0; t < sets.total; ++t) {
    if (known[static_cast<std::size_t>(t)]) continue;
    int prev = t - 1;
    while (prev >= 0 && !known[static_cast<std::size_t>(prev)]) --prev;
    int next = t + 1;
    while (next < sets.total && !known[static_cast<std::size_t>(next)]) ++next;
    if (next >= sets.total) {
      root.col(t) = root.col(prev);
    } else {
      const double w = static_cast<double>(t - prev) / (next - prev);
      root.col(t) = (1.0 - w) * root.col(prev) + w * root.col(next);
    }
  }
  return root;
}

}  // namespace groovesynth
