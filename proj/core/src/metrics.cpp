#include "groovesynth/metrics.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

Eigen::Vector3d joint_at(const JointPositions& p, int joint, int t) { return p.block<3, 1>(3 * joint, t); }

int need_joint(const SkeletonTopology& topo, const char* name) {
  const int j = topo.find_joint(name);
  require(j >= 0, ErrorKind::ConfigError, std::string("geometric features need a joint named ") + name);
  return j;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu) {
  const Eigen::MatrixXd centered = x.colwise() - mu;
  return centered * centered.transpose() / static_cast<double>(x.cols() - 1);
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Eigen::VectorXd kinetic_features(const PoseSequence& pose, const SkeletonTopology& topo) {
  const JointPositions pos = linevecs_to_positions(pose, topo);
  const Eigen::MatrixXd vel = forward_difference(pos) * pose.fps;
  return vel.array().square().rowwise().mean();
}

const std::vector<std::string>& geometric_feature_names() {
  static const std::vector<std::string> names = {
      "left_hand_above_head",     "right_hand_above_head",     "left_hand_above_shoulder",
      "right_hand_above_shoulder", "left_elbow_bent_past_90",   "right_elbow_bent_past_90",
      "left_knee_bent_past_90",   "right_knee_bent_past_90",   "left_hand_crosses_midline",
      "right_hand_crosses_midline", "left_foot_raised",        "right_foot_raised",
      "left_hand_forward",        "right_hand_forward",        "feet_crossed",
      "hands_within_shoulder_width"};
  return names;
}

Eigen::MatrixXd geometric_predicates(const JointPositions& p, const SkeletonTopology& topo) {
  const int head = need_joint(topo, "head");
  const int pelvis = topo.root();
  const int chest = need_joint(topo, "spine3");
  const int hip[2] = {need_joint(topo, "left_hip"), need_joint(topo, "right_hip")};
  const int shoulder[2] = {need_joint(topo, "left_shoulder"), need_joint(topo, "right_shoulder")};
  const int elbow[2] = {need_joint(topo, "left_elbow"), need_joint(topo, "right_elbow")};
  const int wrist[2] = {need_joint(topo, "left_wrist"), need_joint(topo, "right_wrist")};
  const int hand[2] = {need_joint(topo, "left_hand"), need_joint(topo, "right_hand")};
  const int foot[2] = {topo.feet()[0], topo.feet()[1]};
  const auto& legs = topo.legs();
  const Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  constexpr double kFootLift = 0.1;
  constexpr double kHandReach = 0.2;

  const auto frames = p.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kGeometricFeatureCount, frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const int ti = static_cast<int>(t);
    auto J = [&](int j) { return joint_at(p, j, ti); };
    Eigen::Vector3d left = J(hip[0]) - J(hip[1]);
    left -= left.dot(up) * up;
    if (left.norm() < 1e-9) left = Eigen::Vector3d::UnitX();
    left.normalize();
    const Eigen::Vector3d forward = left.cross(up).normalized();
    for (int s = 0; s < 2; ++s) {
      const Eigen::Vector3d h = J(hand[s]);
      out(0 + s, t) = h.y() > J(head).y();
      out(2 + s, t) = h.y() > J(shoulder[s]).y();
      const Eigen::Vector3d upper = J(elbow[s]) - J(shoulder[s]);
      const Eigen::Vector3d fore = J(wrist[s]) - J(elbow[s]);
      out(4 + s, t) = upper.dot(fore) < 0.0;
      const Eigen::Vector3d femur = J(legs[s].knee) - J(legs[s].hip);
      const Eigen::Vector3d shin = J(legs[s].ankle) - J(legs[s].knee);
      out(6 + s, t) = femur.dot(shin) < 0.0;
      const double side = (h - J(pelvis)).dot(left);
      out(8 + s, t) = s == 0 ? side < 0.0 : side > 0.0;
      out(10 + s, t) = J(foot[s]).y() - J(foot[1 - s]).y() > kFootLift;
      out(12 + s, t) = (h - J(chest)).dot(forward) > kHandReach;
    }
    out(14, t) = (J(foot[0]) - J(foot[1])).dot(left) < 0.0;
    Eigen::Vector3d hands = J(hand[0]) - J(hand[1]);
    Eigen::Vector3d shoulders = J(shoulder[0]) - J(shoulder[1]);
    hands -= hands.dot(up) * up;
    shoulders -= shoulders.dot(up) * up;
    out(15, t) = hands.norm() < shoulders.norm();
  }
  return out;
}

Eigen::VectorXd geometric_features(const PoseSequence& pose, const SkeletonTopology& topo) {
  return geometric_predicates(linevecs_to_positions(pose, topo), topo).rowwise().mean();
}

double fid(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& gen) {
  require(ref.cols() >= 2 && gen.cols() >= 2, ErrorKind::DegenerateCorpus,
          "FID needs at least two samples per side, got " + std::to_string(ref.cols()) + " and " +
              std::to_string(gen.cols()));
  require(ref.rows() == gen.rows(), ErrorKind::ShapeMismatch, "FID feature widths differ");
  const Eigen::VectorXd mu1 = ref.rowwise().mean();
  const Eigen::VectorXd mu2 = gen.rowwise().mean();
  const Eigen::MatrixXd reg = 1e-6 * Eigen::MatrixXd::Identity(ref.rows(), ref.rows());
  const Eigen::MatrixXd s1 = covariance(ref, mu1) + reg;
  const Eigen::MatrixXd s2 = covariance(gen, mu2) + reg;
  const Eigen::MatrixXd root1 = sqrt_psd(s1);
  const Eigen::MatrixXd inner = root1 * s2 * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

double motion_diversity(const Eigen::MatrixXd& features) {
  const auto n = features.cols();
  require(n >= 2, ErrorKind::DegenerateCorpus, "motion diversity needs at least two samples");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) total += (features.col(i) - features.col(j)).norm();
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<int> kinematic_beats(const Eigen::VectorXd& velocity) {
  std::vector<int> out;
  for (Eigen::Index t = 1; t + 1 < velocity.size(); ++t)
    if (velocity[t] < velocity[t - 1] && velocity[t] < velocity[t + 1]) out.push_back(static_cast<int>(t));
  return out;
}

double beat_alignment_score(const std::vector<int>& music_beats, const std::vector<int>& motion_beats, double sigma) {
  require(!music_beats.empty(), ErrorKind::EmptyBeats, "beat alignment needs at least one music beat");
  require(!motion_beats.empty(), ErrorKind::EmptyBeats, "beat alignment needs at least one motion beat");
  require(sigma > 0.0, ErrorKind::ConfigError, "sigma must be positive");
  double total = 0.0;
  for (int b : music_beats) {
    double nearest = std::numeric_limits<double>::infinity();
    for (int k : motion_beats) nearest = std::min(nearest, std::abs(static_cast<double>(b - k)));
    total += std::exp(-nearest * nearest / (2.0 * sigma * sigma));
  }
  return total / static_cast<double>(music_beats.size());
}

BeatAlignment beat_alignment_score(const PoseSequence& pose, const SkeletonTopology& topo,
                                   const std::vector<int>& music_beats, double sigma) {
  require(pose.frames() >= 3, ErrorKind::TooShortClip, "beat alignment needs at least three frames");
  const Eigen::VectorXd velocity = kinetic_velocity(pose, topo);
  std::vector<int> motion = kinematic_beats(velocity);
  BeatAlignment out;
  if (motion.empty()) {
    Eigen::Index at = 0;
    velocity.minCoeff(&at);
    motion.push_back(static_cast<int>(at));
    out.fallback = true;
  }
  out.score = beat_alignment_score(music_beats, motion, sigma);
  return out;
}

double pfc(const PoseSequence& pose, const SkeletonTopology& topo) {
  const JointPositions pos = linevecs_to_positions(pose, topo);
  const int joints = topo.joints();
  const auto frames = pos.cols();
  Eigen::Matrix3Xd com = Eigen::Matrix3Xd::Zero(3, frames);
  for (int j = 0; j < joints; ++j) com += pos.middleRows(3 * j, 3);
  com /= joints;
  const Eigen::MatrixXd com_vel = forward_difference(com) * pose.fps;
  Eigen::MatrixXd com_acc = forward_difference(com_vel) * pose.fps;
  com_acc.row(1) = com_acc.row(1).cwiseMax(0.0);
  const Eigen::MatrixXd vel = forward_difference(pos) * pose.fps;
  const int lf = topo.feet()[0], rf = topo.feet()[1];

  double total = 0.0, peak = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const double acc = com_acc.col(t).norm();
    peak = std::max(peak, acc);
    total += acc * vel.block<3, 1>(3 * lf, t).norm() * vel.block<3, 1>(3 * rf, t).norm();
  }
  // Below this the COM acceleration is rounding noise, which the
  // normalization would otherwise amplify.
  if (peak < 1e-6) return 0.0;
  return total / static_cast<double>(frames) / peak;
}

LatentDispersion latent_dispersion_export(const std::vector<std::string>& clip_ids,
                                          const std::vector<Eigen::MatrixXd>& latents, const SegmentPlan& plan) {
  require(clip_ids.size() == latents.size(), ErrorKind::ShapeMismatch, "one clip id per latent sequence required");
  LatentDispersion out;
  out.segments = nlohmann::json::array();
  out.clips = static_cast<int>(clip_ids.size());
  double sum = 0.0;
  int contributing = 0;
  for (std::size_t c = 0; c < latents.size(); ++c) {
    const Eigen::MatrixXd& z = latents[c];
    const int count = z.cols() >= plan.length ? (static_cast<int>(z.cols()) - plan.length) / plan.slide + 1 : 0;
    const int usable = std::min(count, std::max(plan.count, 1));
    std::vector<Eigen::VectorXd> flat;
    for (int i = 0; i < usable; ++i) {
      const Eigen::MatrixXd block = z.middleCols(plan.start(i), plan.length);
      flat.emplace_back(Eigen::Map<const Eigen::VectorXd>(block.data(), block.size()));
      out.segments.push_back({{"clip", clip_ids[c]},
                              {"segment", i},
                              {"start", plan.start(i)},
                              {"vector", std::vector<double>(flat.back().data(), flat.back().data() + flat.back().size())}});
    }
    if (flat.size() < 2) continue;
    double clip_sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < flat.size(); ++i)
      for (std::size_t j = i + 1; j < flat.size(); ++j) {
        const double denom = std::max(flat[i].norm() * flat[j].norm(), 1e-12);
        clip_sum += std::abs(flat[i].dot(flat[j]) / denom);
        ++pairs;
      }
    sum += clip_sum / pairs;
    ++contributing;
  }
  if (contributing > 0) out.dispersion = sum / contributing;
  return out;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"note", "kinetic/geometric features are fixed stand-ins; compare values only within this tool"},
          {"fid_k", r.fid_k},
          {"fid_g", r.fid_g},
          {"md_k", r.md_k},
          {"md_g", r.md_g},
          {"bas", r.bas},
          {"pfc", r.pfc},
          {"reference_clips", r.reference_clips},
          {"generated_clips", r.generated_clips},
          {"bas_fallbacks", r.bas_fallbacks}};
}

MetricsReport evaluate_corpus(const std::vector<PoseSequence>& reference, const std::vector<EvaluationClip>& generated,
                              const SkeletonTopology& topo, double sigma) {
  require(reference.size() >= 2 && generated.size() >= 2, ErrorKind::DegenerateCorpus,
          "evaluation needs at least two reference and two generated clips");
  auto features = [&](auto&& get, auto&& fn, std::size_t n, int width) {
    Eigen::MatrixXd out(width, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) out.col(static_cast<Eigen::Index>(i)) = fn(get(i), topo);
    return out;
  };
  auto ref_at = [&](std::size_t i) -> const PoseSequence& { return reference[i]; };
  auto gen_at = [&](std::size_t i) -> const PoseSequence& { return generated[i].pose; };
  const int kw = 3 * topo.joints();
  const Eigen::MatrixXd ref_k = features(ref_at, kinetic_features, reference.size(), kw);
  const Eigen::MatrixXd gen_k = features(gen_at, kinetic_features, generated.size(), kw);
  const Eigen::MatrixXd ref_g = features(ref_at, geometric_features, reference.size(), kGeometricFeatureCount);
  const Eigen::MatrixXd gen_g = features(gen_at, geometric_features, generated.size(), kGeometricFeatureCount);

  MetricsReport r;
  r.reference_clips = static_cast<int>(reference.size());
  r.generated_clips = static_cast<int>(generated.size());
  r.fid_k = fid(ref_k, gen_k);
  r.fid_g = fid(ref_g, gen_g);
  r.md_k = motion_diversity(gen_k);
  r.md_g = motion_diversity(gen_g);
  double bas = 0.0, foot = 0.0;
  for (const auto& clip : generated) {
    const BeatAlignment b = beat_alignment_score(clip.pose, topo, clip.music_beats, sigma);
    bas += b.score;
    r.bas_fallbacks += b.fallback ? 1 : 0;
    foot += pfc(clip.pose, topo);
  }
  r.bas = bas / static_cast<double>(generated.size());
  r.pfc = foot / static_cast<double>(generated.size());
  return r;
}

}  // namespace groovesynth
