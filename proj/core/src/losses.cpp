#include "groovesynth/losses.hpp"

#include <cmath>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

nn::Tensor distance(const nn::Tensor& a, const nn::Tensor& b, Distance kind, double beta) {
  return kind == Distance::Mse ? nn::mse(a, b) : nn::smooth_l1(a, b, beta);
}

void same_shape(const nn::Tensor& a, const nn::Tensor& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeMismatch,
          std::string(what) + ": ground truth and prediction differ in shape");
}

double flat_abs_cos(const Eigen::MatrixXd& seq, const SegmentPlan& plan, int i, int j) {
  const auto a = seq.middleCols(plan.start(i), plan.length);
  const auto b = seq.middleCols(plan.start(j), plan.length);
  const double denom = std::max(a.norm() * b.norm(), 1e-12);
  return std::abs(a.cwiseProduct(b).sum() / denom);
}

}  // namespace

nn::Tensor pose_motion_loss(const nn::Tensor& gt, const nn::Tensor& pred, Distance kind, const LossWeights& w) {
  same_shape(gt, pred, "pose motion loss");
  const nn::Tensor pose = distance(gt, pred, kind, w.smooth_l1_beta);
  const nn::Tensor vel = distance(nn::forward_diff_cols(gt), nn::forward_diff_cols(pred), kind, w.smooth_l1_beta);
  return nn::add(nn::scale(pose, w.pose), nn::scale(vel, w.velocity));
}

nn::Tensor pose_motion_loss_at(const nn::Tensor& gt, const nn::Tensor& pred, const std::vector<int>& frames,
                               Distance kind, const LossWeights& w) {
  same_shape(gt, pred, "pose motion loss");
  require(!frames.empty(), ErrorKind::ShapeMismatch, "pose motion loss over no frames");
  const nn::Tensor pose = distance(nn::gather_cols(gt, frames), nn::gather_cols(pred, frames), kind, w.smooth_l1_beta);
  const nn::Tensor vel = distance(nn::gather_cols(nn::forward_diff_cols(gt), frames),
                                  nn::gather_cols(nn::forward_diff_cols(pred), frames), kind, w.smooth_l1_beta);
  return nn::add(nn::scale(pose, w.pose), nn::scale(vel, w.velocity));
}

nn::Tensor leg_angles(const nn::Tensor& poses, const SkeletonTopology& topo) {
  require(poses.rows() == 3 * topo.bones(), ErrorKind::ShapeMismatch, "pose rows differ from the skeleton");
  std::vector<nn::Tensor> rows;
  for (const LegChain& leg : topo.legs()) {
    const int femur = topo.bone_of_joint(leg.knee);
    const int shin = topo.bone_of_joint(leg.ankle);
    const nn::Tensor dot =
        nn::sum_rows(nn::mul(nn::slice_rows(poses, 3 * femur, 3), nn::slice_rows(poses, 3 * shin, 3)));
    rows.push_back(nn::acos_clamped(dot, 1.0 - 1e-9));
  }
  return nn::concat_rows(rows);
}

nn::Tensor leg_motion_loss(const nn::Tensor& gt, const nn::Tensor& pred, const SkeletonTopology& topo,
                           const LossWeights& w) {
  same_shape(gt, pred, "leg motion loss");
  const nn::Tensor a_gt = leg_angles(gt, topo);
  const nn::Tensor a_pred = leg_angles(pred, topo);
  const nn::Tensor angle = nn::smooth_l1(a_gt, a_pred, w.smooth_l1_beta);
  const nn::Tensor vel = nn::smooth_l1(nn::forward_diff_cols(a_gt), nn::forward_diff_cols(a_pred), w.smooth_l1_beta);
  return nn::add(nn::scale(angle, w.leg_angle), nn::scale(vel, w.leg_velocity));
}

nn::Tensor generator_loss(const nn::Tensor& p_fake) {
  return nn::scale(nn::mean(nn::log_clamped(p_fake, 1e-7)), -1.0);
}

nn::Tensor discriminator_loss(const nn::Tensor& p_real, const nn::Tensor& p_fake) {
  const nn::Tensor real = nn::mean(nn::log_clamped(p_real, 1e-7));
  const nn::Tensor fake = nn::mean(nn::log_clamped(nn::add_scalar(nn::scale(p_fake, -1.0), 1.0), 1e-7));
  return nn::scale(nn::add(real, fake), -1.0);
}

nn::Tensor root_translation_loss(const nn::Tensor& gt, const nn::Tensor& pred, const LossWeights& w) {
  same_shape(gt, pred, "root translation loss");
  const nn::Tensor pos = nn::mse(gt, pred);
  const nn::Tensor vel = nn::smooth_l1(nn::forward_diff_cols(gt), nn::forward_diff_cols(pred), w.smooth_l1_beta);
  return nn::add(nn::scale(pos, w.pose), nn::scale(vel, w.velocity));
}

SegmentPlan SegmentPlan::make(int sequence_length, int length, int slide) {
  require(length >= 1 && slide >= 1, ErrorKind::ConfigError, "segment length and slide must be positive");
  require(length <= sequence_length, ErrorKind::TooFewSegments,
          "segment length " + std::to_string(length) + " exceeds sequence length " + std::to_string(sequence_length));
  SegmentPlan plan;
  plan.length = length;
  plan.slide = slide;
  plan.count = (sequence_length - length + slide - 1) / slide;
  return plan;
}

bool SegmentPlan::overlaps(int i, int j) const { return std::abs(i - j) * slide < length; }

std::vector<int> SegmentPlan::eligible() const {
  std::vector<int> out;
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < count; ++j)
      if (!overlaps(i, j)) {
        out.push_back(i);
        break;
      }
  return out;
}

int select_partner(const Eigen::MatrixXd& sequence, const SegmentPlan& plan, int n) {
  require(plan.start(plan.count - 1) + plan.length <= sequence.cols(), ErrorKind::IndexOutOfRange,
          "segment plan runs past the sequence");
  int best = -1;
  double best_value = 0.0;
  for (int x = 0; x < plan.count; ++x) {
    if (plan.overlaps(n, x)) continue;
    const double value = flat_abs_cos(sequence, plan, n, x);
    if (best < 0 || value < best_value) {
      best = x;
      best_value = value;
    }
  }
  require(best >= 0, ErrorKind::TooFewSegments, "segment " + std::to_string(n) + " has no non-overlapping peer");
  return best;
}

std::pair<int, int> select_contrast_segment(const Eigen::MatrixXd& sequence, const SegmentPlan& plan,
                                            std::mt19937_64& rng, bool fixed_reference) {
  const std::vector<int> eligible = plan.eligible();
  require(!eligible.empty(), ErrorKind::TooFewSegments,
          std::to_string(plan.count) + " segments of length " + std::to_string(plan.length) + " with slide " +
              std::to_string(plan.slide) + " never stop overlapping");
  int n = 0;
  if (fixed_reference) {
    require(eligible.front() == 0, ErrorKind::TooFewSegments, "reference segment 0 has no partner");
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    n = eligible[pick(rng)];
  }
  return {n, select_partner(sequence, plan, n)};
}

nn::Tensor rtc_loss(const nn::Tensor& latents, int n, int partner, const SegmentPlan& plan) {
  for (int s : {n, partner})
    require(s >= 0 && s < plan.count && plan.start(s) + plan.length <= latents.cols(), ErrorKind::IndexOutOfRange,
            "segment " + std::to_string(s) + " outside the latent sequence");
  return nn::abs(nn::cosine_similarity(nn::slice_cols(latents, plan.start(n), plan.length),
                                       nn::slice_cols(latents, plan.start(partner), plan.length)));
}

LossTotals total_losses(const LossTerms& terms, const LossWeights& w) {
  auto value = [](const nn::Tensor& t) { return t.defined() ? t.item() : 0.0; };
  const std::pair<const char*, const nn::Tensor*> named[] = {{"pose motion", &terms.pose_motion},
                                                            {"leg motion", &terms.leg_motion},
                                                            {"generator", &terms.generator},
                                                            {"contrastive", &terms.contrastive}};
  for (const auto& [name, t] : named)
    require(std::isfinite(value(*t)), ErrorKind::NonFiniteLoss, std::string(name) + " loss is not finite");

  auto weighted = [](std::vector<nn::Tensor>& acc, const nn::Tensor& t, double weight) {
    if (t.defined()) acc.push_back(nn::scale(t, weight));
  };
  auto fold = [](const std::vector<nn::Tensor>& parts) {
    nn::Tensor total = nn::Tensor::constant(Eigen::MatrixXd::Zero(1, 1));
    for (const auto& p : parts) total = nn::add(total, p);
    return total;
  };
  std::vector<nn::Tensor> bps, rps;
  weighted(bps, terms.pose_motion, w.pose_motion);
  weighted(bps, terms.leg_motion, w.leg_motion);
  rps = bps;
  weighted(rps, terms.generator, w.generator);
  weighted(rps, terms.contrastive, w.contrastive);
  LossTotals totals{fold(bps), fold(rps)};
  require(std::isfinite(totals.bps.item()) && std::isfinite(totals.rps_generator.item()), ErrorKind::NonFiniteLoss,
          "weighted loss total is not finite");
  return totals;
}

}  // namespace groovesynth
