#pragma once

#include <random>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/autograd.hpp"
#include "groovesynth/skeleton.hpp"

namespace groovesynth {

struct LossWeights {
  double pose = 1.0;
  double velocity = 1.0;
  double leg_angle = 0.3;
  double leg_velocity = 0.7;
  double pose_motion = 5.0;
  double leg_motion = 3e-3;
  double generator = 5e-2;
  double contrastive = 0.1;
  double smooth_l1_beta = 1.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LossWeights, pose, velocity, leg_angle, leg_velocity, pose_motion, leg_motion,
                                   generator, contrastive, smooth_l1_beta)

enum class Distance { Mse, SmoothL1 };

// pose * d(gt, pred) + velocity * d(diff gt, diff pred), differences along columns.
nn::Tensor pose_motion_loss(const nn::Tensor& gt, const nn::Tensor& pred, Distance kind, const LossWeights& w = {});
// Same terms restricted to the given columns; velocities still come from the
// full sequences.
nn::Tensor pose_motion_loss_at(const nn::Tensor& gt, const nn::Tensor& pred, const std::vector<int>& frames,
                               Distance kind, const LossWeights& w = {});

// 2 x L femur-shin angles of a 3(J-1) x L pose tensor.
nn::Tensor leg_angles(const nn::Tensor& poses, const SkeletonTopology& topo);
nn::Tensor leg_motion_loss(const nn::Tensor& gt, const nn::Tensor& pred, const SkeletonTopology& topo,
                           const LossWeights& w = {});

// Probabilities are clamped at 1e-7 inside the logs.
nn::Tensor generator_loss(const nn::Tensor& p_fake);
nn::Tensor discriminator_loss(const nn::Tensor& p_real, const nn::Tensor& p_fake);

struct AdversarialLosses {
  nn::Tensor generator;
  nn::Tensor discriminator;
};
template <typename Disc>
AdversarialLosses adversarial_losses(const Disc& disc, const nn::Tensor& real, const nn::Tensor& fake) {
  const nn::Tensor p_real = disc.forward(real);
  const nn::Tensor p_fake = disc.forward(fake);
  return {generator_loss(p_fake), discriminator_loss(p_real, p_fake)};
}

nn::Tensor root_translation_loss(const nn::Tensor& gt, const nn::Tensor& pred, const LossWeights& w = {});

struct SegmentPlan {
  int length = 25;  // frames per segment
  int slide = 5;    // frames between segment starts
  int count = 0;    // ceil((sequence - length) / slide)

  static SegmentPlan make(int sequence_length, int length, int slide);
  int start(int i) const { return i * slide; }
  bool overlaps(int i, int j) const;
  // Segments that have at least one non-overlapping peer.
  std::vector<int> eligible() const;
};

// Picks n uniformly among eligible segments (or segment 0 with
// fixed_reference) and its least similar non-overlapping partner by absolute
// cosine similarity of the flattened columns of `sequence`. Ties go to the
// smaller index. Throws TooFewSegments.
std::pair<int, int> select_contrast_segment(const Eigen::MatrixXd& sequence, const SegmentPlan& plan,
                                            std::mt19937_64& rng, bool fixed_reference = false);
int select_partner(const Eigen::MatrixXd& sequence, const SegmentPlan& plan, int n);

// |cossim| between latent segments n and partner; IndexOutOfRange when a
// segment runs past the latent sequence.
nn::Tensor rtc_loss(const nn::Tensor& latents, int n, int partner, const SegmentPlan& plan);

// Undefined terms count as zero.
struct LossTerms {
  nn::Tensor pose_motion;
  nn::Tensor leg_motion;
  nn::Tensor generator;
  nn::Tensor contrastive;
};

struct LossTotals {
  nn::Tensor bps;
  nn::Tensor rps_generator;
};

// NonFiniteLoss when any term or total is not finite.
LossTotals total_losses(const LossTerms& terms, const LossWeights& w = {});

}  // namespace groovesynth
