#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/losses.hpp"
#include "groovesynth/skeleton.hpp"

namespace groovesynth {

// Per-joint, per-axis mean squared velocity (m^2/s^2); width 3J.
Eigen::VectorXd kinetic_features(const PoseSequence& pose, const SkeletonTopology& topo);

inline constexpr int kGeometricFeatureCount = 16;
const std::vector<std::string>& geometric_feature_names();
// Time averages of 16 relational predicates; needs SMPL joint names.
Eigen::VectorXd geometric_features(const PoseSequence& pose, const SkeletonTopology& topo);
// Per-frame predicate values, 16 x T.
Eigen::MatrixXd geometric_predicates(const JointPositions& positions, const SkeletonTopology& topo);

// Frechet distance between Gaussian fits; one feature vector per column.
// Throws DegenerateCorpus with fewer than two columns on either side.
double fid(const Eigen::MatrixXd& ref, const Eigen::MatrixXd& gen);
// Mean pairwise Euclidean distance between columns.
double motion_diversity(const Eigen::MatrixXd& features);

// Strict local minima of a velocity curve (interior frames only).
std::vector<int> kinematic_beats(const Eigen::VectorXd& velocity);

struct BeatAlignment {
  double score = 0.0;
  bool fallback = false;  // no local minimum; the global minimum stood in
};

double beat_alignment_score(const std::vector<int>& music_beats, const std::vector<int>& motion_beats, double sigma);
BeatAlignment beat_alignment_score(const PoseSequence& pose, const SkeletonTopology& topo,
                                   const std::vector<int>& music_beats, double sigma = 3.0);

double pfc(const PoseSequence& pose, const SkeletonTopology& topo);

struct LatentDispersion {
  nlohmann::json segments;           // [{"clip", "segment", "start", "vector"}]
  std::optional<double> dispersion;  // mean intra-clip pairwise |cossim|
  int clips = 0;
};
LatentDispersion latent_dispersion_export(const std::vector<std::string>& clip_ids,
                                          const std::vector<Eigen::MatrixXd>& latents, const SegmentPlan& plan);

struct MetricsReport {
  double fid_k = 0.0;
  double fid_g = 0.0;
  double md_k = 0.0;
  double md_g = 0.0;
  double bas = 0.0;
  double pfc = 0.0;
  int reference_clips = 0;
  int generated_clips = 0;
  int bas_fallbacks = 0;
};

nlohmann::json to_json(const MetricsReport& report);

struct EvaluationClip {
  PoseSequence pose;
  std::vector<int> music_beats;
};

MetricsReport evaluate_corpus(const std::vector<PoseSequence>& reference, const std::vector<EvaluationClip>& generated,
                              const SkeletonTopology& topo, double sigma = 3.0);

}  // namespace groovesynth
