#include "groovesynth/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <string>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

constexpr double kMinBoneLength = 1e-8;

bool valid_joint(int j, int n) { return j >= 0 && j < n; }

}  // namespace

SkeletonTopology::SkeletonTopology(std::vector<std::string> joint_names, std::vector<int> parents,
                                   std::vector<double> bone_lengths, std::array<LegChain, 2> legs,
                                   std::array<int, 2> feet, std::vector<Eigen::Vector3d> rest_directions)
    : names_(std::move(joint_names)),
      parents_(std::move(parents)),
      lengths_(std::move(bone_lengths)),
      legs_(legs),
      feet_(feet),
      rest_(std::move(rest_directions)) {
  const int n = static_cast<int>(names_.size());
  require(n >= 2, ErrorKind::InvalidTopology, "skeleton needs at least two joints");
  require(static_cast<int>(parents_.size()) == n, ErrorKind::InvalidTopology,
          "parents has " + std::to_string(parents_.size()) + " entries for " + std::to_string(n) + " joints");
  require(static_cast<int>(lengths_.size()) == n - 1, ErrorKind::InvalidTopology,
          "expected " + std::to_string(n - 1) + " bone lengths, got " + std::to_string(lengths_.size()));

  for (int j = 0; j < n; ++j) {
    if (parents_[j] == -1) {
      require(root_ == -1, ErrorKind::InvalidTopology, "more than one root joint");
      root_ = j;
    } else {
      require(valid_joint(parents_[j], n) && parents_[j] != j, ErrorKind::InvalidTopology,
              "joint " + std::to_string(j) + " has invalid parent " + std::to_string(parents_[j]));
    }
  }
  require(root_ != -1, ErrorKind::InvalidTopology, "no root joint (parent -1)");

  joint_bone_.assign(n, -1);
  for (int j = 0; j < n; ++j) {
    if (j == root_) continue;
    joint_bone_[j] = static_cast<int>(bone_child_.size());
    bone_child_.push_back(j);
  }

  std::vector<std::vector<int>> children(n);
  for (int j = 0; j < n; ++j)
    if (j != root_) children[parents_[j]].push_back(j);
  std::queue<int> frontier;
  frontier.push(root_);
  while (!frontier.empty()) {
    const int j = frontier.front();
    frontier.pop();
    order_.push_back(j);
    for (int c : children[j]) frontier.push(c);
  }
  require(static_cast<int>(order_.size()) == n, ErrorKind::InvalidTopology,
          "parent array contains a cycle or disconnected joints");

  for (int b = 0; b < n - 1; ++b)
    require(lengths_[b] > 0.0 && std::isfinite(lengths_[b]), ErrorKind::InvalidTopology,
            "bone " + std::to_string(b) + " has non-positive length");

  for (const auto& leg : legs_) {
    require(valid_joint(leg.hip, n) && valid_joint(leg.knee, n) && valid_joint(leg.ankle, n),
            ErrorKind::InvalidTopology, "leg chain references an invalid joint");
    require(parents_[leg.knee] == leg.hip && parents_[leg.ankle] == leg.knee, ErrorKind::InvalidTopology,
            "leg chain must be a parent-child path hip -> knee -> ankle");
  }
  for (int f : feet_) require(valid_joint(f, n), ErrorKind::InvalidTopology, "foot joint out of range");

  if (!rest_.empty()) {
    require(static_cast<int>(rest_.size()) == n - 1, ErrorKind::InvalidTopology,
            "rest_directions must have one entry per bone");
    for (auto& d : rest_) {
      const double norm = d.norm();
      require(norm > kMinBoneLength, ErrorKind::InvalidTopology, "zero rest direction");
      d /= norm;
    }
  }
}

SkeletonTopology SkeletonTopology::smpl24() {
  std::vector<std::string> names = {
      "pelvis",     "left_hip",       "right_hip",     "spine1",     "left_knee",  "right_knee",
      "spine2",     "left_ankle",     "right_ankle",   "spine3",     "left_foot",  "right_foot",
      "neck",       "left_collar",    "right_collar",  "head",       "left_shoulder", "right_shoulder",
      "left_elbow", "right_elbow",    "left_wrist",    "right_wrist", "left_hand", "right_hand"};
  std::vector<int> parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  // Rest offsets of each joint from its parent, meters, T-pose.
  const std::vector<Eigen::Vector3d> offsets = {
      {0.0, 0.0, 0.0},       {0.06, -0.09, 0.0},   {-0.06, -0.09, 0.0},  {0.0, 0.11, -0.02},
      {0.04, -0.38, 0.0},    {-0.04, -0.38, 0.0},  {0.0, 0.13, 0.0},     {0.0, -0.40, -0.03},
      {0.0, -0.40, -0.03},   {0.0, 0.05, 0.02},    {0.02, -0.06, 0.12},  {-0.02, -0.06, 0.12},
      {0.0, 0.21, -0.03},    {0.07, 0.11, -0.03},  {-0.07, 0.11, -0.03}, {0.0, 0.09, 0.05},
      {0.12, 0.04, 0.0},     {-0.12, 0.04, 0.0},   {0.26, 0.0, 0.0},     {-0.26, 0.0, 0.0},
      {0.25, 0.0, 0.0},      {-0.25, 0.0, 0.0},    {0.08, 0.0, 0.0},     {-0.08, 0.0, 0.0}};
  std::vector<double> lengths;
  std::vector<Eigen::Vector3d> rest;
  for (std::size_t j = 1; j < offsets.size(); ++j) {
    lengths.push_back(offsets[j].norm());
    rest.push_back(offsets[j].normalized());
  }
  return SkeletonTopology(std::move(names), std::move(parents), std::move(lengths),
                          {LegChain{1, 4, 7}, LegChain{2, 5, 8}}, {10, 11}, std::move(rest));
}

int SkeletonTopology::find_joint(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

Eigen::MatrixXd SkeletonTopology::bone_adjacency() const {
  const int nb = bones();
  Eigen::MatrixXd adj = Eigen::MatrixXd::Identity(nb, nb);
  for (int a = 0; a < nb; ++a) {
    for (int b = a + 1; b < nb; ++b) {
      const int pa = bone_parent(a), ca = bone_child(a);
      const int pb = bone_parent(b), cb = bone_child(b);
      if (pa == pb || pa == cb || ca == pb || ca == cb) adj(a, b) = adj(b, a) = 1.0;
    }
  }
  for (int a = 0; a < nb; ++a) adj.row(a) /= adj.row(a).sum();
  return adj;
}

SkeletonTopology SkeletonTopology::with_bone_lengths(std::vector<double> lengths) const {
  return SkeletonTopology(names_, parents_, std::move(lengths), legs_, feet_, rest_);
}

void validate_pose(const PoseSequence& pose, const SkeletonTopology& topo, double norm_tolerance) {
  require(pose.frames() >= 1, ErrorKind::ShapeMismatch, "pose sequence has no frames");
  require(pose.line_vectors.rows() == 3 * topo.bones(), ErrorKind::ShapeMismatch,
          "pose has " + std::to_string(pose.line_vectors.rows()) + " rows, skeleton expects " +
              std::to_string(3 * topo.bones()));
  require(pose.fps > 0.0, ErrorKind::FormatError, "fps must be positive");
  if (pose.root)
    require(pose.root->cols() == pose.frames(), ErrorKind::ShapeMismatch, "root length differs from pose length");
  for (int t = 0; t < pose.frames(); ++t) {
    for (int b = 0; b < pose.bones(); ++b) {
      const double n = pose.bone(t, b).norm();
      require(std::abs(n - 1.0) <= norm_tolerance, ErrorKind::FormatError,
              "line vector of bone " + std::to_string(b) + " at frame " + std::to_string(t) +
                  " has norm " + std::to_string(n));
    }
  }
}

PoseSequence positions_to_linevecs(const JointPositions& positions, const SkeletonTopology& topo, double fps) {
  require(positions.rows() == 3 * topo.joints(), ErrorKind::ShapeMismatch,
          "positions must have 3*J rows");
  require(positions.cols() >= 1, ErrorKind::ShapeMismatch, "positions have no frames");
  const int frames = static_cast<int>(positions.cols());
  PoseSequence pose;
  pose.fps = fps;
  pose.line_vectors.resize(3 * topo.bones(), frames);
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < topo.bones(); ++b) {
      const int c = topo.bone_child(b), p = topo.bone_parent(b);
      const Eigen::Vector3d offset = positions.block<3, 1>(3 * c, t) - positions.block<3, 1>(3 * p, t);
      const double length = offset.norm();
      if (!(length > kMinBoneLength))
        fail(ErrorKind::DegenerateBone, "bone " + std::to_string(b) + " (" + topo.joint_names()[p] + " -> " +
                                            topo.joint_names()[c] + ") collapses at frame " + std::to_string(t));
      pose.line_vectors.block<3, 1>(3 * b, t) = offset / length;
    }
  }
  pose.root = positions.middleRows(3 * topo.root(), 3);
  return pose;
}

JointPositions linevecs_to_positions(const PoseSequence& pose, const SkeletonTopology& topo) {
  require(pose.root.has_value(), ErrorKind::MissingRoot, "pose has no root trajectory");
  require(pose.line_vectors.rows() == 3 * topo.bones(), ErrorKind::ShapeMismatch,
          "pose is not bound to this skeleton");
  const int frames = pose.frames();
  JointPositions out(3 * topo.joints(), frames);
  for (int t = 0; t < frames; ++t) {
    for (int j : topo.traversal()) {
      if (j == topo.root()) {
        out.block<3, 1>(3 * j, t) = pose.root->col(t);
        continue;
      }
      const int b = topo.bone_of_joint(j);
      out.block<3, 1>(3 * j, t) =
          out.block<3, 1>(3 * topo.parents()[j], t) + topo.bone_lengths()[b] * pose.bone(t, b);
    }
  }
  return out;
}

std::vector<double> measure_bone_lengths(const JointPositions& positions, const SkeletonTopology& topo) {
  std::vector<double> lengths(topo.bones());
  for (int b = 0; b < topo.bones(); ++b)
    lengths[b] = (positions.block<3, 1>(3 * topo.bone_child(b), 0) -
                  positions.block<3, 1>(3 * topo.bone_parent(b), 0))
                     .norm();
  return lengths;
}

Eigen::MatrixXd forward_difference(const Eigen::MatrixXd& sequence) {
  const Eigen::Index n = sequence.cols();
  Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(sequence.rows(), n);
  if (n < 2) return diff;
  diff.leftCols(n - 1) = sequence.rightCols(n - 1) - sequence.leftCols(n - 1);
  diff.col(n - 1) = diff.col(n - 2);
  return diff;
}

LegKinematics femur_shin_angles(const PoseSequence& pose, const SkeletonTopology& topo) {
  const int frames = pose.frames();
  LegKinematics out;
  out.angle.resize(2, frames);
  for (int leg = 0; leg < 2; ++leg) {
    const int femur = topo.bone_of_joint(topo.legs()[leg].knee);
    const int shin = topo.bone_of_joint(topo.legs()[leg].ankle);
    for (int t = 0; t < frames; ++t) {
      const double c = std::clamp(pose.bone(t, femur).dot(pose.bone(t, shin)), -1.0, 1.0);
      out.angle(leg, t) = std::acos(c);
    }
  }
  out.angular_velocity = forward_difference(out.angle);
  return out;
}

Eigen::VectorXd kinetic_velocity(const PoseSequence& pose, const SkeletonTopology& topo) {
  const JointPositions positions = linevecs_to_positions(pose, topo);
  const Eigen::MatrixXd vel = forward_difference(positions);
  const int joints = topo.joints();
  Eigen::VectorXd out(pose.frames());
  for (int t = 0; t < pose.frames(); ++t) out(t) = vel.col(t).squaredNorm() / joints * pose.fps * pose.fps;
  return out;
}

FrameIndexSets FrameIndexSets::build(int total, int seed_length, std::vector<int> beats, int cap) {
  require(total >= 1, ErrorKind::ShapeMismatch, "window must have at least one frame");
  require(seed_length >= 0 && seed_length <= total, ErrorKind::ShapeMismatch, "seed length outside window");
  require(cap >= 0, ErrorKind::ShapeMismatch, "beat cap must be non-negative");
  for (std::size_t i = 0; i < beats.size(); ++i) {
    require(beats[i] >= 0 && beats[i] < total, ErrorKind::IndexOutOfRange,
            "beat frame " + std::to_string(beats[i]) + " outside [0, " + std::to_string(total) + ")");
    require(i == 0 || beats[i] > beats[i - 1], ErrorKind::ShapeMismatch, "beat frames must be strictly increasing");
  }
  if (static_cast<int>(beats.size()) > cap) beats.resize(cap);

  FrameIndexSets sets;
  sets.total = total;
  sets.seed_length = seed_length;
  sets.beats = std::move(beats);
  std::vector<char> is_beat(total, 0);
  for (int b : sets.beats) {
    is_beat[b] = 1;
    (b < seed_length ? sets.seed_beats : sets.nonseed_beats).push_back(b);
  }
  for (int t = seed_length; t < total; ++t)
    if (!is_beat[t]) sets.repletion.push_back(t);
  return sets;
}

FrameIndexSets FrameIndexSets::seed_only() const {
  return build(total, seed_length, seed_beats, static_cast<int>(seed_beats.size()));
}

void FrameIndexSets::validate(int cap) const {
  require(static_cast<int>(beats.size()) <= cap, ErrorKind::ShapeMismatch, "more beats than the cap");
  std::vector<int> cover(total, 0);
  for (int t = 0; t < seed_length; ++t) ++cover[t];
  for (int b : nonseed_beats) {
    require(b >= seed_length && b < total, ErrorKind::CoverageError, "non-seed beat inside the seed window");
    ++cover[b];
  }
  for (int r : repletion) {
    require(r >= seed_length && r < total, ErrorKind::CoverageError, "repletion frame inside the seed window");
    ++cover[r];
  }
  for (int t = 0; t < total; ++t)
    require(cover[t] == 1, ErrorKind::CoverageError, "frame " + std::to_string(t) + " covered " +
                                                         std::to_string(cover[t]) + " times");
  require(seed_beats.size() + nonseed_beats.size() == beats.size(), ErrorKind::CoverageError,
          "seed and non-seed beats do not add up to B");
}

}  // namespace groovesynth
