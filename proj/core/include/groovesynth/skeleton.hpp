#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace groovesynth {

// Joint positions for a clip: rows are [x0 y0 z0 x1 y1 z1 ...] over joints,
// one column per frame.
using JointPositions = Eigen::MatrixXd;

struct LegChain {
  int hip = -1;
  int knee = -1;
  int ankle = -1;
};

// Rooted joint tree. Bones are indexed by their child joint, in joint order
// with the root skipped, so bone b always has a well defined parent and child.
class SkeletonTopology {
 public:
  SkeletonTopology(std::vector<std::string> joint_names, std::vector<int> parents,
                   std::vector<double> bone_lengths, std::array<LegChain, 2> legs,
                   std::array<int, 2> feet, std::vector<Eigen::Vector3d> rest_directions = {});

  // 24-joint SMPL tree as used by AIST++ (y up, +x is the body's left side).
  static SkeletonTopology smpl24();

  int joints() const { return static_cast<int>(names_.size()); }
  int bones() const { return joints() - 1; }
  int root() const { return root_; }

  const std::vector<std::string>& joint_names() const { return names_; }
  const std::vector<int>& parents() const { return parents_; }
  const std::vector<double>& bone_lengths() const { return lengths_; }
  const std::array<LegChain, 2>& legs() const { return legs_; }
  const std::array<int, 2>& feet() const { return feet_; }
  // Unit rest-pose directions per bone; empty when the topology has none.
  const std::vector<Eigen::Vector3d>& rest_directions() const { return rest_; }

  int bone_child(int bone) const { return bone_child_[bone]; }
  int bone_parent(int bone) const { return parents_[bone_child_[bone]]; }
  // -1 for the root joint.
  int bone_of_joint(int joint) const { return joint_bone_[joint]; }
  // Joints ordered so every parent precedes its children.
  const std::vector<int>& traversal() const { return order_; }
  int find_joint(std::string_view name) const;

  // Row-normalized bone adjacency with self loops (bones sharing a joint are
  // neighbours).
  Eigen::MatrixXd bone_adjacency() const;

  SkeletonTopology with_bone_lengths(std::vector<double> lengths) const;

 private:
  std::vector<std::string> names_;
  std::vector<int> parents_;
  std::vector<double> lengths_;
  std::array<LegChain, 2> legs_;
  std::array<int, 2> feet_;
  std::vector<Eigen::Vector3d> rest_;
  int root_ = -1;
  std::vector<int> bone_child_;
  std::vector<int> joint_bone_;
  std::vector<int> order_;
};

struct PoseSequence {
  double fps = 10.0;
  // 3(J-1) x T; rows [3b, 3b+3) hold the unit direction of bone b.
  Eigen::MatrixXd line_vectors;
  // World-space root joint position per frame (meters).
  std::optional<Eigen::Matrix3Xd> root;

  int frames() const { return static_cast<int>(line_vectors.cols()); }
  int bones() const { return static_cast<int>(line_vectors.rows() / 3); }
  Eigen::Vector3d bone(int frame, int bone_index) const {
    return line_vectors.block<3, 1>(3 * bone_index, frame);
  }
};

// Throws ShapeMismatch / FormatError when the sequence violates its invariants.
void validate_pose(const PoseSequence& pose, const SkeletonTopology& topo, double norm_tolerance = 1e-4);

PoseSequence positions_to_linevecs(const JointPositions& positions, const SkeletonTopology& topo,
                                   double fps = 10.0);
JointPositions linevecs_to_positions(const PoseSequence& pose, const SkeletonTopology& topo);

// Bone lengths measured on the first frame of a position clip.
std::vector<double> measure_bone_lengths(const JointPositions& positions, const SkeletonTopology& topo);

// Column-wise forward difference; the last column repeats the previous
// difference (zero for single-column input).
Eigen::MatrixXd forward_difference(const Eigen::MatrixXd& sequence);

struct LegKinematics {
  Eigen::Matrix2Xd angle;             // radians, rows = legs
  Eigen::Matrix2Xd angular_velocity;  // radians per frame
};

LegKinematics femur_shin_angles(const PoseSequence& pose, const SkeletonTopology& topo);

// Mean over joints of squared joint velocity (m^2/s^2), one value per frame.
Eigen::VectorXd kinetic_velocity(const PoseSequence& pose, const SkeletonTopology& topo);

// Beat/seed/repletion bookkeeping for one clip window. Frame indices are
// zero-based.
struct FrameIndexSets {
  int total = 0;
  int seed_length = 0;
  std::vector<int> beats;          // B, strictly increasing
  std::vector<int> seed_beats;     // B_S = B within [0, seed_length)
  std::vector<int> nonseed_beats;  // B - B_S
  std::vector<int> repletion;      // R = all - (B u S)

  // Keeps the first `cap` beats. Throws IndexOutOfRange / ShapeMismatch on
  // invalid input.
  static FrameIndexSets build(int total, int seed_length, std::vector<int> beats, int cap);

  // Same window with every beat after the seed removed; used when beat poses
  // are not available so the repletion set covers all non-seed frames.
  FrameIndexSets seed_only() const;

  void validate(int cap) const;
};

}  // namespace groovesynth
