#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "groovesynth/skeleton.hpp"

namespace groovesynth {

struct MotionClip {
  SkeletonTopology topology;
  PoseSequence pose;
};

// Canonical motion document:
//   {"fps", "joint_names", "parents", "bone_lengths", "root", "line_vectors",
//    "leg_chains", "foot_joints", "rest_directions"}
// "root" is a T x 3 array, "line_vectors" T x (J-1) x 3. The last three keys
// are optional on input; SMPL joint names imply them.
nlohmann::json motion_to_json(const PoseSequence& pose, const SkeletonTopology& topo);
MotionClip motion_from_json(const nlohmann::json& doc, const std::string& source = "<json>");

void save_motion(const std::filesystem::path& path, const PoseSequence& pose, const SkeletonTopology& topo);
MotionClip load_motion(const std::filesystem::path& path);

nlohmann::json topology_to_json(const SkeletonTopology& topo);
SkeletonTopology topology_from_json(const nlohmann::json& doc, const std::string& source = "<json>");
SkeletonTopology load_topology(const std::filesystem::path& path);

// Writes a BVH file: root translation plus per-joint Z-X-Y Euler rotations.
// Each joint's rotation is the minimal rotation taking the rest direction of
// its first child bone onto the current line vector, so single-child chains
// reproduce the pose exactly; joints with several children follow the first.
void write_bvh(std::ostream& out, const PoseSequence& pose, const SkeletonTopology& topo);
void save_bvh(const std::filesystem::path& path, const PoseSequence& pose, const SkeletonTopology& topo);

// Per-frame local rotation matrices in BVH joint order (exposed for tests).
std::vector<std::vector<Eigen::Matrix3d>> bvh_local_rotations(const PoseSequence& pose,
                                                              const SkeletonTopology& topo);

}  // namespace groovesynth
