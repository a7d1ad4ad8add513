#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <Eigen/Geometry>

#include "groovesynth/errors.hpp"
#include "groovesynth/motion_io.hpp"

namespace groovesynth {

namespace {

struct BvhLayout {
  std::vector<std::vector<int>> children;
  std::vector<int> order;  // depth-first, matches channel order in MOTION
  std::vector<Eigen::Vector3d> rest;
};

BvhLayout make_layout(const PoseSequence& pose, const SkeletonTopology& topo) {
  BvhLayout layout;
  layout.children.resize(topo.joints());
  for (int j = 0; j < topo.joints(); ++j)
    if (j != topo.root()) layout.children[topo.parents()[j]].push_back(j);
  std::function<void(int)> visit = [&](int j) {
    layout.order.push_back(j);
    for (int c : layout.children[j]) visit(c);
  };
  visit(topo.root());
  if (!topo.rest_directions().empty()) {
    layout.rest = topo.rest_directions();
  } else {
    for (int b = 0; b < topo.bones(); ++b) layout.rest.push_back(pose.bone(0, b));
  }
  return layout;
}

// Global orientation of each joint for one frame.
std::vector<Eigen::Matrix3d> global_rotations(const PoseSequence& pose, const SkeletonTopology& topo,
                                              const BvhLayout& layout, int frame) {
  std::vector<Eigen::Matrix3d> global(topo.joints(), Eigen::Matrix3d::Identity());
  for (int j : topo.traversal()) {
    const auto& kids = layout.children[j];
    if (kids.empty()) {
      if (j != topo.root()) global[j] = global[topo.parents()[j]];
      continue;
    }
    const int bone = topo.bone_of_joint(kids.front());
    global[j] = Eigen::Quaterniond::FromTwoVectors(layout.rest[bone], pose.bone(frame, bone)).toRotationMatrix();
  }
  return global;
}

}  // namespace

std::vector<std::vector<Eigen::Matrix3d>> bvh_local_rotations(const PoseSequence& pose,
                                                              const SkeletonTopology& topo) {
  const BvhLayout layout = make_layout(pose, topo);
  std::vector<std::vector<Eigen::Matrix3d>> frames;
  for (int t = 0; t < pose.frames(); ++t) {
    const auto global = global_rotations(pose, topo, layout, t);
    std::vector<Eigen::Matrix3d> local;
    for (int j : layout.order) {
      if (j == topo.root())
        local.push_back(global[j]);
      else
        local.push_back(global[topo.parents()[j]].transpose() * global[j]);
    }
    frames.push_back(std::move(local));
  }
  return frames;
}

void write_bvh(std::ostream& out, const PoseSequence& pose, const SkeletonTopology& topo) {
  require(pose.root.has_value(), ErrorKind::MissingRoot, "BVH export needs a root trajectory");
  const BvhLayout layout = make_layout(pose, topo);
  out << std::setprecision(6) << std::fixed;
  out << "HIERARCHY\n";
  std::function<void(int, int)> emit = [&](int j, int depth) {
    const std::string pad(2 * depth, ' ');
    const bool is_root = j == topo.root();
    out << pad << (is_root ? "ROOT " : "JOINT ") << topo.joint_names()[j] << "\n" << pad << "{\n";
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    if (!is_root) {
      const int b = topo.bone_of_joint(j);
      offset = layout.rest[b] * topo.bone_lengths()[b];
    }
    out << pad << "  OFFSET " << offset.x() << ' ' << offset.y() << ' ' << offset.z() << "\n";
    if (is_root)
      out << pad << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n";
    else
      out << pad << "  CHANNELS 3 Zrotation Xrotation Yrotation\n";
    if (layout.children[j].empty()) {
      out << pad << "  End Site\n" << pad << "  {\n" << pad << "    OFFSET 0.000000 0.000000 0.000000\n"
          << pad << "  }\n";
    }
    for (int c : layout.children[j]) emit(c, depth + 1);
    out << pad << "}\n";
  };
  emit(topo.root(), 0);

  out << "MOTION\nFrames: " << pose.frames() << "\nFrame Time: " << (1.0 / pose.fps) << "\n";
  const auto locals = bvh_local_rotations(pose, topo);
  constexpr double kDeg = 180.0 / std::numbers::pi;
  for (int t = 0; t < pose.frames(); ++t) {
    const auto& r = *pose.root;
    out << r(0, t) << ' ' << r(1, t) << ' ' << r(2, t);
    for (const auto& m : locals[t]) {
      const Eigen::Vector3d zxy = m.eulerAngles(2, 0, 1) * kDeg;
      out << ' ' << zxy[0] << ' ' << zxy[1] << ' ' << zxy[2];
    }
    out << '\n';
  }
}

void save_bvh(const std::filesystem::path& path, const PoseSequence& pose, const SkeletonTopology& topo) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::FormatError, path.string() + ": cannot open for writing");
  write_bvh(out, pose, topo);
}

}  // namespace groovesynth
