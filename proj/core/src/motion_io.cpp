#include "groovesynth/motion_io.hpp"

#include <fstream>

#include "groovesynth/errors.hpp"

namespace groovesynth {

using nlohmann::json;

namespace {

template <typename T>
T get_field(const json& doc, const char* key, const std::string& source) {
  if (!doc.contains(key)) fail(ErrorKind::FormatError, source + ": missing field \"" + key + "\"");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, source + ": field \"" + key + "\": " + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FormatError, path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
}

}  // namespace

json topology_to_json(const SkeletonTopology& topo) {
  json doc;
  doc["joint_names"] = topo.joint_names();
  doc["parents"] = topo.parents();
  doc["bone_lengths"] = topo.bone_lengths();
  json legs = json::array();
  for (const auto& leg : topo.legs()) legs.push_back({leg.hip, leg.knee, leg.ankle});
  doc["leg_chains"] = legs;
  doc["foot_joints"] = {topo.feet()[0], topo.feet()[1]};
  if (!topo.rest_directions().empty()) {
    json rest = json::array();
    for (const auto& d : topo.rest_directions()) rest.push_back({d.x(), d.y(), d.z()});
    doc["rest_directions"] = rest;
  }
  return doc;
}

SkeletonTopology topology_from_json(const json& doc, const std::string& source) {
  auto names = get_field<std::vector<std::string>>(doc, "joint_names", source);
  auto parents = get_field<std::vector<int>>(doc, "parents", source);
  auto lengths = get_field<std::vector<double>>(doc, "bone_lengths", source);

  std::array<LegChain, 2> legs{};
  std::array<int, 2> feet{};
  std::vector<Eigen::Vector3d> rest;
  const SkeletonTopology smpl = SkeletonTopology::smpl24();
  if (doc.contains("leg_chains")) {
    const auto chains = get_field<std::vector<std::array<int, 3>>>(doc, "leg_chains", source);
    if (chains.size() != 2) fail(ErrorKind::FormatError, source + ": leg_chains must hold two chains");
    for (int i = 0; i < 2; ++i) legs[i] = {chains[i][0], chains[i][1], chains[i][2]};
    feet = get_field<std::array<int, 2>>(doc, "foot_joints", source);
  } else if (names == smpl.joint_names()) {
    legs = smpl.legs();
    feet = smpl.feet();
  } else {
    fail(ErrorKind::FormatError, source + ": leg_chains/foot_joints required for non-SMPL skeletons");
  }
  if (doc.contains("rest_directions")) {
    for (const auto& d : get_field<std::vector<std::array<double, 3>>>(doc, "rest_directions", source))
      rest.emplace_back(d[0], d[1], d[2]);
  } else if (names == smpl.joint_names()) {
    rest = smpl.rest_directions();
  }
  try {
    return SkeletonTopology(std::move(names), std::move(parents), std::move(lengths), legs, feet, std::move(rest));
  } catch (const Error& e) {
    fail(ErrorKind::FormatError, source + ": " + e.what());
  }
}

SkeletonTopology load_topology(const std::filesystem::path& path) {
  return topology_from_json(read_json_file(path), path.string());
}

json motion_to_json(const PoseSequence& pose, const SkeletonTopology& topo) {
  json doc = topology_to_json(topo);
  doc["fps"] = pose.fps;
  json frames = json::array();
  for (int t = 0; t < pose.frames(); ++t) {
    json bones = json::array();
    for (int b = 0; b < pose.bones(); ++b) {
      const Eigen::Vector3d v = pose.bone(t, b);
      bones.push_back({v.x(), v.y(), v.z()});
    }
    frames.push_back(std::move(bones));
  }
  doc["line_vectors"] = std::move(frames);
  if (pose.root) {
    json root = json::array();
    for (int t = 0; t < pose.frames(); ++t) root.push_back({(*pose.root)(0, t), (*pose.root)(1, t), (*pose.root)(2, t)});
    doc["root"] = std::move(root);
  }
  return doc;
}

MotionClip motion_from_json(const json& doc, const std::string& source) {
  SkeletonTopology topo = topology_from_json(doc, source);
  PoseSequence pose;
  pose.fps = get_field<double>(doc, "fps", source);
  const auto frames = get_field<std::vector<std::vector<std::array<double, 3>>>>(doc, "line_vectors", source);
  if (frames.empty()) fail(ErrorKind::FormatError, source + ": motion has no frames");
  pose.line_vectors.resize(3 * topo.bones(), static_cast<Eigen::Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (static_cast<int>(frames[t].size()) != topo.bones())
      fail(ErrorKind::FormatError, source + ": frame " + std::to_string(t) + " has " +
                                       std::to_string(frames[t].size()) + " bones, expected " +
                                       std::to_string(topo.bones()));
    for (int b = 0; b < topo.bones(); ++b)
      for (int k = 0; k < 3; ++k) pose.line_vectors(3 * b + k, static_cast<Eigen::Index>(t)) = frames[t][b][k];
  }
  if (doc.contains("root") && !doc.at("root").is_null()) {
    const auto root = get_field<std::vector<std::array<double, 3>>>(doc, "root", source);
    if (root.size() != frames.size()) fail(ErrorKind::FormatError, source + ": root length differs from line_vectors");
    Eigen::Matrix3Xd r(3, static_cast<Eigen::Index>(root.size()));
    for (std::size_t t = 0; t < root.size(); ++t)
      for (int k = 0; k < 3; ++k) r(k, static_cast<Eigen::Index>(t)) = root[t][k];
    pose.root = std::move(r);
  }
  try {
    validate_pose(pose, topo);
  } catch (const Error& e) {
    fail(ErrorKind::FormatError, source + ": " + e.what());
  }
  return {std::move(topo), std::move(pose)};
}

void save_motion(const std::filesystem::path& path, const PoseSequence& pose, const SkeletonTopology& topo) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::FormatError, path.string() + ": cannot open for writing");
  out << motion_to_json(pose, topo).dump() << '\n';
  if (!out) fail(ErrorKind::FormatError, path.string() + ": write failed");
}

MotionClip load_motion(const std::filesystem::path& path) {
  return motion_from_json(read_json_file(path), path.string());
}

}  // namespace groovesynth
