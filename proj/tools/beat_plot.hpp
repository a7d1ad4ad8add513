#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace groovesynth::tools {

// Kinetic velocity over time with music beats as vertical lines and
// kinematic beats as dots, as a standalone SVG document.
std::string beat_plot_svg(const Eigen::VectorXd& velocity, double fps, const std::vector<int>& music_beats,
                          const std::vector<int>& motion_beats);

}  // namespace groovesynth::tools
