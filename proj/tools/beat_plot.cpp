#include "beat_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace groovesynth::tools {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string beat_plot_svg(const Eigen::VectorXd& velocity, double fps, const std::vector<int>& music_beats,
                          const std::vector<int>& motion_beats) {
  constexpr double width = 900, height = 300, left = 60, right = 20, top = 20, bottom = 40;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const int frames = static_cast<int>(velocity.size());
  const double vmax = frames > 0 ? std::max(velocity.maxCoeff(), 1e-12) : 1.0;
  const auto x = [&](double frame) { return left + plot_w * frame / std::max(frames - 1, 1); };
  const auto y = [&](double v) { return top + plot_h * (1.0 - v / vmax); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<g stroke=\"#c0392b\" stroke-width=\"1\" stroke-dasharray=\"4 3\">\n";
  for (int b : music_beats)
    if (b >= 0 && b < frames)
      svg << "<line x1=\"" << num(x(b)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(x(b)) << "\" y2=\""
          << num(top + plot_h) << "\"/>\n";
  svg << "</g>\n<polyline fill=\"none\" stroke=\"#2c3e50\" stroke-width=\"1.5\" points=\"";
  for (int t = 0; t < frames; ++t) svg << (t ? " " : "") << num(x(t)) << ',' << num(y(velocity(t)));
  svg << "\"/>\n<g fill=\"#2980b9\">\n";
  for (int b : motion_beats)
    if (b >= 0 && b < frames)
      svg << "<circle cx=\"" << num(x(b)) << "\" cy=\"" << num(y(velocity(b))) << "\" r=\"3.5\"/>\n";
  svg << "</g>\n<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + plot_h) << "\" x2=\"" << num(left + plot_w)
      << "\" y2=\"" << num(top + plot_h) << "\"/>\n"
      << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + plot_h) << "\"/>\n</g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  const double seconds = frames > 1 ? (frames - 1) / fps : 0.0;
  for (int s = 0; s <= static_cast<int>(std::floor(seconds)); ++s)
    svg << "<text x=\"" << num(x(s * fps)) << "\" y=\"" << num(height - 22) << "\" text-anchor=\"middle\">" << s
        << "</text>\n";
  svg << "<text x=\"" << num(left + plot_w / 2) << "\" y=\"" << num(height - 6)
      << "\" text-anchor=\"middle\">time (s)</text>\n"
      << "<text x=\"14\" y=\"" << num(top + plot_h / 2) << "\" transform=\"rotate(-90 14 " << num(top + plot_h / 2)
      << ")\" text-anchor=\"middle\">kinetic velocity</text>\n</g>\n</svg>\n";
  return svg.str();
}

}  // namespace groovesynth::tools
