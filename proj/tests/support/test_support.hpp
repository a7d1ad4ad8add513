#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "groovesynth/autograd.hpp"
#include "groovesynth/errors.hpp"
#include "groovesynth/skeleton.hpp"
#include "groovesynth/wav.hpp"

namespace groovesynth::testing {

// Kind of the Error raised by f; nullopt when f returns normally.
inline std::optional<ErrorKind> error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

// Norm-wise relative error between the reverse-mode gradient and central
// differences (step h) over every entry of every tensor in `wrt`.
inline double gradient_error(const std::function<nn::Tensor()>& f, const std::vector<nn::Tensor>& wrt,
                             double h = 1e-5) {
  for (auto t : wrt) t.zero_grad();
  f().backward();
  std::vector<Eigen::MatrixXd> analytic;
  for (const auto& t : wrt) analytic.push_back(t.grad());
  double diff2 = 0, numeric2 = 0, analytic2 = 0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    nn::Tensor t = wrt[k];
    for (Eigen::Index i = 0; i < t.value().size(); ++i) {
      const double saved = t.value().data()[i];
      t.mutable_value().data()[i] = saved + h;
      const double plus = f().item();
      t.mutable_value().data()[i] = saved - h;
      const double minus = f().item();
      t.mutable_value().data()[i] = saved;
      const double g = (plus - minus) / (2 * h);
      const double a = analytic[k].data()[i];
      diff2 += (g - a) * (g - a);
      numeric2 += g * g;
      analytic2 += a * a;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(std::max(numeric2, analytic2)), 1e-300);
}

inline std::vector<nn::Tensor> parameter_tensors(const nn::ParameterSet& params) {
  std::vector<nn::Tensor> out;
  for (const auto& [path, t] : params.entries()) out.push_back(t);
  return out;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// 3B x T random unit bone vectors.
inline Eigen::MatrixXd random_line_vectors(int bones, int frames, std::mt19937_64& rng) {
  Eigen::MatrixXd m = random_matrix(3 * bones, frames, rng);
  for (int t = 0; t < frames; ++t)
    for (int b = 0; b < bones; ++b) m.block<3, 1>(3 * b, t).normalize();
  return m;
}

// Rest-pose line vectors for every frame.
inline Eigen::MatrixXd rest_line_vectors(const SkeletonTopology& topo, int frames) {
  Eigen::MatrixXd m(3 * topo.bones(), frames);
  for (int t = 0; t < frames; ++t)
    for (int b = 0; b < topo.bones(); ++b) m.block<3, 1>(3 * b, t) = topo.rest_directions()[b];
  return m;
}

inline PoseSequence rest_pose(const SkeletonTopology& topo, int frames, double fps = 10.0) {
  PoseSequence p;
  p.fps = fps;
  p.line_vectors = rest_line_vectors(topo, frames);
  p.root = Eigen::Matrix3Xd::Zero(3, frames);
  p.root->row(1).setConstant(0.95);
  return p;
}

// Decaying 1.5 kHz clicks at the given times over a silent bed.
inline AudioClip click_track(double duration, const std::vector<double>& times, double rate = 16000.0,
                             double gain = 0.8) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.assign(static_cast<std::size_t>(std::llround(duration * rate)), 0.0);
  const int len = static_cast<int>(0.03 * rate);
  for (double t : times) {
    const auto start = static_cast<std::size_t>(std::llround(t * rate));
    for (int i = 0; i < len && start + i < clip.samples.size(); ++i)
      clip.samples[start + i] += gain * std::exp(-i / (0.005 * rate)) * std::sin(2 * M_PI * 1500.0 * i / rate);
  }
  return clip;
}

inline AudioClip tone(double duration, double hz, double rate = 16000.0, double gain = 0.5) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(static_cast<std::size_t>(std::llround(duration * rate)));
  for (std::size_t i = 0; i < clip.samples.size(); ++i) clip.samples[i] = gain * std::sin(2 * M_PI * hz * i / rate);
  return clip;
}

}  // namespace groovesynth::testing
