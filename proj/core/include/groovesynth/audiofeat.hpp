#pragma once

#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "groovesynth/wav.hpp"

namespace groovesynth {

// Analysis settings. Every extractor resamples its input to analysis_rate
// first, so filterbanks are fixed regardless of the source file.
struct AudioFeatureParams {
  double analysis_rate = 16000.0;
  int n_fft = 1024;
  int n_mels = 64;
  int delta_half_width = 2;

  int chroma_fft = 4096;
  double chroma_min_hz = 55.0;
  double chroma_max_hz = 5000.0;
  int cens_smoothing = 9;  // Hann length in motion frames

  int onset_hop = 160;  // 100 onset frames per second at 16 kHz
  double min_bpm = 60.0;
  double max_bpm = 180.0;
  double tightness = 100.0;
};

struct AudioFeatureSet {
  Eigen::MatrixXd mfcc;    // 3*n_mfcc x T: [mfcc; delta; delta-delta]
  Eigen::MatrixXd chroma;  // 12 x T, unit l2 columns
  std::vector<int> beats;  // zero-based motion frames, strictly increasing
  double fps = 10.0;

  int frames() const { return static_cast<int>(mfcc.cols()); }
};

// round(duration * fps); throws TooShortClip below one frame.
int feature_frame_count(const AudioClip& clip, double fps);

Eigen::MatrixXd extract_mfcc(const AudioClip& clip, double fps, int n_mfcc = 20,
                             const AudioFeatureParams& params = {});
Eigen::MatrixXd extract_chroma(const AudioClip& clip, double fps, const AudioFeatureParams& params = {});
std::vector<int> detect_beats(const AudioClip& clip, double fps, int cap, const AudioFeatureParams& params = {});

AudioFeatureSet extract_features(const AudioClip& clip, double fps, int beat_cap, int n_mfcc = 20,
                                 const AudioFeatureParams& params = {});

// Centered-difference regression delta along time with edge replication.
Eigen::MatrixXd delta_features(const Eigen::MatrixXd& features, int half_width);

// Onset strength envelope (log-mel spectral flux, half-wave rectified) at
// analysis_rate / onset_hop frames per second.
Eigen::VectorXd onset_envelope(const AudioClip& clip, const AudioFeatureParams& params = {});

// Beat period in onset frames from the onset autocorrelation restricted to
// [min_bpm, max_bpm].
double estimate_beat_period(const Eigen::VectorXd& onset, const AudioFeatureParams& params = {});

nlohmann::json features_to_json(const AudioFeatureSet& feats);
AudioFeatureSet features_from_json(const nlohmann::json& doc);

}  // namespace groovesynth
