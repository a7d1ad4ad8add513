#include "groovesynth/audiofeat.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

constexpr double kPowerFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

AudioClip at_analysis_rate(const AudioClip& clip, const AudioFeatureParams& params) {
  require(clip.sample_rate > 0, ErrorKind::FormatError, "sample rate must be positive");
  return resample(clip, params.analysis_rate);
}

// Power spectra (n_fft/2+1 x frames) of Hann-windowed frames centered at
// round(t * hop), zero padded at the edges.
Eigen::MatrixXd power_spectrogram(const std::vector<double>& samples, int n_fft, double hop, int frames) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> window(n_fft);
  for (int i = 0; i < n_fft; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);
  const int bins = n_fft / 2 + 1;
  Eigen::MatrixXd power(bins, frames);
  std::vector<double> frame(n_fft);
  std::vector<std::complex<double>> spectrum;
  const long n = static_cast<long>(samples.size());
  for (int t = 0; t < frames; ++t) {
    const long start = std::lround(t * hop) - n_fft / 2;
    for (int i = 0; i < n_fft; ++i) {
      const long k = start + i;
      frame[i] = (k >= 0 && k < n) ? samples[k] * window[i] : 0.0;
    }
    fft.fwd(spectrum, frame);
    for (int b = 0; b < bins; ++b) power(b, t) = std::norm(spectrum[b]);
  }
  return power;
}

Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, double rate) {
  const int bins = n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, bins);
  const double mel_max = hz_to_mel(rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * rate / n_fft;
      if (f > lo && f < hi) fb(m, b) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

Eigen::MatrixXd dct_matrix(int n_out, int n_in) {
  Eigen::MatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int i = 0; i < n_in; ++i) d(k, i) = scale * std::cos(std::numbers::pi * k * (2 * i + 1) / (2.0 * n_in));
  }
  return d;
}

double cens_quantize(double v) {
  if (v > 0.4) return 1.0;
  if (v > 0.2) return 0.75;
  if (v > 0.1) return 0.5;
  if (v > 0.05) return 0.25;
  return 0.0;
}

}  // namespace

int feature_frame_count(const AudioClip& clip, double fps) {
  require(fps > 0, ErrorKind::ConfigError, "fps must be positive");
  require(clip.sample_rate > 0, ErrorKind::FormatError, "sample rate must be positive");
  const long frames = std::lround(clip.duration() * fps);
  require(frames >= 1 && clip.duration() >= 1.0 / fps - 1e-12, ErrorKind::TooShortClip,
          "clip of " + std::to_string(clip.duration()) + " s is shorter than one frame at " + std::to_string(fps) +
              " fps");
  return static_cast<int>(frames);
}

Eigen::MatrixXd delta_features(const Eigen::MatrixXd& features, int half_width) {
  const Eigen::Index frames = features.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(features.rows(), frames);
  double norm = 0.0;
  for (int n = 1; n <= half_width; ++n) norm += 2.0 * n * n;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int n = 1; n <= half_width; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(frames - 1, t + n);
      const Eigen::Index behind = std::max<Eigen::Index>(0, t - n);
      out.col(t) += n * (features.col(ahead) - features.col(behind));
    }
  }
  return out / norm;
}

Eigen::MatrixXd extract_mfcc(const AudioClip& clip, double fps, int n_mfcc, const AudioFeatureParams& params) {
  const int frames = feature_frame_count(clip, fps);
  require(n_mfcc >= 1 && n_mfcc <= params.n_mels, ErrorKind::ConfigError, "n_mfcc must be in [1, n_mels]");
  const AudioClip audio = at_analysis_rate(clip, params);
  const Eigen::MatrixXd power = power_spectrogram(audio.samples, params.n_fft, params.analysis_rate / fps, frames);
  const Eigen::MatrixXd mel = mel_filterbank(params.n_mels, params.n_fft, params.analysis_rate) * power;
  const Eigen::MatrixXd log_mel = mel.unaryExpr([](double p) { return 10.0 * std::log10(std::max(p, kPowerFloor)); });
  const Eigen::MatrixXd coeffs = dct_matrix(n_mfcc, params.n_mels) * log_mel;
  const Eigen::MatrixXd d1 = delta_features(coeffs, params.delta_half_width);
  const Eigen::MatrixXd d2 = delta_features(d1, params.delta_half_width);
  Eigen::MatrixXd out(3 * n_mfcc, frames);
  out << coeffs, d1, d2;
  return out;
}

Eigen::MatrixXd extract_chroma(const AudioClip& clip, double fps, const AudioFeatureParams& params) {
  const int frames = feature_frame_count(clip, fps);
  const AudioClip audio = at_analysis_rate(clip, params);
  const Eigen::MatrixXd power =
      power_spectrogram(audio.samples, params.chroma_fft, params.analysis_rate / fps, frames);

  Eigen::MatrixXd energy = Eigen::MatrixXd::Zero(12, frames);
  for (Eigen::Index b = 1; b < power.rows(); ++b) {
    const double f = b * params.analysis_rate / params.chroma_fft;
    if (f < params.chroma_min_hz || f > params.chroma_max_hz) continue;
    const long midi = std::lround(69.0 + 12.0 * std::log2(f / 440.0));
    const int pc = static_cast<int>(((midi % 12) + 12) % 12);
    energy.row(pc) += power.row(b);
  }

  Eigen::MatrixXd quantized = Eigen::MatrixXd::Zero(12, frames);
  for (int t = 0; t < frames; ++t) {
    const double total = energy.col(t).sum();
    if (!(total > 1e-12)) continue;
    for (int p = 0; p < 12; ++p) quantized(p, t) = cens_quantize(energy(p, t) / total);
  }

  const int len = std::max(1, params.cens_smoothing);
  std::vector<double> hann(len);
  for (int i = 0; i < len; ++i) hann[i] = std::sin(std::numbers::pi * (i + 1) / (len + 1));
  const double hann_sum = std::accumulate(hann.begin(), hann.end(), 0.0);
  Eigen::MatrixXd smooth = Eigen::MatrixXd::Zero(12, frames);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < len; ++i) {
      const int s = t + i - len / 2;
      if (s >= 0 && s < frames) smooth.col(t) += hann[i] / hann_sum * quantized.col(s);
    }
  }

  Eigen::MatrixXd chroma(12, frames);
  for (int t = 0; t < frames; ++t) {
    const double n = smooth.col(t).norm();
    if (n > 1e-12)
      chroma.col(t) = smooth.col(t) / n;
    else
      chroma.col(t).setConstant(1.0 / std::sqrt(12.0));
  }
  return chroma;
}

Eigen::VectorXd onset_envelope(const AudioClip& clip, const AudioFeatureParams& params) {
  const AudioClip audio = at_analysis_rate(clip, params);
  const int frames = static_cast<int>(audio.samples.size() / params.onset_hop) + 1;
  const Eigen::MatrixXd power = power_spectrogram(audio.samples, params.n_fft, params.onset_hop, frames);
  const Eigen::MatrixXd mel = mel_filterbank(params.n_mels, params.n_fft, params.analysis_rate) * power;
  const double ref = mel.maxCoeff();
  if (!(ref > 1e-20)) return Eigen::VectorXd::Zero(frames);
  // dB relative to the loudest bin with an 80 dB floor: a uniform gain
  // change cancels exactly.
  const Eigen::MatrixXd db = mel.unaryExpr([ref](double p) {
    return std::max(10.0 * std::log10(std::max(p / ref, 1e-30)), -80.0);
  });
  Eigen::VectorXd onset = Eigen::VectorXd::Zero(frames);
  // Frames whose window hangs over either end see the zero padding as an
  // onset; they are left at zero.
  const int edge = params.n_fft / (2 * params.onset_hop) + 1;
  for (int t = std::max(1, edge); t < frames - edge; ++t)
    onset(t) = (db.col(t) - db.col(t - 1)).cwiseMax(0.0).mean();
  return onset;
}

double estimate_beat_period(const Eigen::VectorXd& onset, const AudioFeatureParams& params) {
  const double rate = params.analysis_rate / params.onset_hop;
  const int lag_min = std::max(1, static_cast<int>(std::floor(60.0 * rate / params.max_bpm)));
  const int lag_max = static_cast<int>(std::ceil(60.0 * rate / params.min_bpm));
  const Eigen::Index n = onset.size();
  require(n > lag_min + 1, ErrorKind::TooShortClip, "onset envelope too short for tempo estimation");
  const Eigen::VectorXd centered = onset.array() - onset.mean();
  auto ac = [&](int lag) {
    if (lag <= 0 || lag >= n) return 0.0;
    return centered.head(n - lag).dot(centered.tail(n - lag));
  };
  int best = lag_min;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int lag = lag_min; lag <= std::min<int>(lag_max, static_cast<int>(n) - 1); ++lag) {
    const double v = ac(lag);
    if (v > best_value) {
      best_value = v;
      best = lag;
    }
  }
  // Parabolic refinement around the integer peak.
  const double a = ac(best - 1), b = ac(best), c = ac(best + 1);
  const double denom = a - 2.0 * b + c;
  double offset = 0.0;
  if (best > lag_min && best < lag_max && std::abs(denom) > 1e-12) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  return best + offset;
}

std::vector<int> detect_beats(const AudioClip& clip, double fps, int cap, const AudioFeatureParams& params) {
  require(clip.duration() >= 1.0, ErrorKind::TooShortClip, "beat tracking needs at least 1 s of audio");
  const int motion_frames = feature_frame_count(clip, fps);
  const Eigen::VectorXd onset = onset_envelope(clip, params);
  if (!(onset.maxCoeff() - onset.minCoeff() > 1e-9)) fail(ErrorKind::NoBeatsFound, "onset envelope is flat");

  const double period = estimate_beat_period(onset, params);
  const double sd = std::sqrt((onset.array() - onset.mean()).square().mean());
  const Eigen::VectorXd local = onset / std::max(sd, 1e-12);
  const int n = static_cast<int>(local.size());

  // Dynamic-programming beat tracker: reward onset strength, penalize
  // log-deviation of each inter-beat interval from the global period.
  std::vector<double> score(n);
  std::vector<int> backlink(n, -1);
  const int reach_far = static_cast<int>(std::round(2.0 * period));
  const int reach_near = std::max(1, static_cast<int>(std::round(period / 2.0)));
  for (int t = 0; t < n; ++t) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int tau = std::max(0, t - reach_far); tau <= t - reach_near; ++tau) {
      const double dev = std::log((t - tau) / period);
      const double candidate = score[tau] - params.tightness * dev * dev;
      if (candidate > best) {
        best = candidate;
        arg = tau;
      }
    }
    score[t] = local(t) + (arg >= 0 ? best : 0.0);
    backlink[t] = arg;
  }

  std::vector<int> peaks;
  for (int t = 1; t + 1 < n; ++t)
    if (score[t] > score[t - 1] && score[t] >= score[t + 1]) peaks.push_back(t);
  if (peaks.empty()) fail(ErrorKind::NoBeatsFound, "no cumulative-score peaks");
  std::vector<double> peak_scores;
  for (int p : peaks) peak_scores.push_back(score[p]);
  std::nth_element(peak_scores.begin(), peak_scores.begin() + peak_scores.size() / 2, peak_scores.end());
  const double median = peak_scores[peak_scores.size() / 2];
  int last = peaks.back();
  for (auto it = peaks.rbegin(); it != peaks.rend(); ++it) {
    if (score[*it] >= 0.5 * median) {
      last = *it;
      break;
    }
  }

  std::vector<int> beats;
  for (int t = last; t >= 0; t = backlink[t]) beats.push_back(t);
  std::reverse(beats.begin(), beats.end());

  // Trim weak beats at both ends (DP can extrapolate into silence).
  const double threshold = 0.5 * std::sqrt(local.array().square().mean());
  auto strength = [&](int t) {
    double m = 0.0;
    for (int k = std::max(0, t - 2); k <= std::min(n - 1, t + 2); ++k) m = std::max(m, local(k));
    return m;
  };
  while (!beats.empty() && strength(beats.front()) < threshold) beats.erase(beats.begin());
  while (!beats.empty() && strength(beats.back()) < threshold) beats.pop_back();
  if (beats.empty()) fail(ErrorKind::NoBeatsFound, "no beats above the onset threshold");

  const double onset_rate = params.analysis_rate / params.onset_hop;
  std::vector<int> frames;
  for (int b : beats) {
    const int f = std::clamp(static_cast<int>(std::lround(b / onset_rate * fps)), 0, motion_frames - 1);
    if (frames.empty() || f > frames.back()) frames.push_back(f);
  }
  if (static_cast<int>(frames.size()) > cap) frames.resize(std::max(cap, 0));
  return frames;
}

AudioFeatureSet extract_features(const AudioClip& clip, double fps, int beat_cap, int n_mfcc,
                                 const AudioFeatureParams& params) {
  AudioFeatureSet feats;
  feats.fps = fps;
  feats.mfcc = extract_mfcc(clip, fps, n_mfcc, params);
  feats.chroma = extract_chroma(clip, fps, params);
  feats.beats = detect_beats(clip, fps, beat_cap, params);
  return feats;
}

namespace {

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd rows_matrix(const nlohmann::json& rows, const char* what) {
  const auto data = rows.get<std::vector<std::vector<double>>>();
  if (data.empty()) return {};
  Eigen::MatrixXd m(data.size(), data.front().size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    require(data[r].size() == data.front().size(), ErrorKind::FormatError, std::string(what) + ": ragged rows");
    for (std::size_t c = 0; c < data[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = data[r][c];
  }
  return m;
}

}  // namespace

nlohmann::json features_to_json(const AudioFeatureSet& feats) {
  return {{"fps", feats.fps}, {"mfcc", matrix_rows(feats.mfcc)}, {"chroma", matrix_rows(feats.chroma)},
          {"beats", feats.beats}};
}

AudioFeatureSet features_from_json(const nlohmann::json& doc) {
  AudioFeatureSet feats;
  try {
    feats.fps = doc.at("fps").get<double>();
    feats.mfcc = rows_matrix(doc.at("mfcc"), "mfcc");
    feats.chroma = rows_matrix(doc.at("chroma"), "chroma");
    feats.beats = doc.at("beats").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("feature document: ") + e.what());
  }
  require(feats.mfcc.cols() == feats.chroma.cols(), ErrorKind::FormatError, "mfcc and chroma lengths differ");
  return feats;
}

}  // namespace groovesynth
