#include "groovesynth/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Geometry>
#include <openssl/evp.h>

#include "groovesynth/errors.hpp"
#include "groovesynth/motion_io.hpp"

namespace groovesynth {

namespace fs = std::filesystem;

Eigen::MatrixXd TrainingSample::beat_poses() const {
  Eigen::MatrixXd out(poses.rows(), static_cast<Eigen::Index>(sets.nonseed_beats.size()));
  for (std::size_t i = 0; i < sets.nonseed_beats.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = poses.col(sets.nonseed_beats[i]);
  return out;
}

Eigen::MatrixXd TrainingSample::repletion_poses() const {
  Eigen::MatrixXd out(poses.rows(), static_cast<Eigen::Index>(sets.repletion.size()));
  for (std::size_t i = 0; i < sets.repletion.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = poses.col(sets.repletion[i]);
  return out;
}

// ---- feature cache ----------------------------------------------------------------

std::string feature_cache_key(const AudioClip& clip, const WindowConfig& cfg) {
  nlohmann::json params = {{"fps", cfg.fps},
                           {"beat_cap", cfg.beat_cap},
                           {"n_mfcc", cfg.n_mfcc},
                           {"rate", clip.sample_rate},
                           {"analysis_rate", cfg.audio.analysis_rate},
                           {"n_fft", cfg.audio.n_fft},
                           {"n_mels", cfg.audio.n_mels},
                           {"delta", cfg.audio.delta_half_width},
                           {"chroma_fft", cfg.audio.chroma_fft},
                           {"chroma_min", cfg.audio.chroma_min_hz},
                           {"chroma_max", cfg.audio.chroma_max_hz},
                           {"cens", cfg.audio.cens_smoothing},
                           {"onset_hop", cfg.audio.onset_hop},
                           {"bpm", {cfg.audio.min_bpm, cfg.audio.max_bpm}},
                           {"tightness", cfg.audio.tightness}};
  const std::string header = params.dump();

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, ErrorKind::FormatError, "cannot allocate hash context");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, clip.samples.data(), clip.samples.size() * sizeof(double));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

AudioFeatureSet cached_features(const AudioClip& clip, const WindowConfig& cfg) {
  if (!cfg.cache_dir) return extract_features(clip, cfg.fps, cfg.beat_cap, cfg.n_mfcc, cfg.audio);
  const fs::path file = *cfg.cache_dir / (feature_cache_key(clip, cfg) + ".json");
  if (fs::exists(file)) {
    std::ifstream in(file);
    try {
      return features_from_json(nlohmann::json::parse(in));
    } catch (const std::exception&) {
      // Unreadable entries are recomputed and overwritten below.
    }
  }
  AudioFeatureSet feats = extract_features(clip, cfg.fps, cfg.beat_cap, cfg.n_mfcc, cfg.audio);
  fs::create_directories(*cfg.cache_dir);
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << features_to_json(feats).dump();
  }
  fs::rename(tmp, file);
  return feats;
}

// ---- windowing -------------------------------------------------------------------

std::vector<TrainingSample> window_clip(const DanceClip& clip, const SkeletonTopology& topo,
                                        const WindowConfig& cfg, WindowStats* stats) {
  require(clip.pose.root.has_value(), ErrorKind::MissingRoot, "clip " + clip.id + " has no root trajectory");
  require(std::abs(clip.pose.fps - cfg.fps) < 1e-9, ErrorKind::FormatError,
          "clip " + clip.id + " is at " + std::to_string(clip.pose.fps) + " fps, expected " + std::to_string(cfg.fps));
  validate_pose(clip.pose, topo);
  const int audio_frames = static_cast<int>(std::floor(clip.audio.duration() * cfg.fps + 1e-9));
  const int frames = std::min(clip.pose.frames(), audio_frames);
  const int count = frames / cfg.window;
  const auto samples_per_frame = clip.audio.sample_rate / cfg.fps;

  std::vector<TrainingSample> out;
  for (int w = 0; w < count; ++w) {
    const int start = w * cfg.window;
    if (stats) ++stats->windows;
    const auto begin = static_cast<std::size_t>(std::llround(start * samples_per_frame));
    const auto length = static_cast<std::size_t>(std::llround(cfg.window * samples_per_frame));
    TrainingSample s;
    s.clip_id = clip.id;
    s.start = start;
    try {
      s.features = cached_features(slice(clip.audio, begin, length), cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoBeatsFound) throw;
      if (stats) ++stats->dropped_no_beats;
      continue;
    }
    require(s.features.frames() == cfg.window, ErrorKind::ShapeMismatch,
            "feature window of " + std::to_string(s.features.frames()) + " frames");
    s.sets = FrameIndexSets::build(cfg.window, cfg.seed_length, s.features.beats, cfg.beat_cap);
    if (s.sets.seed_beats.empty()) {
      if (stats) ++stats->dropped_no_seed_beat;
      continue;
    }
    s.poses = clip.pose.line_vectors.middleCols(start, cfg.window);
    s.root = clip.pose.root->middleCols(start, cfg.window);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrainingSample> window_corpus(const std::vector<DanceClip>& clips, const SkeletonTopology& topo,
                                          const WindowConfig& cfg, WindowStats* stats) {
  std::vector<TrainingSample> out;
  for (const auto& clip : clips) {
    auto part = window_clip(clip, topo, cfg, stats);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

// ---- synthetic corpus -------------------------------------------------------------

std::vector<DanceClip> synth_dataset(int n_clips, std::uint64_t seed, const SkeletonTopology& topo,
                                     const SynthConfig& cfg, std::vector<SynthTruth>* truth) {
  require(n_clips >= 1, ErrorKind::ConfigError, "synthetic dataset needs at least one clip");
  require(!topo.rest_directions().empty(), ErrorKind::ConfigError, "synthetic dances need rest directions");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int bones = topo.bones();
  const int frames = static_cast<int>(std::llround(cfg.duration * cfg.fps));
  const auto n_samples = static_cast<std::size_t>(std::llround(cfg.duration * cfg.sample_rate));
  static const double kScale[] = {0, 2, 4, 5, 7, 9, 11};

  std::vector<DanceClip> clips;
  for (int c = 0; c < n_clips; ++c) {
    const double bpm = cfg.min_bpm + (cfg.max_bpm - cfg.min_bpm) * unit(rng);
    const double period = 60.0 / bpm;
    const double offset = period * (0.1 + 0.8 * unit(rng));
    SynthTruth info{bpm, {}};
    for (double t = offset; t < cfg.duration; t += period) info.click_times.push_back(t);

    // Audio: decaying clicks, a pad whose pitch moves every four beats, and
    // one-pole low-passed noise.
    AudioClip audio;
    audio.sample_rate = cfg.sample_rate;
    audio.samples.assign(n_samples, 0.0);
    double lp = 0.0;
    const double click_hz = 1200.0 + 800.0 * unit(rng);
    std::vector<double> pad_hz;
    for (std::size_t k = 0; k <= info.click_times.size() / 4 + 1; ++k)
      pad_hz.push_back(220.0 * std::pow(2.0, kScale[rng() % 7] / 12.0));
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double t = static_cast<double>(i) / cfg.sample_rate;
      lp += 0.05 * (gauss(rng) - lp);
      double v = 0.15 * lp;
      const auto bar = static_cast<std::size_t>(std::max(0.0, (t - offset) / period) / 4.0);
      v += 0.08 * std::sin(2.0 * std::numbers::pi * pad_hz[std::min(bar, pad_hz.size() - 1)] * t);
      audio.samples[i] = v;
    }
    for (double tc : info.click_times) {
      const auto first = static_cast<std::size_t>(std::llround(tc * cfg.sample_rate));
      const auto len = static_cast<std::size_t>(0.03 * cfg.sample_rate);
      for (std::size_t k = 0; k < len && first + k < n_samples; ++k) {
        const double dt = static_cast<double>(k) / cfg.sample_rate;
        audio.samples[first + k] += 0.7 * std::exp(-dt / 0.006) * std::sin(2.0 * std::numbers::pi * click_hz * dt);
      }
    }

    // Dance: every bone swings about its own axis as A cos(pi * beat phase),
    // so bones stop (velocity minima) exactly on clicks.
    std::vector<Eigen::Vector3d> axes(static_cast<std::size_t>(bones));
    std::vector<double> amp(static_cast<std::size_t>(bones));
    for (int b = 0; b < bones; ++b) {
      Eigen::Vector3d a(gauss(rng), gauss(rng), gauss(rng));
      const Eigen::Vector3d& rest = topo.rest_directions()[static_cast<std::size_t>(b)];
      a -= a.dot(rest) * rest;
      axes[static_cast<std::size_t>(b)] = a.normalized();
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      amp[static_cast<std::size_t>(b)] = sign * (0.15 + 0.45 * unit(rng));
    }
    const double orbit_radius = 0.2 + 0.2 * unit(rng);
    const double orbit_phase = 2.0 * std::numbers::pi * unit(rng);
    const double orbit_speed = 2.0 * std::numbers::pi / (15.0 + 10.0 * unit(rng));

    DanceClip clip;
    clip.id = "synth_" + std::to_string(c);
    clip.genre = "synthetic";
    clip.split = (c % 5 == 4) ? "test" : "train";
    clip.pose.fps = cfg.fps;
    clip.pose.line_vectors.resize(3 * bones, frames);
    clip.pose.root = Eigen::Matrix3Xd(3, frames);
    for (int f = 0; f < frames; ++f) {
      const double t = f / cfg.fps;
      const double phase = (t - offset) / period;
      for (int b = 0; b < bones; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        const double angle = amp[bi] * std::cos(std::numbers::pi * phase);
        const Eigen::Vector3d dir = Eigen::AngleAxisd(angle, axes[bi]) * topo.rest_directions()[bi];
        clip.pose.line_vectors.block<3, 1>(3 * b, f) = dir.normalized();
      }
      const double a = orbit_phase + orbit_speed * t;
      clip.pose.root->col(f) = Eigen::Vector3d(orbit_radius * std::cos(a), 0.95, orbit_radius * std::sin(a));
    }
    clip.audio = std::move(audio);
    clips.push_back(std::move(clip));
    if (truth) truth->push_back(std::move(info));
  }
  return clips;
}

// ---- directory io -----------------------------------------------------------------

void save_dataset(const fs::path& dir, const std::vector<DanceClip>& clips, const SkeletonTopology& topo) {
  fs::create_directories(dir / "motions");
  fs::create_directories(dir / "audio");
  nlohmann::json manifest = {{"clips", nlohmann::json::array()}};
  for (const auto& clip : clips) {
    const std::string motion = "motions/" + clip.id + ".json";
    const std::string audio = "audio/" + clip.id + ".wav";
    save_motion(dir / motion, clip.pose, topo);
    write_wav(dir / audio, clip.audio, WavEncoding::Float32);
    manifest["clips"].push_back(
        {{"id", clip.id}, {"motion", motion}, {"audio", audio}, {"split", clip.split}, {"genre", clip.genre}});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

std::vector<DanceClip> load_aist_dir(const fs::path& dir, SkeletonTopology* topo) {
  const fs::path manifest_path = dir / "manifest.json";
  require(fs::exists(manifest_path), ErrorKind::ManifestError, "no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ManifestError, manifest_path.string() + ": " + e.what());
  }
  require(manifest.is_object() && manifest.contains("clips") && manifest["clips"].is_array(),
          ErrorKind::ManifestError, manifest_path.string() + ": expected {\"clips\": [...]}");

  std::vector<DanceClip> clips;
  for (const auto& entry : manifest["clips"]) {
    require(entry.is_object() && entry.contains("motion") && entry.contains("audio"), ErrorKind::ManifestError,
            "manifest entry without motion/audio: " + entry.dump());
    const std::string motion = entry["motion"].get<std::string>();
    const std::string audio = entry["audio"].get<std::string>();
    const std::string name = entry.value("id", fs::path(motion).stem().string());
    require(fs::exists(dir / motion), ErrorKind::ManifestError, "entry " + name + ": missing motion file " + motion);
    require(fs::exists(dir / audio), ErrorKind::ManifestError, "entry " + name + ": missing audio file " + audio);
    MotionClip mc = load_motion(dir / motion);
    require(mc.pose.root.has_value(), ErrorKind::FormatError, motion + ": motion has no root trajectory");
    if (topo) *topo = mc.topology;
    DanceClip clip;
    clip.id = name;
    clip.pose = std::move(mc.pose);
    clip.audio = read_wav(dir / audio);
    clip.split = entry.value("split", "train");
    clip.genre = entry.value("genre", "");
    require(clip.split == "train" || clip.split == "test", ErrorKind::ManifestError,
            "entry " + name + ": split must be train or test");
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ---- normalization ----------------------------------------------------------------

FeatureStats FeatureStats::fit(const std::vector<TrainingSample>& samples) {
  require(!samples.empty(), ErrorKind::DegenerateCorpus, "cannot fit feature statistics on no samples");
  const auto rows = samples.front().features.mfcc.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows), sq = Eigen::VectorXd::Zero(rows);
  double n = 0.0;
  for (const auto& s : samples) {
    sum += s.features.mfcc.rowwise().sum();
    sq += s.features.mfcc.array().square().matrix().rowwise().sum();
    n += static_cast<double>(s.features.mfcc.cols());
  }
  FeatureStats st;
  st.mfcc_mean = sum / n;
  st.mfcc_scale = (sq / n - st.mfcc_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-3);
  return st;
}

AudioFeatureSet FeatureStats::apply(const AudioFeatureSet& feats) const {
  require(feats.mfcc.rows() == mfcc_mean.size(), ErrorKind::ShapeMismatch, "MFCC width differs from statistics");
  AudioFeatureSet out = feats;
  out.mfcc = ((feats.mfcc.colwise() - mfcc_mean).array().colwise() / mfcc_scale.array()).matrix();
  return out;
}

nlohmann::json FeatureStats::to_json() const {
  return {{"mfcc_mean", std::vector<double>(mfcc_mean.data(), mfcc_mean.data() + mfcc_mean.size())},
          {"mfcc_scale", std::vector<double>(mfcc_scale.data(), mfcc_scale.data() + mfcc_scale.size())}};
}

FeatureStats FeatureStats::from_json(const nlohmann::json& doc) {
  const auto mean = doc.at("mfcc_mean").get<std::vector<double>>();
  const auto scale = doc.at("mfcc_scale").get<std::vector<double>>();
  require(mean.size() == scale.size(), ErrorKind::FormatError, "feature statistics widths differ");
  FeatureStats st;
  st.mfcc_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  st.mfcc_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  return st;
}

}  // namespace groovesynth
