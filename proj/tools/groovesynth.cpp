#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "beat_plot.hpp"
#include "groovesynth/errors.hpp"
#include "groovesynth/metrics.hpp"
#include "groovesynth/motion_io.hpp"
#include "groovesynth/pipeline.hpp"

namespace fs = std::filesystem;
using namespace groovesynth;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::MissingCheckpoint:
      return kExitConfig;
    case ErrorKind::NonFiniteLoss:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::FormatError, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::FormatError, "failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(2) + "\n"); }

nlohmann::json matrix_columns(const Eigen::MatrixXd& m, int group) {
  nlohmann::json cols = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    nlohmann::json col = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); r += group) {
      std::vector<double> v(m.col(c).data() + r, m.col(c).data() + r + group);
      col.push_back(v);
    }
    cols.push_back(std::move(col));
  }
  return cols;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string checkpoint;
  std::string resume;
  std::string log;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, const std::string& checkpoint_flag) {
  cmd->add_option("--data", a.data, "dataset directory (manifest.json, motions/, audio/)")->required();
  cmd->add_option("--config", a.config, "JSON config file");
  cmd->add_option("--set", a.sets, "override, key=value with dotted keys")->take_all();
  cmd->add_option("--out", a.out, "checkpoint to write");
  if (!checkpoint_flag.empty()) cmd->add_option(checkpoint_flag, a.checkpoint, "previous stage checkpoint");
  cmd->add_option("--resume", a.resume, "checkpoint of this stage to continue from");
  cmd->add_option("--log", a.log, "per-epoch JSON lines");
}

int run_training(const std::string& stage, const TrainArgs& a) {
  TrainConfig cfg = load_config(stage, a.config, a.sets);
  if (!a.out.empty()) cfg.out = a.out;
  if (!a.resume.empty()) cfg.resume = a.resume;
  if (!a.checkpoint.empty()) (stage == "rps" ? cfg.bps_checkpoint : cfg.rps_checkpoint) = a.checkpoint;
  require(!cfg.out.empty(), ErrorKind::ConfigError, "no output checkpoint (--out or out in the config)");
  validate(cfg);

  SkeletonTopology topo = SkeletonTopology::smpl24();
  const auto clips = load_aist_dir(a.data, &topo);
  WindowStats stats;
  const auto samples = load_samples(clips, topo, cfg, "train", &stats);
  std::cerr << "windows " << stats.windows << ", dropped without seed beat " << stats.dropped_no_seed_beat
            << ", dropped without beats " << stats.dropped_no_beats << ", samples " << samples.size() << "\n";

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    require(static_cast<bool>(log), ErrorKind::ConfigError, "cannot write " + a.log);
  }
  const auto on_epoch = [&](const nlohmann::json& entry) {
    std::cerr << entry.dump() << "\n";
    if (log.is_open()) log << entry.dump() << "\n" << std::flush;
  };
  TrainResult result;
  if (stage == "bps") result = train_bps(cfg, samples, topo, on_epoch);
  if (stage == "rps") result = train_rps(cfg, samples, topo, on_epoch);
  if (stage == "traj") result = train_traj(cfg, samples, topo, on_epoch);
  nlohmann::json summary = {{"checkpoint", cfg.out}, {"epochs", cfg.epochs}, {"samples", samples.size()}};
  if (!result.log.empty()) summary["final"] = result.log.back();
  if (stage == "rps") summary["rtc_skipped"] = result.rtc_skipped;
  std::cout << summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groovesynth: music-to-dance generation with beat and repletion pose synthesis"};
  app.require_subcommand(1);

  std::string audio_path, out_path, motion_path, checkpoint_path, seed_motion_path, bvh_path, ref_dir, gen_dir;
  std::string data_dir, split = "test", stage = "full";
  double fps = 10.0, duration = 7.0, sigma = 3.0;
  int beat_cap = 20, n_mfcc = 20, clips = 8;
  std::uint64_t seed = 0;

  auto* extract = app.add_subcommand("extract", "audio features (MFCC, CENS chroma, beats) as JSON");
  extract->add_option("--audio", audio_path, "input WAV")->required();
  extract->add_option("--fps", fps, "motion frame rate");
  extract->add_option("--beat-cap", beat_cap, "maximum number of beats");
  extract->add_option("--n-mfcc", n_mfcc, "cepstral coefficients before deltas");
  extract->add_option("--out", out_path, "feature JSON")->required();

  auto* synth = app.add_subcommand("synth-data", "write a synthetic click-track dance dataset");
  synth->add_option("--out", out_path, "dataset directory")->required();
  synth->add_option("--clips", clips, "number of clips");
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--duration", duration, "clip length in seconds");

  TrainArgs bps_args, rps_args, traj_args;
  auto* train_bps_cmd = app.add_subcommand("train-bps", "train the beat pose generator");
  add_train_options(train_bps_cmd, bps_args, "");
  auto* train_rps_cmd = app.add_subcommand("train-rps", "train the repletion generator and discriminator");
  add_train_options(train_rps_cmd, rps_args, "--bps");
  auto* train_traj_cmd = app.add_subcommand("train-traj", "train the root trajectory predictor");
  add_train_options(train_traj_cmd, traj_args, "--rps");

  auto* gen = app.add_subcommand("generate", "generate a dance for an audio file");
  gen->add_option("--audio", audio_path, "input WAV")->required();
  gen->add_option("--seed-motion", seed_motion_path, "motion JSON with at least the seed window")->required();
  gen->add_option("--checkpoint", checkpoint_path, "trajectory checkpoint (or bps checkpoint with --stage bps)")
      ->required();
  gen->add_option("--out", out_path, "output motion JSON")->required();
  gen->add_option("--bvh", bvh_path, "also write BVH");
  gen->add_option("--seed", seed, "noise seed");
  gen->add_option("--stage", stage, "full or bps")->check(CLI::IsMember({"full", "bps"}));

  auto* eval = app.add_subcommand("evaluate", "FID, diversity, beat alignment and foot contact metrics");
  eval->add_option("--ref", ref_dir, "reference motions (dataset or JSON directory)")->required();
  eval->add_option("--gen", gen_dir, "generated motions")->required();
  eval->add_option("--out", out_path, "report JSON")->required();
  eval->add_option("--sigma", sigma, "beat alignment kernel width in frames");

  auto* latents = app.add_subcommand("export-latents", "repletion latent segments and their dispersion");
  latents->add_option("--data", data_dir, "dataset directory")->required();
  latents->add_option("--checkpoint", checkpoint_path, "rps or trajectory checkpoint")->required();
  latents->add_option("--split", split, "clips to use");
  latents->add_option("--seed", seed, "noise seed");
  latents->add_option("--out", out_path, "output JSON")->required();

  auto* plot = app.add_subcommand("plot-beats", "kinetic velocity with music and motion beats as SVG");
  plot->add_option("--motion", motion_path, "motion JSON")->required();
  plot->add_option("--audio", audio_path, "WAV for music beats")->required();
  plot->add_option("--out", out_path, "SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*extract) {
      require(fps > 0 && beat_cap >= 1 && n_mfcc >= 1, ErrorKind::ConfigError, "fps, beat cap and n-mfcc must be positive");
      const AudioClip clip = read_wav(audio_path);
      write_json(out_path, features_to_json(extract_features(clip, fps, beat_cap, n_mfcc)));
    } else if (*synth) {
      require(clips >= 1 && duration > 0, ErrorKind::ConfigError, "need at least one clip of positive length");
      const SkeletonTopology topo = SkeletonTopology::smpl24();
      SynthConfig sc;
      sc.duration = duration;
      std::vector<SynthTruth> truth;
      const auto data = synth_dataset(clips, seed, topo, sc, &truth);
      save_dataset(out_path, data, topo);
      nlohmann::json doc = nlohmann::json::array();
      for (std::size_t i = 0; i < data.size(); ++i)
        doc.push_back({{"id", data[i].id}, {"bpm", truth[i].bpm}, {"click_times", truth[i].click_times}});
      write_json(fs::path(out_path) / "truth.json", doc);
    } else if (*train_bps_cmd) {
      return run_training("bps", bps_args);
    } else if (*train_rps_cmd) {
      return run_training("rps", rps_args);
    } else if (*train_traj_cmd) {
      return run_training("traj", traj_args);
    } else if (*gen) {
      const ModelBundle bundle(load_checkpoint(checkpoint_path));
      const AudioClip audio = read_wav(audio_path);
      const MotionClip seed_motion = load_motion(seed_motion_path);
      if (stage == "bps") {
        const TrainConfig& cfg = bundle.config();
        require(audio.duration() * cfg.fps + 1e-9 >= cfg.window, ErrorKind::TooShortAudio,
                "audio shorter than one window");
        require(seed_motion.pose.frames() >= cfg.seed_length, ErrorKind::TooShortSeed,
                "seed motion shorter than the seed window");
        const AudioClip part =
            slice(audio, 0, static_cast<std::size_t>(std::llround(cfg.window * audio.sample_rate / cfg.fps)));
        AudioFeatureSet feats;
        feats.fps = cfg.fps;
        feats.mfcc = extract_mfcc(part, cfg.fps);
        feats.chroma = extract_chroma(part, cfg.fps);
        try {
          feats.beats = detect_beats(part, cfg.fps, cfg.beat_cap);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NoBeatsFound) throw;
        }
        const BeatGeneration beats = generate_beats(bundle, feats, seed_motion.pose.line_vectors);
        write_json(out_path, {{"fps", cfg.fps},
                              {"beats", beats.sets.beats},
                              {"seed_beats", beats.sets.seed_beats},
                              {"nonseed_beats", beats.sets.nonseed_beats},
                              {"line_vectors", matrix_columns(beats.poses, 3)}});
      } else {
        const GenerationResult result = generate(bundle, audio, seed_motion.pose, seed);
        nlohmann::json doc = motion_to_json(result.pose, bundle.topology());
        doc["music_beats"] = result.music_beats;
        doc["window_starts"] = result.window_starts;
        write_json(out_path, doc);
        if (!bvh_path.empty()) save_bvh(bvh_path, result.pose, bundle.topology());
      }
    } else if (*eval) {
      write_json(out_path, to_json(evaluate_dirs(ref_dir, gen_dir, sigma)));
    } else if (*latents) {
      const ModelBundle bundle(load_checkpoint(checkpoint_path));
      SkeletonTopology topo = SkeletonTopology::smpl24();
      const auto data = load_aist_dir(data_dir, &topo);
      const auto samples = load_samples(data, topo, bundle.config(), split);
      const LatentDispersion d = export_latents(bundle, samples, seed);
      nlohmann::json doc = {{"clips", d.clips}, {"segments", d.segments}};
      doc["dispersion"] = d.dispersion ? nlohmann::json(*d.dispersion) : nlohmann::json(nullptr);
      write_json(out_path, doc);
    } else if (*plot) {
      const MotionClip motion = load_motion(motion_path);
      const AudioClip audio = read_wav(audio_path);
      const Eigen::VectorXd velocity = kinetic_velocity(motion.pose, motion.topology);
      std::vector<int> music;
      try {
        music = detect_beats(audio, motion.pose.fps, motion.pose.frames());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoBeatsFound) throw;
      }
      write_text(out_path, tools::beat_plot_svg(velocity, motion.pose.fps, music, kinematic_beats(velocity)));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [FormatError]: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
