#include "groovesynth/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "groovesynth/errors.hpp"
#include "groovesynth/losses.hpp"
#include "groovesynth/motion_io.hpp"

namespace groovesynth {

namespace {

using nn::Tensor;

constexpr std::uint64_t kSeedMix = 0x9E3779B97F4A7C15ULL;

nn::AdamConfig adam_config(const TrainConfig& cfg) {
  nn::AdamConfig a;
  a.lr = cfg.lr;
  a.beta1 = cfg.beta1;
  a.beta2 = cfg.beta2;
  return a;
}

template <typename T>
T read_meta(const Checkpoint& ckpt, const std::string& key) {
  try {
    return ckpt.meta.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, "checkpoint field \"" + key + "\": " + e.what());
  }
}

std::string checkpoint_stage(const Checkpoint& ckpt) { return read_meta<std::string>(ckpt, "stage"); }

Checkpoint load_stage(const std::string& path, const std::vector<std::string>& stages, const std::string& what) {
  require(!path.empty(), ErrorKind::MissingCheckpoint, what + " checkpoint path is not set");
  Checkpoint ckpt = load_checkpoint(path);
  const std::string stage = checkpoint_stage(ckpt);
  require(std::find(stages.begin(), stages.end(), stage) != stages.end(), ErrorKind::ConfigError,
          path + " is a " + stage + " checkpoint, expected " + what);
  return ckpt;
}

void check_samples(const TrainConfig& cfg, const std::vector<TrainingSample>& samples) {
  require(!samples.empty(), ErrorKind::DegenerateCorpus, "no training samples");
  for (const auto& s : samples)
    require(s.poses.cols() == cfg.window && s.sets.seed_length == cfg.seed_length, ErrorKind::ShapeMismatch,
            "sample " + s.clip_id + " does not match the configured window");
}

nlohmann::json window_meta(const TrainConfig& cfg) {
  return {{"fps", cfg.fps}, {"window", cfg.window}, {"seed_length", cfg.seed_length}, {"beat_cap", cfg.beat_cap}};
}

Checkpoint stage_checkpoint(const std::string& stage, const TrainConfig& cfg, const SkeletonTopology& topo,
                            const FeatureStats& stats, bool disable_bps) {
  Checkpoint ckpt;
  ckpt.meta["stage"] = stage;
  ckpt.meta["train_config"] = cfg;
  ckpt.meta["topology"] = topology_to_json(topo);
  ckpt.meta["feature_stats"] = stats.to_json();
  ckpt.meta["disable_bps"] = disable_bps;
  ckpt.meta["window"] = window_meta(cfg);
  return ckpt;
}

void finish_epoch(const TrainConfig& cfg, int epoch, const std::function<Checkpoint()>& snapshot,
                  TrainResult& result, const EpochCallback& on_epoch) {
  if (on_epoch) on_epoch(result.log.back());
  const bool last = epoch + 1 == cfg.epochs;
  const bool periodic = cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
  if (last || (periodic && !cfg.out.empty())) {
    result.checkpoint = snapshot();
    if (!cfg.out.empty()) save_checkpoint(cfg.out, result.checkpoint);
  }
}

LossTotals checked_totals(const LossTerms& terms, const LossWeights& w, int epoch, int batch) {
  try {
    return total_losses(terms, w);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NonFiniteLoss) throw;
    fail(ErrorKind::NonFiniteLoss,
         "epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(batch) + ": " + e.what());
  }
}

void check_finite(double value, const std::string& what, int epoch, int batch) {
  require(std::isfinite(value), ErrorKind::NonFiniteLoss,
          "epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(batch) + ": " + what + " is not finite");
}

std::vector<int> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::vector<int>> batches_of(const std::vector<int>& order, int batch_size) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
  return out;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(i) = m.col(cols[i]);
  return out;
}

// Known-pose channel: seed columns plus beat columns, zeros elsewhere.
Eigen::MatrixXd known_poses(const Eigen::MatrixXd& seed, const Eigen::MatrixXd& beats, const FrameIndexSets& sets) {
  Eigen::MatrixXd known = Eigen::MatrixXd::Zero(seed.rows(), sets.total);
  known.leftCols(sets.seed_length) = seed.leftCols(sets.seed_length);
  for (std::size_t i = 0; i < sets.nonseed_beats.size(); ++i) known.col(sets.nonseed_beats[i]) = beats.col(i);
  return known;
}

Eigen::MatrixXd scatter(const Eigen::MatrixXd& m, const std::vector<int>& cols, int total) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), total);
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(cols[i]) = m.col(i);
  return out;
}

Eigen::MatrixXd root_offsets(const Eigen::Matrix3Xd& root, const FrameIndexSets& sets) {
  Eigen::MatrixXd out(3, static_cast<Eigen::Index>(sets.repletion.size()));
  const Eigen::Vector3d anchor = root.col(sets.seed_length - 1);
  for (std::size_t i = 0; i < sets.repletion.size(); ++i) out.col(i) = root.col(sets.repletion[i]) - anchor;
  return out;
}

FrameIndexSets window_sets(const TrainConfig& cfg, bool uses_bps, std::vector<int> beats) {
  // A window needs one seed beat; the last seed frame stands in when the
  // detector found none there.
  const bool has_seed_beat = !beats.empty() && beats.front() < cfg.seed_length;
  if (!has_seed_beat) beats.insert(beats.begin(), cfg.seed_length - 1);
  FrameIndexSets sets = FrameIndexSets::build(cfg.window, cfg.seed_length, std::move(beats), cfg.beat_cap);
  return uses_bps ? sets : sets.seed_only();
}

Eigen::MatrixXd beat_poses_for(const ModelBundle& bundle, const AudioFeatureSet& normalized,
                               const FrameIndexSets& sets, const Eigen::MatrixXd& seed_poses) {
  const int rows = static_cast<int>(seed_poses.rows());
  if (!bundle.uses_bps() || sets.nonseed_beats.empty()) return Eigen::MatrixXd(rows, 0);
  require(bundle.bps() != nullptr, ErrorKind::ConfigError, "checkpoint has no beat pose model");
  const Eigen::MatrixXd known = known_poses(seed_poses, Eigen::MatrixXd(rows, 0), sets.seed_only());
  const BpsInput input = make_bps_input(normalized, sets, known, bundle.bps()->config().max_seed_beats);
  return bundle.bps()->forward(input).value();
}

WindowResult run_window(const ModelBundle& bundle, const AudioFeatureSet& normalized, const FrameIndexSets& sets,
                        const Eigen::MatrixXd& seed_poses, const Eigen::Matrix3Xd& seed_root,
                        std::mt19937_64& rng) {
  nn::NoGradGuard no_grad;
  require(bundle.rps() != nullptr, ErrorKind::ConfigError, "checkpoint has no repletion generator");
  const RpsGenerator& gen = *bundle.rps();
  const Eigen::MatrixXd beats = beat_poses_for(bundle, normalized, sets, seed_poses);
  const RpsInput input{normalized.mfcc, normalized.chroma, known_poses(seed_poses, beats, sets), sets};
  const Eigen::MatrixXd noise = draw_noise(gen.config().noise_dim, sets.total, rng);
  const RpsOutput out = gen.forward(input, noise);
  const Tensor full = assemble_full_dance(Tensor::constant(seed_poses.leftCols(sets.seed_length)),
                                          Tensor::constant(beats), out.repletion, sets);
  WindowResult result;
  result.sets = sets;
  result.poses = full.value();
  result.latents = scatter(out.latents.value(), sets.repletion, sets.total);
  Eigen::MatrixXd offsets = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(sets.repletion.size()));
  if (bundle.trajectory() != nullptr) offsets = bundle.trajectory()->predict(full, sets.repletion).value();
  result.root = assemble_root(seed_root.leftCols(sets.seed_length), offsets, sets);
  return result;
}

}  // namespace

ModelPresets model_presets(const std::string& preset, int bones, int mfcc_channels) {
  if (preset == "full")
    return {BpsConfig::full(bones, mfcc_channels), RpsConfig::full(bones, mfcc_channels),
            DiscriminatorConfig::full(bones), TrajectoryConfig::full(bones)};
  if (preset == "desk")
    return {BpsConfig::desk(bones, mfcc_channels), RpsConfig::desk(bones, mfcc_channels),
            DiscriminatorConfig::desk(bones), TrajectoryConfig::desk(bones)};
  fail(ErrorKind::ConfigError, "unknown model preset " + preset);
}

WindowConfig window_config(const TrainConfig& cfg) {
  WindowConfig w;
  w.fps = cfg.fps;
  w.window = cfg.window;
  w.seed_length = cfg.seed_length;
  w.beat_cap = cfg.beat_cap;
  if (const char* cache = std::getenv("GROOVESYNTH_CACHE"); cache != nullptr && *cache != '\0')
    w.cache_dir = std::filesystem::path(cache);
  return w;
}

std::vector<TrainingSample> load_samples(const std::vector<DanceClip>& clips, const SkeletonTopology& topo,
                                         const TrainConfig& cfg, const std::string& split, WindowStats* stats) {
  std::vector<DanceClip> chosen;
  for (const auto& c : clips)
    if (c.split == split) chosen.push_back(c);
  return window_corpus(chosen, topo, window_config(cfg), stats);
}

TrainResult train_bps(const TrainConfig& cfg, const std::vector<TrainingSample>& samples,
                      const SkeletonTopology& topo, const EpochCallback& on_epoch) {
  validate(cfg);
  check_samples(cfg, samples);
  const bool resuming = !cfg.resume.empty();
  const Checkpoint resume = resuming ? load_stage(cfg.resume, {"bps"}, "bps") : Checkpoint{};

  const FeatureStats stats =
      resuming ? FeatureStats::from_json(resume.meta.at("feature_stats")) : FeatureStats::fit(samples);
  BpsConfig mc;
  if (resuming) {
    mc = read_meta<BpsConfig>(resume, "bps_config");
  } else {
    mc = model_presets(cfg.preset, topo.bones(), static_cast<int>(samples[0].features.mfcc.rows())).bps;
    mc.seed ^= cfg.seed * kSeedMix;
  }
  BpsModel model(mc, topo);
  nn::Adam adam(model.parameters(), adam_config(cfg));
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  int start_epoch = 0;
  if (resuming) {
    resume.get_parameters("bps/", model.parameters());
    resume.get_optimizer("bps/", adam);
    restore_rng(rng, read_meta<std::string>(resume, "rng"));
    start_epoch = read_meta<int>(resume, "epoch");
    result.log = read_meta<std::vector<nlohmann::json>>(resume, "log");
  }

  std::vector<BpsInput> inputs;
  std::vector<Tensor> targets;
  for (const auto& s : samples) {
    if (s.sets.nonseed_beats.empty()) continue;
    inputs.push_back(make_bps_input(stats.apply(s.features), s.sets, s.poses, mc.max_seed_beats));
    targets.push_back(Tensor::constant(s.beat_poses()));
  }
  require(!inputs.empty(), ErrorKind::DegenerateCorpus, "no sample has beats after the seed window");

  int epoch = start_epoch;
  const auto snapshot = [&] {
    Checkpoint ckpt = stage_checkpoint("bps", cfg, topo, stats, false);
    ckpt.meta["bps_config"] = mc;
    ckpt.meta["epoch"] = epoch + 1;
    ckpt.meta["rng"] = rng_state(rng);
    ckpt.meta["log"] = result.log;
    ckpt.put_parameters("bps/", model.parameters());
    ckpt.put_optimizer("bps/", adam);
    return ckpt;
  };

  const LossWeights& w = cfg.weights;
  for (; epoch < cfg.epochs; ++epoch) {
    const auto batches = batches_of(shuffled(inputs.size(), rng), cfg.batch_size);
    double pm = 0, lm = 0, total = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (int idx : batches[b]) {
        const nn::Context ctx{&rng, nullptr};
        const Tensor pred = model.forward(inputs[idx], ctx);
        LossTerms terms;
        terms.pose_motion = pose_motion_loss(targets[idx], pred, Distance::Mse, w);
        terms.leg_motion = leg_motion_loss(targets[idx], pred, topo, w);
        const LossTotals totals = checked_totals(terms, w, epoch, static_cast<int>(b));
        totals.bps.backward();
        pm += terms.pose_motion.item();
        lm += terms.leg_motion.item();
        total += totals.bps.item();
      }
      adam.step(1.0 / static_cast<double>(batches[b].size()));
    }
    const double n = static_cast<double>(inputs.size());
    result.log.push_back(
        {{"epoch", epoch + 1}, {"samples", inputs.size()}, {"pose_motion", pm / n}, {"leg_motion", lm / n},
         {"total", total / n}});
    finish_epoch(cfg, epoch, snapshot, result, on_epoch);
  }
  if (cfg.epochs <= start_epoch) {
    epoch = start_epoch - 1;
    result.checkpoint = snapshot();
    if (!cfg.out.empty()) save_checkpoint(cfg.out, result.checkpoint);
  }
  return result;
}

TrainResult train_rps(const TrainConfig& cfg, const std::vector<TrainingSample>& samples,
                      const SkeletonTopology& topo, const EpochCallback& on_epoch) {
  validate(cfg);
  check_samples(cfg, samples);
  const bool resuming = !cfg.resume.empty();
  const Checkpoint resume = resuming ? load_stage(cfg.resume, {"rps"}, "rps") : Checkpoint{};
  const bool use_bps = !cfg.disable_bps;
  if (resuming)
    require(read_meta<bool>(resume, "disable_bps") == cfg.disable_bps, ErrorKind::ConfigError,
            "disable_bps differs from the resumed run");
  // Stage ordering: the beat model has to exist before repletion training.
  const Checkpoint bps_ckpt =
      (use_bps && !resuming)
          ? load_stage(cfg.bps_checkpoint, {"bps"}, "bps (train-rps needs one unless disable_bps is set)")
          : Checkpoint{};
  const Checkpoint& source = resuming ? resume : bps_ckpt;

  const FeatureStats stats = (resuming || use_bps) ? FeatureStats::from_json(source.meta.at("feature_stats"))
                                                   : FeatureStats::fit(samples);
  std::unique_ptr<BpsModel> bps;
  BpsConfig bc;
  if (use_bps) {
    bc = read_meta<BpsConfig>(source, "bps_config");
    bps = std::make_unique<BpsModel>(bc, topo);
    source.get_parameters("bps/", bps->parameters());
  }
  RpsConfig rc;
  DiscriminatorConfig dc;
  if (resuming) {
    rc = read_meta<RpsConfig>(resume, "rps_config");
    dc = read_meta<DiscriminatorConfig>(resume, "disc_config");
  } else {
    const ModelPresets p = model_presets(cfg.preset, topo.bones(), static_cast<int>(samples[0].features.mfcc.rows()));
    rc = p.rps;
    dc = p.disc;
    rc.seed ^= cfg.seed * kSeedMix;
    dc.seed ^= cfg.seed * kSeedMix;
  }
  RpsGenerator gen(rc, topo);
  RpsDiscriminator disc(dc, topo);
  nn::Adam gen_adam(gen.parameters(), adam_config(cfg));
  nn::Adam disc_adam(disc.parameters(), adam_config(cfg));
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  int start_epoch = 0;
  if (resuming) {
    resume.get_parameters("rps/", gen.parameters());
    resume.get_parameters("disc/", disc.parameters());
    resume.get_optimizer("rps/", gen_adam);
    resume.get_optimizer("disc/", disc_adam);
    restore_rng(rng, read_meta<std::string>(resume, "rng"));
    start_epoch = read_meta<int>(resume, "epoch");
    result.log = read_meta<std::vector<nlohmann::json>>(resume, "log");
    result.rtc_skipped = read_meta<int>(resume, "rtc_skipped");
  }

  // BPS is frozen, so its beat poses are computed once.
  struct Prepared {
    AudioFeatureSet features;
    FrameIndexSets sets;
    Eigen::MatrixXd generated_beats;
    Eigen::MatrixXd true_beats;
    Tensor seed;
    Tensor truth;
  };
  std::vector<Prepared> data;
  {
    nn::NoGradGuard no_grad;
    for (const auto& s : samples) {
      Prepared p;
      p.features = stats.apply(s.features);
      p.sets = use_bps ? s.sets : s.sets.seed_only();
      p.true_beats = gather(s.poses, p.sets.nonseed_beats);
      p.generated_beats = p.true_beats;
      if (use_bps && !p.sets.nonseed_beats.empty())
        p.generated_beats =
            bps->forward(make_bps_input(p.features, p.sets, s.poses, bc.max_seed_beats)).value();
      p.seed = Tensor::constant(s.seed_poses());
      p.truth = Tensor::constant(s.poses);
      data.push_back(std::move(p));
    }
  }

  int epoch = start_epoch;
  const auto snapshot = [&] {
    Checkpoint ckpt = stage_checkpoint("rps", cfg, topo, stats, cfg.disable_bps);
    if (use_bps) {
      ckpt.meta["bps_config"] = bc;
      ckpt.put_parameters("bps/", bps->parameters());
    }
    ckpt.meta["rps_config"] = rc;
    ckpt.meta["disc_config"] = dc;
    ckpt.meta["epoch"] = epoch + 1;
    ckpt.meta["rng"] = rng_state(rng);
    ckpt.meta["log"] = result.log;
    ckpt.meta["rtc_skipped"] = result.rtc_skipped;
    ckpt.put_parameters("rps/", gen.parameters());
    ckpt.put_parameters("disc/", disc.parameters());
    ckpt.put_optimizer("rps/", gen_adam);
    ckpt.put_optimizer("disc/", disc_adam);
    return ckpt;
  };

  const LossWeights& w = cfg.weights;
  const int T = cfg.window;
  const SegmentPlan plan = SegmentPlan::make(T, cfg.segment_length, cfg.segment_slide);
  std::bernoulli_distribution teacher(cfg.teacher_forcing_ratio);
  for (; epoch < cfg.epochs; ++epoch) {
    const auto batches = batches_of(shuffled(data.size(), rng), cfg.batch_size);
    double pm = 0, lm = 0, adv = 0, rtc = 0, total = 0, dloss = 0, correct = 0;
    int skipped = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Tensor> fakes;
      std::vector<RpsOutput> outputs;
      {
        std::optional<nn::NoGradGuard> frozen;
        if (cfg.freeze_generator) frozen.emplace();
        for (int idx : batches[b]) {
          const Prepared& p = data[idx];
          const bool forced = cfg.teacher_forcing_ratio > 0 && teacher(rng);
          const Eigen::MatrixXd& beats = forced ? p.true_beats : p.generated_beats;
          const RpsInput input{p.features.mfcc, p.features.chroma, known_poses(p.seed.value(), beats, p.sets),
                               p.sets};
          const Eigen::MatrixXd noise = draw_noise(rc.noise_dim, T, rng);
          const nn::Context ctx{&rng, nullptr};
          RpsOutput out = gen.forward(input, noise, ctx);
          fakes.push_back(assemble_full_dance(p.seed, Tensor::constant(beats), out.repletion, p.sets));
          outputs.push_back(std::move(out));
        }
      }
      const double n = static_cast<double>(batches[b].size());

      for (std::size_t i = 0; i < fakes.size(); ++i) {
        const Tensor p_real = disc.forward(data[batches[b][i]].truth);
        const Tensor p_fake = disc.forward(fakes[i].detach());
        const Tensor ld = discriminator_loss(p_real, p_fake);
        check_finite(ld.item(), "discriminator loss", epoch, static_cast<int>(b));
        ld.backward();
        dloss += ld.item();
        correct += (p_real.item() > 0.5 ? 1.0 : 0.0) + (p_fake.item() < 0.5 ? 1.0 : 0.0);
      }
      disc_adam.step(1.0 / n);

      if (cfg.freeze_generator) continue;
      for (std::size_t i = 0; i < fakes.size(); ++i) {
        const Prepared& p = data[batches[b][i]];
        LossTerms terms;
        terms.pose_motion = pose_motion_loss_at(p.truth, fakes[i], p.sets.repletion, Distance::SmoothL1, w);
        terms.leg_motion = leg_motion_loss(p.truth, fakes[i], topo, w);
        terms.generator = generator_loss(disc.forward(fakes[i]));
        if (!cfg.disable_rtc) {
          try {
            const auto [ref, partner] =
                select_contrast_segment(fakes[i].value(), plan, rng, cfg.fixed_reference_rtc);
            const Tensor timeline = nn::scatter_cols(outputs[i].latents, p.sets.repletion, T);
            terms.contrastive = rtc_loss(timeline, ref, partner, plan);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::TooFewSegments) throw;
            ++skipped;
          }
        }
        const LossTotals totals = checked_totals(terms, w, epoch, static_cast<int>(b));
        totals.rps_generator.backward();
        pm += terms.pose_motion.item();
        lm += terms.leg_motion.item();
        adv += terms.generator.item();
        if (terms.contrastive.defined()) rtc += terms.contrastive.item();
        total += totals.rps_generator.item();
      }
      disc.parameters().zero_grad();
      gen_adam.step(1.0 / n);
    }
    result.rtc_skipped += skipped;
    const double n = static_cast<double>(data.size());
    nlohmann::json entry = {{"epoch", epoch + 1},
                            {"samples", data.size()},
                            {"discriminator", dloss / n},
                            {"discriminator_accuracy", correct / (2.0 * n)},
                            {"rtc_skipped", skipped}};
    if (!cfg.freeze_generator) {
      entry["pose_motion"] = pm / n;
      entry["leg_motion"] = lm / n;
      entry["generator"] = adv / n;
      entry["contrastive"] = rtc / n;
      entry["total"] = total / n;
    }
    result.log.push_back(std::move(entry));
    finish_epoch(cfg, epoch, snapshot, result, on_epoch);
  }
  if (cfg.epochs <= start_epoch) {
    epoch = start_epoch - 1;
    result.checkpoint = snapshot();
    if (!cfg.out.empty()) save_checkpoint(cfg.out, result.checkpoint);
  }
  return result;
}

TrainResult train_traj(const TrainConfig& cfg, const std::vector<TrainingSample>& samples,
                       const SkeletonTopology& topo, const EpochCallback& on_epoch) {
  validate(cfg);
  check_samples(cfg, samples);
  const bool resuming = !cfg.resume.empty();
  const Checkpoint source = resuming ? load_stage(cfg.resume, {"traj"}, "traj")
                                     : load_stage(cfg.rps_checkpoint, {"rps"}, "rps (train-traj needs one)");
  const ModelBundle frozen(source);
  require(frozen.topology().bones() == topo.bones(), ErrorKind::ShapeMismatch,
          "checkpoint skeleton does not match the dataset");

  TrajectoryConfig tc;
  if (resuming) {
    tc = read_meta<TrajectoryConfig>(source, "traj_config");
  } else {
    tc = model_presets(cfg.preset, topo.bones(), static_cast<int>(samples[0].features.mfcc.rows())).traj;
    tc.seed ^= cfg.seed * kSeedMix;
  }
  TrajectoryPredictor tp(tc);
  nn::Adam adam(tp.parameters(), adam_config(cfg));
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  int start_epoch = 0;
  if (resuming) {
    source.get_parameters("traj/", tp.parameters());
    source.get_optimizer("traj/", adam);
    restore_rng(rng, read_meta<std::string>(source, "rng"));
    start_epoch = read_meta<int>(source, "epoch");
    result.log = read_meta<std::vector<nlohmann::json>>(source, "log");
  }

  // Dances come from the frozen generators with their own noise stream, so a
  // resumed run sees the same inputs.
  struct Prepared {
    Tensor dance;
    std::vector<int> frames;
    Tensor offsets;
  };
  std::vector<Prepared> data;
  {
    std::mt19937_64 noise_rng(cfg.seed ^ kSeedMix);
    for (const auto& s : samples) {
      const FrameIndexSets sets = frozen.uses_bps() ? s.sets : s.sets.seed_only();
      const WindowResult wr =
          run_window(frozen, frozen.stats().apply(s.features), sets, s.seed_poses(), s.root, noise_rng);
      if (sets.repletion.empty()) continue;
      data.push_back({Tensor::constant(wr.poses), sets.repletion, Tensor::constant(root_offsets(s.root, sets))});
    }
  }
  require(!data.empty(), ErrorKind::DegenerateCorpus, "no sample has repletion frames");

  int epoch = start_epoch;
  const auto snapshot = [&] {
    Checkpoint ckpt = stage_checkpoint("traj", cfg, topo, frozen.stats(), !frozen.uses_bps());
    ckpt.meta["window"] = source.meta.at("window");
    if (frozen.bps() != nullptr) {
      ckpt.meta["bps_config"] = frozen.bps()->config();
      ckpt.put_parameters("bps/", frozen.bps()->parameters());
    }
    ckpt.meta["rps_config"] = frozen.rps()->config();
    ckpt.put_parameters("rps/", frozen.rps()->parameters());
    ckpt.meta["traj_config"] = tc;
    ckpt.meta["epoch"] = epoch + 1;
    ckpt.meta["rng"] = rng_state(rng);
    ckpt.meta["log"] = result.log;
    ckpt.put_parameters("traj/", tp.parameters());
    ckpt.put_optimizer("traj/", adam);
    return ckpt;
  };

  const LossWeights& w = cfg.weights;
  for (; epoch < cfg.epochs; ++epoch) {
    const auto batches = batches_of(shuffled(data.size(), rng), cfg.batch_size);
    double total = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (int idx : batches[b]) {
        const Prepared& p = data[idx];
        const Tensor pred = tp.forward_teacher(p.dance, p.frames, p.offsets);
        const Tensor loss = root_translation_loss(p.offsets, pred, w);
        check_finite(loss.item(), "root translation loss", epoch, static_cast<int>(b));
        loss.backward();
        total += loss.item();
      }
      adam.step(1.0 / static_cast<double>(batches[b].size()));
    }
    const double n = static_cast<double>(data.size());
    result.log.push_back(
        {{"epoch", epoch + 1}, {"samples", data.size()}, {"root_translation", total / n}, {"total", total / n}});
    finish_epoch(cfg, epoch, snapshot, result, on_epoch);
  }
  if (cfg.epochs <= start_epoch) {
    epoch = start_epoch - 1;
    result.checkpoint = snapshot();
    if (!cfg.out.empty()) save_checkpoint(cfg.out, result.checkpoint);
  }
  return result;
}

ModelBundle::ModelBundle(const Checkpoint& ckpt)
    : topo_(topology_from_json(ckpt.meta.contains("topology") ? ckpt.meta.at("topology") : nlohmann::json{},
                               "checkpoint topology")),
      stats_(FeatureStats::from_json(read_meta<nlohmann::json>(ckpt, "feature_stats"))),
      cfg_(read_meta<TrainConfig>(ckpt, "train_config")) {
  const auto window = read_meta<nlohmann::json>(ckpt, "window");
  try {
    cfg_.fps = window.at("fps").get<double>();
    cfg_.window = window.at("window").get<int>();
    cfg_.seed_length = window.at("seed_length").get<int>();
    cfg_.beat_cap = window.at("beat_cap").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("checkpoint window settings: ") + e.what());
  }
  cfg_.disable_bps = read_meta<bool>(ckpt, "disable_bps");
  if (ckpt.meta.contains("bps_config")) {
    bps_ = std::make_unique<BpsModel>(read_meta<BpsConfig>(ckpt, "bps_config"), topo_);
    ckpt.get_parameters("bps/", bps_->parameters());
  }
  if (ckpt.meta.contains("rps_config")) {
    rps_ = std::make_unique<RpsGenerator>(read_meta<RpsConfig>(ckpt, "rps_config"), topo_);
    ckpt.get_parameters("rps/", rps_->parameters());
  }
  if (ckpt.meta.contains("traj_config")) {
    traj_ = std::make_unique<TrajectoryPredictor>(read_meta<TrajectoryConfig>(ckpt, "traj_config"));
    ckpt.get_parameters("traj/", traj_->parameters());
  }
}

WindowResult generate_window(const ModelBundle& bundle, const AudioFeatureSet& features,
                             const Eigen::MatrixXd& seed_poses, const Eigen::Matrix3Xd& seed_root,
                             std::mt19937_64& rng) {
  const TrainConfig& cfg = bundle.config();
  require(features.frames() == cfg.window, ErrorKind::ShapeMismatch, "features do not span one window");
  require(seed_poses.cols() >= cfg.seed_length && seed_root.cols() >= cfg.seed_length, ErrorKind::TooShortSeed,
          "seed shorter than " + std::to_string(cfg.seed_length) + " frames");
  const FrameIndexSets sets = window_sets(cfg, bundle.uses_bps(), features.beats);
  return run_window(bundle, bundle.stats().apply(features), sets, seed_poses, seed_root, rng);
}

BeatGeneration generate_beats(const ModelBundle& bundle, const AudioFeatureSet& features,
                              const Eigen::MatrixXd& seed_poses) {
  const TrainConfig& cfg = bundle.config();
  require(bundle.bps() != nullptr, ErrorKind::ConfigError, "checkpoint has no beat pose model");
  require(seed_poses.cols() >= cfg.seed_length, ErrorKind::TooShortSeed,
          "seed shorter than " + std::to_string(cfg.seed_length) + " frames");
  nn::NoGradGuard no_grad;
  BeatGeneration out;
  out.sets = window_sets(cfg, true, features.beats);
  out.poses = beat_poses_for(bundle, bundle.stats().apply(features), out.sets, seed_poses);
  return out;
}

GenerationResult generate(const ModelBundle& bundle, const AudioClip& audio, const PoseSequence& seed,
                          std::uint64_t seed_value) {
  const TrainConfig& cfg = bundle.config();
  const int T = cfg.window;
  const int TS = cfg.seed_length;
  const double fps = cfg.fps;
  require(audio.duration() * fps + 1e-9 >= T, ErrorKind::TooShortAudio,
          "audio is " + std::to_string(audio.duration()) + " s, one window needs " + std::to_string(T / fps) + " s");
  require(seed.frames() >= TS, ErrorKind::TooShortSeed,
          "seed motion has " + std::to_string(seed.frames()) + " frames, need " + std::to_string(TS));
  require(seed.root.has_value(), ErrorKind::MissingRoot, "seed motion has no root trajectory");
  require(seed.bones() == bundle.topology().bones(), ErrorKind::ShapeMismatch,
          "seed skeleton does not match the checkpoint");
  require(std::abs(seed.fps - fps) < 1e-9, ErrorKind::ShapeMismatch,
          "seed motion is at " + std::to_string(seed.fps) + " fps, expected " + std::to_string(fps));

  const int L = static_cast<int>(std::floor(audio.duration() * fps + 1e-9));
  GenerationResult result;
  result.pose.fps = fps;
  result.pose.line_vectors = Eigen::MatrixXd::Zero(seed.line_vectors.rows(), L);
  result.pose.root = Eigen::Matrix3Xd::Zero(3, L);
  Eigen::Matrix3Xd& root = *result.pose.root;

  const WindowConfig wc = window_config(cfg);
  const double per_frame = audio.sample_rate / fps;
  std::mt19937_64 rng(seed_value);
  for (int start = 0;;) {
    const AudioClip part = slice(audio, static_cast<std::size_t>(std::llround(start * per_frame)),
                                 static_cast<std::size_t>(std::llround(T * per_frame)));
    AudioFeatureSet feats;
    feats.fps = fps;
    feats.mfcc = extract_mfcc(part, fps, wc.n_mfcc, wc.audio);
    feats.chroma = extract_chroma(part, fps, wc.audio);
    try {
      feats.beats = detect_beats(part, fps, cfg.beat_cap, wc.audio);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoBeatsFound) throw;
    }
    const Eigen::MatrixXd seed_poses =
        start == 0 ? Eigen::MatrixXd(seed.line_vectors.leftCols(TS))
                   : Eigen::MatrixXd(result.pose.line_vectors.middleCols(start, TS));
    const Eigen::Matrix3Xd seed_root =
        start == 0 ? Eigen::Matrix3Xd(seed.root->leftCols(TS)) : Eigen::Matrix3Xd(root.middleCols(start, TS));
    const WindowResult w = generate_window(bundle, feats, seed_poses, seed_root, rng);

    const int first = start == 0 ? 0 : TS;
    result.pose.line_vectors.middleCols(start + first, T - first) = w.poses.rightCols(T - first);
    root.middleCols(start + first, T - first) = w.root.rightCols(T - first);
    for (int b : feats.beats)
      if (b >= first) result.music_beats.push_back(start + b);
    result.window_starts.push_back(start);
    if (start + T >= L) break;
    start = std::min(start + T - TS, L - T);
  }
  return result;
}

namespace {

struct Corpus {
  std::vector<PoseSequence> poses;
  std::vector<std::vector<int>> beats;
  std::vector<bool> has_beats;
  std::optional<SkeletonTopology> topo;
};

Corpus load_corpus(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::ManifestError, dir.string() + " is not a directory");
  Corpus corpus;
  if (std::filesystem::exists(dir / "manifest.json")) {
    SkeletonTopology topo = SkeletonTopology::smpl24();
    for (const auto& clip : load_aist_dir(dir, &topo)) {
      corpus.poses.push_back(clip.pose);
      std::vector<int> beats;
      try {
        beats = detect_beats(clip.audio, clip.pose.fps, clip.pose.frames());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoBeatsFound) throw;
      }
      corpus.beats.push_back(std::move(beats));
      corpus.has_beats.push_back(true);
    }
    corpus.topo = topo;
    return corpus;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    require(!doc.is_discarded(), ErrorKind::FormatError, f.string() + " is not valid JSON");
    MotionClip clip = motion_from_json(doc, f.string());
    if (!corpus.topo) corpus.topo = clip.topology;
    corpus.poses.push_back(clip.pose);
    const bool has = doc.contains("music_beats");
    corpus.has_beats.push_back(has);
    corpus.beats.push_back(has ? doc.at("music_beats").get<std::vector<int>>() : std::vector<int>{});
  }
  return corpus;
}

}  // namespace

MetricsReport evaluate_dirs(const std::filesystem::path& reference, const std::filesystem::path& generated,
                            double sigma) {
  const Corpus ref = load_corpus(reference);
  const Corpus gen = load_corpus(generated);
  require(!ref.poses.empty() && !gen.poses.empty(), ErrorKind::DegenerateCorpus,
          "both corpora need at least one motion");
  std::vector<EvaluationClip> clips;
  for (std::size_t i = 0; i < gen.poses.size(); ++i) {
    require(gen.has_beats[i], ErrorKind::FormatError,
            "generated motion " + std::to_string(i) + " carries no music_beats");
    clips.push_back({gen.poses[i], gen.beats[i]});
  }
  return evaluate_corpus(ref.poses, clips, *gen.topo, sigma);
}

LatentDispersion export_latents(const ModelBundle& bundle, const std::vector<TrainingSample>& samples,
                                std::uint64_t seed_value) {
  const TrainConfig& cfg = bundle.config();
  std::mt19937_64 rng(seed_value);
  std::vector<std::string> ids;
  std::vector<Eigen::MatrixXd> latents;
  for (const auto& s : samples) {
    const WindowResult w = generate_window(bundle, s.features, s.seed_poses(), s.root, rng);
    ids.push_back(s.clip_id + "@" + std::to_string(s.start));
    latents.push_back(w.latents);
  }
  return latent_dispersion_export(ids, latents, SegmentPlan::make(cfg.window, cfg.segment_length, cfg.segment_slide));
}

}  // namespace groovesynth
