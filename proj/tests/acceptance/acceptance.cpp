// Acceptance checks, one per criterion. Prints one PASS/FAIL line each and
// exits non-zero when any selected criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "groovesynth/audiofeat.hpp"
#include "groovesynth/dataset.hpp"
#include "groovesynth/errors.hpp"
#include "groovesynth/layers.hpp"
#include "groovesynth/losses.hpp"
#include "groovesynth/metrics.hpp"
#include "groovesynth/motion_io.hpp"
#include "groovesynth/pipeline.hpp"
#include "groovesynth/rps.hpp"
#include "test_support.hpp"

namespace gs = groovesynth;
namespace nn = groovesynth::nn;
namespace fs = std::filesystem;
using gs::testing::random_line_vectors;
using gs::testing::random_matrix;

namespace {

// Pinned tolerances and budgets.
constexpr double kRoundTripMeters = 1e-6;
constexpr double kUnitNorm = 1e-9;
constexpr int kPartitionInstances = 1000;
constexpr double kGeometrySeconds = 10.0;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradientSeconds = 120.0;
constexpr int kContrastInstances = 200;
constexpr int kUniformDraws = 10000;
constexpr double kUniformTolerance = 0.02;
constexpr double kFidSelf = 1e-6;
constexpr double kFidGaussian = 0.1;
constexpr double kMetricExact = 1e-9;
constexpr double kBeatRecall = 0.9;
constexpr double kDeltaTolerance = 1e-6;
constexpr double kChromaNorm = 1e-6;
constexpr double kOverfitRatio = 0.1;
constexpr double kOverfitSeconds = 1800.0;
constexpr double kAblationDrop = 0.1;
constexpr double kCliSeconds = 300.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("groovesynth_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---- 1: geometry ------------------------------------------------------------

void geometry(Outcome& out) {
  const auto start = Clock::now();
  const auto topo = gs::SkeletonTopology::smpl24();
  std::mt19937_64 rng(1);

  double worst_position = 0, worst_vector = 0;
  for (int clip = 0; clip < 50; ++clip) {
    gs::PoseSequence pose = gs::testing::rest_pose(topo, 40);
    pose.line_vectors = random_line_vectors(topo.bones(), 40, rng);
    *pose.root += random_matrix(3, 40, rng, 0.5);
    const gs::JointPositions p0 = gs::linevecs_to_positions(pose, topo);
    const gs::PoseSequence back = gs::positions_to_linevecs(p0, topo);
    const gs::JointPositions p1 = gs::linevecs_to_positions(back, topo);
    worst_position = std::max(worst_position, (p1 - p0).cwiseAbs().maxCoeff());
    worst_vector = std::max(worst_vector, (back.line_vectors - pose.line_vectors).cwiseAbs().maxCoeff());
  }
  out.check(worst_position < kRoundTripMeters, "position round trip");
  out.detail << "round-trip max " << worst_position << " m; ";

  gs::SynthConfig synth;
  synth.duration = 14.0;
  const auto clips = gs::synth_dataset(12, 2, topo, synth);
  const auto samples = gs::window_corpus(clips, topo, {});
  double worst_norm = 0;
  const auto scan = [&](const Eigen::MatrixXd& lv) {
    for (Eigen::Index t = 0; t < lv.cols(); ++t)
      for (Eigen::Index b = 0; b < lv.rows() / 3; ++b)
        worst_norm = std::max(worst_norm, std::abs(lv.block<3, 1>(3 * b, t).norm() - 1.0));
  };
  for (const auto& c : clips) scan(c.pose.line_vectors);
  for (const auto& s : samples) scan(s.poses);
  out.check(worst_norm < kUnitNorm, "unit norms");
  out.detail << "corpus norm error " << worst_norm << "; ";

  int broken = 0;
  for (int i = 0; i < kPartitionInstances; ++i) {
    const int total = std::uniform_int_distribution<int>(2, 200)(rng);
    const int seed_length = std::uniform_int_distribution<int>(1, total - 1)(rng);
    std::vector<int> beats;
    std::bernoulli_distribution pick(std::uniform_real_distribution<double>(0.02, 0.5)(rng));
    for (int f = 0; f < total; ++f)
      if (pick(rng)) beats.push_back(f);
    const int cap = std::uniform_int_distribution<int>(1, static_cast<int>(beats.size()) + 5)(rng);
    const auto sets = gs::FrameIndexSets::build(total, seed_length, beats, cap);
    const std::vector<int> kept(beats.begin(), beats.begin() + std::min<std::size_t>(cap, beats.size()));
    std::vector<int> hits(total, 0);
    for (int f = 0; f < seed_length; ++f) ++hits[f];
    for (int f : sets.nonseed_beats) ++hits[f];
    for (int f : sets.repletion) ++hits[f];
    bool ok = sets.beats == kept && std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
    for (int f : sets.seed_beats) ok = ok && f < seed_length;
    for (int f : sets.nonseed_beats) ok = ok && f >= seed_length;
    ok = ok && sets.seed_beats.size() + sets.nonseed_beats.size() == sets.beats.size();
    broken += ok ? 0 : 1;
  }
  out.check(broken == 0, "partition instances");
  out.detail << kPartitionInstances - broken << "/" << kPartitionInstances << " partitions ok; ";

  const double elapsed = seconds_since(start);
  out.check(elapsed < kGeometrySeconds, "runtime");
  out.detail << elapsed << " s";
}

// ---- 2: gradients -------------------------------------------------------------

nn::Tensor probe(const nn::Tensor& y) {
  std::mt19937_64 rng(99);
  return nn::sum(nn::mul(y, nn::Tensor::constant(random_matrix(y.rows(), y.cols(), rng))));
}

std::vector<nn::Tensor> with_params(std::vector<nn::Tensor> inputs, const nn::ParameterSet& params) {
  for (const auto& t : gs::testing::parameter_tensors(params)) inputs.push_back(t);
  return inputs;
}

void gradients(Outcome& out) {
  const auto start = Clock::now();
  const auto topo = gs::SkeletonTopology::smpl24();
  std::mt19937_64 rng(2);
  const auto var = [&](Eigen::Index r, Eigen::Index c, double s = 1.0) { return nn::Tensor(random_matrix(r, c, rng, s), true); };
  const auto positions = [](int n, double from = 0) {
    std::vector<double> p(n);
    for (int i = 0; i < n; ++i) p[i] = from + i;
    return p;
  };
  std::vector<std::pair<std::string, double>> results;
  const auto run = [&](const std::string& name, const std::function<nn::Tensor()>& f, const std::vector<nn::Tensor>& wrt) {
    results.emplace_back(name, gs::testing::gradient_error(f, wrt));
  };

  {
    nn::ParameterSet p;
    nn::Initializer init(1);
    const nn::ConvEncoder enc(p, "conv", {3, 2, {4}, {3, 3}, 1}, init);
    const auto x = var(3, 8);
    run("conv_encoder", [&] { return probe(enc(x)); }, with_params({x}, p));
  }
  {
    nn::ParameterSet p;
    nn::Initializer init(2);
    const nn::GraphPoseEncoder enc(p, "graph", {23, 1, {4}, 3, 6}, topo.bone_adjacency(), init);
    const auto x = var(69, 3, 0.5);
    const auto extra = var(1, 3);
    const Eigen::RowVectorXd keep = Eigen::RowVector3d(1, 0, 1);
    run("graph_pose_encoder", [&] { return probe(enc(x, keep, &extra)); }, with_params({x, extra}, p));
  }
  {
    nn::ParameterSet p;
    nn::Initializer init(3);
    const nn::TransformerEncoder te(p, "enc", {4, 2, 1, 8, 0.0}, 4, 2, 3, init);
    const auto x = var(4, 3);
    const auto cross = var(2, 2);
    const std::vector<double> cp{0, 2};
    run("transformer_encode", [&] { return probe(te(x, {0, 1, 5}, &cross, &cp)); }, with_params({x, cross}, p));
  }
  {
    nn::ParameterSet p;
    nn::Initializer init(4);
    const nn::TransformerDecoder one_shot(p, "dec", {4, 2, 1, 8, 0.0}, 3, 2, false, init);
    const auto memory = var(3, 4);
    run("transformer_decode", [&] { return probe(one_shot.decode(memory, positions(4), positions(3, 1))); },
        with_params({memory}, p));
  }
  {
    nn::ParameterSet p;
    nn::Initializer init(5);
    const nn::TransformerDecoder ar(p, "ar", {4, 1, 1, 8, 0.0}, 3, 2, true, init);
    const auto memory = var(3, 4);
    const auto prev = var(2, 3);
    run("transformer_decode_autoregressive",
        [&] { return probe(ar.decode_with_feedback(memory, positions(4), prev, positions(3, 1))); },
        with_params({memory, prev}, p));
  }
  {
    nn::ParameterSet p;
    nn::Initializer init(6);
    const nn::BiGRU gru(p, "gru", 2, 3, init);
    const auto x = var(2, 3);
    run("bigru", [&] { return probe(gru(x)); }, with_params({x}, p));
  }
  {
    const auto gt = nn::Tensor::constant(random_matrix(6, 8, rng));
    const auto pred = var(6, 8);
    run("pose_motion_mse", [&] { return gs::pose_motion_loss(gt, pred, gs::Distance::Mse); }, {pred});
    run("pose_motion_smooth_l1", [&] { return gs::pose_motion_loss_at(gt, pred, {1, 4, 6}, gs::Distance::SmoothL1); },
        {pred});
  }
  {
    const auto gt = nn::Tensor::constant(random_line_vectors(23, 5, rng));
    const nn::Tensor pred(random_line_vectors(23, 5, rng), true);
    run("leg_motion", [&] { return gs::leg_motion_loss(gt, pred, topo); }, {pred});
  }
  {
    const gs::SkeletonTopology chain({"root", "a", "b", "c"}, {-1, 0, 1, 2}, {1, 1, 1},
                                     {gs::LegChain{0, 1, 2}, gs::LegChain{1, 2, 3}}, {2, 3});
    const gs::RpsDiscriminator disc(gs::DiscriminatorConfig::desk(3), chain);
    const nn::Tensor real(random_line_vectors(3, 2, rng), true);
    const nn::Tensor fake(random_line_vectors(3, 2, rng), true);
    run("adversarial",
        [&] {
          const auto l = gs::adversarial_losses(disc, real, fake);
          return nn::add(l.generator, l.discriminator);
        },
        with_params({real, fake}, disc.parameters()));
  }
  {
    const auto gt = nn::Tensor::constant(random_matrix(3, 10, rng));
    const auto pred = var(3, 10);
    run("root_translation", [&] { return gs::root_translation_loss(gt, pred); }, {pred});
  }
  {
    const auto latents = var(4, 4);
    const auto plan = gs::SegmentPlan::make(5, 2, 1);
    run("contrastive", [&] { return gs::rtc_loss(latents, 0, 2, plan); }, {latents});
  }

  double worst = 0;
  for (const auto& [name, err] : results) {
    worst = std::max(worst, err);
    out.check(err < kGradTolerance, name);
  }
  out.detail << results.size() << " checks, worst rel. error " << worst << "; ";
  const double elapsed = seconds_since(start);
  out.check(elapsed < kGradientSeconds, "runtime");
  out.detail << elapsed << " s";
}

// ---- 3: contrastive segment oracle ----------------------------------------------

struct BruteSegments {
  int count = 0;
  int length = 0, slide = 0;
  bool disjoint(int a, int b) const { return std::abs(a - b) * slide >= length; }
  bool eligible(int n) const {
    for (int x = 0; x < count; ++x)
      if (disjoint(n, x)) return true;
    return false;
  }
  int partner(const Eigen::MatrixXd& seq, int n) const {
    int best = -1;
    double value = 0;
    for (int x = 0; x < count; ++x) {
      if (!disjoint(n, x)) continue;
      const Eigen::MatrixXd a = seq.middleCols(n * slide, length), b = seq.middleCols(x * slide, length);
      const double c = std::abs((a.array() * b.array()).sum()) / std::max(a.norm() * b.norm(), 1e-12);
      if (best < 0 || c < value) {
        best = x;
        value = c;
      }
    }
    return best;
  }
};

void contrast_oracle(Outcome& out) {
  std::mt19937_64 rng(3);
  int mismatches = 0, tie_instances = 0, degenerate = 0;
  for (int i = 0; i < kContrastInstances; ++i) {
    BruteSegments brute;
    brute.length = std::uniform_int_distribution<int>(2, 12)(rng);
    brute.slide = std::uniform_int_distribution<int>(1, 6)(rng);
    const int sequence = brute.length + std::uniform_int_distribution<int>(1, 12)(rng) * brute.slide -
                         std::uniform_int_distribution<int>(0, brute.slide - 1)(rng);
    brute.count = (sequence - brute.length + brute.slide - 1) / brute.slide;
    const int rows = std::uniform_int_distribution<int>(1, 6)(rng);
    Eigen::MatrixXd seq = random_matrix(rows, sequence, rng);
    const bool ties = i % 3 == 0;
    if (ties) {
      // Periodic in the slide: every segment equals every other, so the
      // partner must be the smallest disjoint index.
      for (int t = brute.slide; t < sequence; ++t) seq.col(t) = seq.col(t % brute.slide);
      ++tie_instances;
    }
    const auto plan = gs::SegmentPlan::make(sequence, brute.length, brute.slide);
    bool ok = plan.count == brute.count;
    std::vector<int> expect_eligible;
    for (int n = 0; n < brute.count; ++n)
      if (brute.eligible(n)) expect_eligible.push_back(n);
    ok = ok && plan.eligible() == expect_eligible;
    if (expect_eligible.empty()) {
      ++degenerate;
      ok = ok && gs::testing::error_kind([&] { gs::select_contrast_segment(seq, plan, rng); }) ==
                     gs::ErrorKind::TooFewSegments;
    } else {
      for (int n : expect_eligible) ok = ok && gs::select_partner(seq, plan, n) == brute.partner(seq, n);
      for (int draw = 0; draw < 5; ++draw) {
        const auto [n, partner] = gs::select_contrast_segment(seq, plan, rng);
        ok = ok && brute.eligible(n) && brute.disjoint(n, partner) && partner == brute.partner(seq, n);
      }
      if (brute.eligible(0)) ok = ok && gs::select_contrast_segment(seq, plan, rng, true).first == 0;
    }
    mismatches += ok ? 0 : 1;
  }
  out.check(mismatches == 0, "brute-force agreement");
  out.detail << kContrastInstances - mismatches << "/" << kContrastInstances << " instances agree (" << tie_instances
             << " all-tie, " << degenerate << " too few segments); ";

  for (const auto& [sequence, length, slide] : {std::tuple{55, 10, 5}, std::tuple{70, 25, 5}}) {
    const auto plan = gs::SegmentPlan::make(sequence, length, slide);
    const Eigen::MatrixXd seq = random_matrix(4, sequence, rng);
    const auto eligible = plan.eligible();
    std::map<int, int> counts;
    for (int d = 0; d < kUniformDraws; ++d) ++counts[gs::select_contrast_segment(seq, plan, rng).first];
    double worst = 0;
    for (int n : eligible) worst = std::max(worst, std::abs(counts[n] / double(kUniformDraws) - 1.0 / eligible.size()));
    out.check(worst <= kUniformTolerance && counts.size() == eligible.size(), "uniform reference choice");
    out.detail << "N_eligible=" << eligible.size() << " max freq dev " << worst << "; ";
  }
}

// ---- 4: metrics -------------------------------------------------------------------

void metric_oracles(Outcome& out) {
  const auto topo = gs::SkeletonTopology::smpl24();
  std::mt19937_64 rng(4);

  const Eigen::MatrixXd x = random_matrix(8, 60, rng);
  const double self = std::abs(gs::fid(x, x));
  out.check(self < kFidSelf, "fid(X,X)");
  const Eigen::MatrixXd a = random_matrix(1, 10000, rng);
  const Eigen::MatrixXd b = random_matrix(1, 10000, rng).array() + 1.0;
  const double gauss = gs::fid(a, b);
  out.check(std::abs(gauss - 1.0) <= kFidGaussian, "fid N(0,1) vs N(1,1)");
  out.detail << "fid self " << self << ", gaussians " << gauss << "; ";

  const double coincide = gs::beat_alignment_score({4, 14, 24, 34}, {4, 14, 24, 34, 40}, 3.0);
  const double offset = gs::beat_alignment_score({4, 14, 24, 34}, {7, 11, 27, 31}, 3.0);
  out.check(std::abs(coincide - 1.0) < kMetricExact, "BAS coincidence");
  out.check(std::abs(offset - std::exp(-0.5)) < kMetricExact, "BAS sigma offset");

  // Pose-level BAS: a clip whose kinetic velocity dips exactly on the beats.
  gs::PoseSequence pulse = gs::testing::rest_pose(topo, 40);
  // Forward differences of this root path are 0.05 (1 - 0.98 cos(2 pi t / 10)).
  for (int t = 0; t < 40; ++t) (*pulse.root)(0, t) = 0.05 * (t - 10.0 / (2 * M_PI) * std::sin(2 * M_PI * (t - 0.5) / 10.0));
  const auto pose_bas = gs::beat_alignment_score(pulse, topo, {10, 20, 30});
  out.check(std::abs(pose_bas.score - 1.0) < kMetricExact, "BAS on kinematic beats");
  out.detail << "BAS " << coincide << ", " << offset << ", pose " << pose_bas.score << "; ";

  // Feet fixed while the arms flail: COM accelerates, feet do not move.
  gs::PoseSequence still_feet = gs::testing::rest_pose(topo, 30);
  for (const char* joint : {"left_elbow", "right_elbow", "left_wrist", "right_wrist", "head"}) {
    const int bone = topo.bone_of_joint(topo.find_joint(joint));
    still_feet.line_vectors.middleRows(3 * bone, 3) = random_line_vectors(1, 30, rng);
  }
  gs::PoseSequence glide = gs::testing::rest_pose(topo, 30);
  for (int t = 0; t < 30; ++t) glide.root->col(t) += Eigen::Vector3d(0.04, 0, -0.02) * t;
  const double pfc_feet = gs::pfc(still_feet, topo), pfc_glide = gs::pfc(glide, topo);
  out.check(pfc_feet == 0.0, "PFC stationary feet");
  out.check(pfc_glide == 0.0, "PFC constant velocity");
  out.detail << "PFC " << pfc_feet << ", " << pfc_glide << "; ";

  const Eigen::MatrixXd f = random_matrix(9, 80, rng);
  double sum = 0;
  int pairs = 0;
  for (Eigen::Index i = 0; i < f.cols(); ++i)
    for (Eigen::Index j = i + 1; j < f.cols(); ++j, ++pairs) sum += (f.col(i) - f.col(j)).norm();
  const double md_err = std::abs(gs::motion_diversity(f) - sum / pairs);
  out.check(md_err < kMetricExact, "motion diversity oracle");
  out.detail << "MD error " << md_err;
}

// ---- 5: audio -------------------------------------------------------------------------

Eigen::MatrixXd regression_delta(const Eigen::MatrixXd& c) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c.rows(), c.cols());
  const auto at = [&](Eigen::Index t) { return c.col(std::clamp<Eigen::Index>(t, 0, c.cols() - 1)); };
  for (Eigen::Index t = 0; t < c.cols(); ++t) d.col(t) = (1.0 * (at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
  return d;
}

void dsp(Outcome& out) {
  std::vector<double> clicks;
  for (double t = 0.25; t < 10.0; t += 0.5) clicks.push_back(t);
  const gs::AudioClip track = gs::testing::click_track(10.0, clicks);
  const auto beats = gs::detect_beats(track, 10.0, 1000);
  int hits = 0;
  for (double t : clicks) {
    const int frame = static_cast<int>(std::lround(t * 10.0));
    hits += std::any_of(beats.begin(), beats.end(), [&](int b) { return std::abs(b - frame) <= 1; });
  }
  out.check(hits >= kBeatRecall * clicks.size(), "click recall");
  out.detail << hits << "/" << clicks.size() << " clicks within 1 frame; ";

  gs::AudioClip mix = gs::testing::tone(7.0, 330.0);
  const gs::AudioClip extra = gs::testing::click_track(7.0, clicks);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0, 0.02);
  for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += extra.samples[i] + noise(rng);
  const Eigen::MatrixXd mfcc = gs::extract_mfcc(mix, 10.0, 20);
  const Eigen::MatrixXd d1 = regression_delta(mfcc.topRows(20));
  const Eigen::MatrixXd d2 = regression_delta(d1);
  const double delta_err = std::max((mfcc.middleRows(20, 20) - d1).cwiseAbs().maxCoeff(),
                                    (mfcc.bottomRows(20) - d2).cwiseAbs().maxCoeff());
  out.check(delta_err < kDeltaTolerance, "MFCC deltas");
  out.detail << "delta error " << delta_err << "; ";

  const Eigen::MatrixXd chroma = gs::extract_chroma(mix, 10.0);
  const double norm_err = (chroma.colwise().norm().array() - 1.0).abs().maxCoeff();
  out.check(norm_err < kChromaNorm, "chroma column norms");
  out.detail << "chroma norm error " << norm_err << "; ";

  bool invariant = true;
  for (double gain : {0.05, 0.3, 2.0}) {
    gs::AudioClip scaled = track;
    for (double& s : scaled.samples) s *= gain;
    invariant = invariant && gs::detect_beats(scaled, 10.0, 1000) == beats;
  }
  out.check(invariant, "gain invariance");
}

// ---- 6: overfit ---------------------------------------------------------------------

gs::TrainConfig overfit_config(const std::string& stage) {
  gs::TrainConfig cfg = gs::default_config(stage);
  cfg.epochs = 50;
  cfg.batch_size = 1;
  cfg.lr = 1e-3;
  return cfg;
}

void overfit(Outcome& out) {
  const auto start = Clock::now();
  const fs::path dir = scratch("overfit");
  const auto topo = gs::SkeletonTopology::smpl24();
  const auto clips = gs::synth_dataset(4, 6, topo);
  const auto samples = gs::load_samples(clips, topo, overfit_config("bps"), "train");

  auto bps = overfit_config("bps");
  bps.out = (dir / "bps.ckpt").string();
  const auto bps_log = gs::train_bps(bps, samples, topo).log;
  const double b0 = bps_log.front()["pose_motion"].get<double>(), b1 = bps_log.back()["pose_motion"].get<double>();
  out.check(b1 < kOverfitRatio * b0, "BPS pose-motion loss");

  auto rps = overfit_config("rps");
  rps.bps_checkpoint = bps.out;
  const auto rps_log = gs::train_rps(rps, samples, topo).log;
  const double r0 = rps_log.front()["pose_motion"].get<double>(), r1 = rps_log.back()["pose_motion"].get<double>();
  out.check(r1 < kOverfitRatio * r0, "RPS pose-motion loss");

  const double elapsed = seconds_since(start);
  out.check(elapsed < kOverfitSeconds, "runtime");
  out.detail << samples.size() << " windows; BPS " << b0 << " -> " << b1 << " (" << 100 * b1 / b0 << "%), RPS " << r0
             << " -> " << r1 << " (" << 100 * r1 / r0 << "%); " << elapsed << " s";
  fs::remove_all(dir);
}

// ---- 7: ablation trends --------------------------------------------------------------

struct AblationScores {
  double md_k = 0;
  double bas = 0;
  double dispersion = 0;
};

AblationScores score(const gs::Checkpoint& ckpt, const std::vector<gs::TrainingSample>& test, std::uint64_t seed) {
  const gs::ModelBundle bundle(ckpt);
  const auto& topo = bundle.topology();
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd kinetic(3 * topo.joints(), test.size());
  double bas = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& s = test[i];
    const auto w = gs::generate_window(bundle, s.features, s.seed_poses(), s.root.leftCols(s.sets.seed_length), rng);
    gs::PoseSequence pose;
    pose.line_vectors = w.poses;
    pose.root = w.root;
    kinetic.col(i) = gs::kinetic_features(pose, topo);
    bas += gs::beat_alignment_score(pose, topo, s.features.beats).score / test.size();
  }
  const auto latents = gs::export_latents(bundle, test, seed);
  return {gs::motion_diversity(kinetic), bas, latents.dispersion.value_or(std::nan(""))};
}

void ablations(Outcome& out) {
  const auto start = Clock::now();
  const fs::path dir = scratch("ablation");
  const auto topo = gs::SkeletonTopology::smpl24();
  gs::SynthConfig synth;
  synth.duration = 14.0;
  auto clips = gs::synth_dataset(12, 7, topo, synth);
  for (std::size_t i = 8; i < clips.size(); ++i) clips[i].split = "test";

  const auto base = [](const std::string& stage, std::uint64_t seed, int epochs) {
    gs::TrainConfig cfg = gs::default_config(stage);
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.seed = seed;
    return cfg;
  };
  const auto train = gs::load_samples(clips, topo, base("bps", 0, 1), "train");
  // Raw features; the bundle applies the training statistics.
  const auto test = gs::load_samples(clips, topo, base("bps", 0, 1), "test");

  int md_votes = 0, bas_votes = 0, disp_votes = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto bps = base("bps", seed, 60);
    bps.out = (dir / ("bps" + std::to_string(seed) + ".ckpt")).string();
    gs::train_bps(bps, train, topo);

    auto full_cfg = base("rps", seed, 60);
    full_cfg.bps_checkpoint = bps.out;
    auto no_rtc_cfg = full_cfg;
    no_rtc_cfg.disable_rtc = true;
    auto no_bps_cfg = full_cfg;
    no_bps_cfg.disable_bps = true;
    no_bps_cfg.bps_checkpoint.clear();

    const auto full = score(gs::train_rps(full_cfg, train, topo).checkpoint, test, seed);
    const auto no_rtc = score(gs::train_rps(no_rtc_cfg, train, topo).checkpoint, test, seed);
    const auto no_bps = score(gs::train_rps(no_bps_cfg, train, topo).checkpoint, test, seed);

    const bool md_drop = no_rtc.md_k < (1.0 - kAblationDrop) * full.md_k;
    const bool bas_drop = no_bps.bas < (1.0 - kAblationDrop) * full.bas;
    const bool disp_lower = full.dispersion < no_rtc.dispersion;
    md_votes += md_drop;
    bas_votes += bas_drop;
    disp_votes += disp_lower;
    out.detail << "seed " << seed << ": MD_k full " << full.md_k << " / -rtc " << no_rtc.md_k << ", BAS full "
               << full.bas << " / -bps " << no_bps.bas << ", dispersion full " << full.dispersion << " / -rtc "
               << no_rtc.dispersion << "; ";
  }
  out.check(md_votes >= 2, "-rtc lowers MD_k by >10% (" + std::to_string(md_votes) + "/3)");
  out.check(bas_votes >= 2, "-bps lowers BAS by >10% (" + std::to_string(bas_votes) + "/3)");
  out.check(disp_votes >= 2, "RTC lowers latent dispersion (" + std::to_string(disp_votes) + "/3)");
  out.detail << "votes md " << md_votes << "/3, bas " << bas_votes << "/3, dispersion " << disp_votes << "/3; "
             << seconds_since(start) << " s";
  fs::remove_all(dir);
}

// ---- 8 and 9: command line -------------------------------------------------------------

int run(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool valid_json(const fs::path& path) {
  return !nlohmann::json::parse(read_file(path), nullptr, false).is_discarded();
}

// Dataset plus quickly trained checkpoints through the CLI.
struct CliWorkspace {
  std::string cli;
  fs::path dir;
  std::vector<std::pair<std::string, bool>> steps;

  std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }

  bool expect(const std::string& name, const std::string& args, int code) {
    const bool ok = run(q(cli) + " " + args) == code;
    steps.emplace_back(name, ok);
    return ok;
  }

  bool prepare() {
    bool ok = expect("synth-data", "synth-data --out " + q(dir / "data") + " --clips 4 --seed 3 --duration 14", 0);
    // Mark one clip as test so export-latents has a split to read.
    auto manifest = nlohmann::json::parse(read_file(dir / "data/manifest.json"));
    manifest["clips"].back()["split"] = "test";
    std::ofstream(dir / "data/manifest.json") << manifest.dump(2);
    const std::string quick = " --set epochs=2 batch_size=2 lr=0.001";
    ok = expect("train-bps", "train-bps --data " + q(dir / "data") + " --out " + q(dir / "bps.ckpt") + quick, 0) && ok;
    ok = expect("train-rps", "train-rps --data " + q(dir / "data") + " --bps " + q(dir / "bps.ckpt") + " --out " +
                                 q(dir / "rps.ckpt") + quick,
                0) &&
         ok;
    ok = expect("train-traj", "train-traj --data " + q(dir / "data") + " --rps " + q(dir / "rps.ckpt") + " --out " +
                                  q(dir / "traj.ckpt") + quick,
                0) &&
         ok;
    const auto clips = gs::load_aist_dir(dir / "data");
    gs::PoseSequence seed = clips.front().pose;
    seed.line_vectors = seed.line_vectors.leftCols(20).eval();
    seed.root = seed.root->leftCols(20).eval();
    gs::save_motion(dir / "seed.json", seed, gs::SkeletonTopology::smpl24());
    fs::copy_file(dir / "data" / ("audio/" + clips.front().id + ".wav"), dir / "song.wav");
    return ok;
  }

  std::string generate_args(const fs::path& out, int seed) const {
    return "generate --audio " + q(dir / "song.wav") + " --seed-motion " + q(dir / "seed.json") + " --checkpoint " +
           q(dir / "traj.ckpt") + " --seed " + std::to_string(seed) + " --out " + q(out);
  }

  std::string failed() const {
    std::string s;
    for (const auto& [name, ok] : steps)
      if (!ok) s += name + " ";
    return s;
  }
};

void determinism(Outcome& out, const std::string& cli) {
  CliWorkspace ws{cli, scratch("determinism"), {}};
  out.check(ws.prepare(), "training through the CLI");
  ws.expect("generate a", ws.generate_args(ws.dir / "a.json", 7), 0);
  ws.expect("generate b", ws.generate_args(ws.dir / "b.json", 7), 0);
  const std::string a = read_file(ws.dir / "a.json"), b = read_file(ws.dir / "b.json");
  out.check(ws.failed().empty(), "commands: " + ws.failed());
  out.check(!a.empty() && a == b, "byte-identical output");
  out.detail << a.size() << " bytes, identical=" << (a == b);
  fs::remove_all(ws.dir);
}

void cli_contract(Outcome& out, const std::string& cli) {
  const auto start = Clock::now();
  CliWorkspace ws{cli, scratch("cli"), {}};
  const auto& d = ws.dir;
  const auto q = [&](const fs::path& p) { return ws.q(p); };
  ws.prepare();
  const std::string data = " --data " + q(d / "data");

  // Happy paths.
  ws.expect("extract", "extract --audio " + q(d / "song.wav") + " --out " + q(d / "feats.json"), 0);
  std::ofstream(d / "bps.json") << R"({"epochs": 1, "batch_size": 2})";
  ws.expect("train-bps with config, log and resume",
            "train-bps" + data + " --config " + q(d / "bps.json") + " --set epochs=3 --resume " + q(d / "bps.ckpt") +
                " --log " + q(d / "bps.log") + " --out " + q(d / "bps2.ckpt"),
            0);
  ws.expect("generate full with bvh", ws.generate_args(d / "gen/a.json", 1) + " --bvh " + q(d / "a.bvh"), 0);
  ws.expect("generate second", ws.generate_args(d / "gen/b.json", 2), 0);
  ws.expect("generate beats only",
            "generate --audio " + q(d / "song.wav") + " --seed-motion " + q(d / "seed.json") + " --checkpoint " +
                q(d / "bps.ckpt") + " --stage bps --out " + q(d / "beats.json"),
            0);
  ws.expect("evaluate", "evaluate --ref " + q(d / "data") + " --gen " + q(d / "gen") + " --out " + q(d / "report.json"), 0);
  ws.expect("export-latents",
            "export-latents" + data + " --checkpoint " + q(d / "rps.ckpt") + " --split test --out " + q(d / "z.json"), 0);
  ws.expect("plot-beats",
            "plot-beats --motion " + q(d / "gen/a.json") + " --audio " + q(d / "song.wav") + " --out " + q(d / "b.svg"),
            0);
  bool files = true;
  for (const char* f : {"feats.json", "gen/a.json", "beats.json", "report.json", "z.json"}) files = files && valid_json(d / f);
  for (const char* f : {"bps2.ckpt", "a.bvh", "b.svg", "bps.log"}) files = files && fs::exists(d / f) && fs::file_size(d / f) > 0;
  out.check(files, "outputs written");

  // Documented error exits.
  ws.expect("missing required option -> 2", "extract --out " + q(d / "x.json"), 2);
  ws.expect("unknown verb -> 2", "dance", 2);
  ws.expect("unknown config key -> 2", "train-bps" + data + " --out " + q(d / "x.ckpt") + " --set learning_rate=1", 2);
  ws.expect("bad config value -> 2", "train-bps" + data + " --out " + q(d / "x.ckpt") + " --set epochs=many", 2);
  ws.expect("rps without bps checkpoint -> 2", "train-rps" + data + " --out " + q(d / "x.ckpt"), 2);
  ws.expect("missing checkpoint -> 2",
            "generate --audio " + q(d / "song.wav") + " --seed-motion " + q(d / "seed.json") + " --checkpoint " +
                q(d / "none.ckpt") + " --out " + q(d / "x.json"),
            2);
  ws.expect("missing dataset -> 3", "train-bps --data " + q(d / "nowhere") + " --out " + q(d / "x.ckpt"), 3);
  std::ofstream(d / "junk.wav") << "not a wav file";
  ws.expect("malformed audio -> 3", "extract --audio " + q(d / "junk.wav") + " --out " + q(d / "x.json"), 3);
  gs::AudioClip short_audio = gs::read_wav(d / "song.wav");
  short_audio.samples.resize(static_cast<std::size_t>(3 * short_audio.sample_rate));
  gs::write_wav(d / "short.wav", short_audio);
  ws.expect("audio shorter than a window -> 3",
            "generate --audio " + q(d / "short.wav") + " --seed-motion " + q(d / "seed.json") + " --checkpoint " +
                q(d / "traj.ckpt") + " --out " + q(d / "x.json"),
            3);
  ws.expect("non-finite loss -> 4", "train-bps" + data + " --out " + q(d / "x.ckpt") + " --set epochs=1 weights.pose=1e308", 4);

  out.check(ws.failed().empty(), "steps: " + ws.failed());
  const double elapsed = seconds_since(start);
  out.check(elapsed < kCliSeconds, "runtime");
  out.detail << ws.steps.size() << " commands, " << elapsed << " s";
  fs::remove_all(d);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("groovesynth acceptance checks");
  std::vector<int> selected;
  std::string cli;
  app.add_option("--criterion", selected, "criteria to run (default all)")->check(CLI::Range(1, 9));
  app.add_option("--cli", cli, "path to the groovesynth executable (criteria 8 and 9)");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"geometry suite", geometry},
      {"gradient suite", gradients},
      {"contrastive segment oracle", contrast_oracle},
      {"metric oracles", metric_oracles},
      {"audio suite", dsp},
      {"overfit smoke test", overfit},
      {"ablation trends", ablations},
      {"generate determinism", [&](Outcome& o) { determinism(o, cli); }},
      {"command line contract", [&](Outcome& o) { cli_contract(o, cli); }},
  };

  bool all = true;
  for (int n : selected) {
    Outcome outcome;
    const auto& [name, fn] = criteria[n - 1];
    if ((n == 8 || n == 9) && cli.empty()) {
      outcome.check(false, "--cli not given");
    } else {
      try {
        fn(outcome);
      } catch (const std::exception& e) {
        outcome.check(false, std::string("exception: ") + e.what());
      }
    }
    all = all && outcome.pass;
    std::cout << "criterion " << n << ": " << (outcome.pass ? "PASS" : "FAIL") << " - " << name << " - "
              << outcome.detail.str() << std::endl;
  }
  return all ? 0 : 1;
}
