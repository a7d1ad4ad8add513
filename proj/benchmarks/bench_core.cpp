#include <benchmark/benchmark.h>

#include <random>

#include "groovesynth/audiofeat.hpp"
#include "groovesynth/bps.hpp"
#include "groovesynth/dataset.hpp"
#include "groovesynth/losses.hpp"
#include "groovesynth/metrics.hpp"
#include "groovesynth/rps.hpp"

namespace gs = groovesynth;
namespace nn = groovesynth::nn;

namespace {

const gs::SkeletonTopology& topo() {
  static const gs::SkeletonTopology t = gs::SkeletonTopology::smpl24();
  return t;
}

const gs::TrainingSample& sample() {
  static const gs::TrainingSample s = [] {
    const auto clips = gs::synth_dataset(1, 1, topo());
    return gs::window_clip(clips.front(), topo(), {}).front();
  }();
  return s;
}

Eigen::MatrixXd random(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void BM_ExtractFeatures(benchmark::State& state) {
  const auto clip = gs::synth_dataset(1, 2, topo()).front().audio;
  for (auto _ : state) benchmark::DoNotOptimize(gs::extract_features(clip, 10.0, 20));
}
BENCHMARK(BM_ExtractFeatures)->Unit(benchmark::kMillisecond);

void BM_BpsForward(benchmark::State& state) {
  const gs::BpsModel model(gs::BpsConfig::desk(), topo());
  const auto input = gs::make_bps_input(sample().features, sample().sets, sample().poses, 3);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(gs::bps_forward(model, input));
}
BENCHMARK(BM_BpsForward)->Unit(benchmark::kMillisecond);

void BM_BpsForwardBackward(benchmark::State& state) {
  const gs::BpsModel model(gs::BpsConfig::desk(), topo());
  const auto input = gs::make_bps_input(sample().features, sample().sets, sample().poses, 3);
  for (auto _ : state) {
    nn::sum(gs::bps_forward(model, input)).backward();
  }
}
BENCHMARK(BM_BpsForwardBackward)->Unit(benchmark::kMillisecond);

void BM_RpsForward(benchmark::State& state) {
  const gs::RpsGenerator gen(gs::RpsConfig::desk(), topo());
  const gs::RpsInput input{sample().features.mfcc, sample().features.chroma, sample().poses, sample().sets};
  std::mt19937_64 rng(1);
  const auto noise = gs::draw_noise(gen.config().noise_dim, 70, rng);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(gs::rps_generate(gen, input, noise));
}
BENCHMARK(BM_RpsForward)->Unit(benchmark::kMillisecond);

void BM_Discriminator(benchmark::State& state) {
  const gs::RpsDiscriminator disc(gs::DiscriminatorConfig::desk(), topo());
  const auto poses = nn::Tensor::constant(sample().poses);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(gs::disc_forward(disc, poses));
}
BENCHMARK(BM_Discriminator)->Unit(benchmark::kMillisecond);

void BM_SelectContrastSegment(benchmark::State& state) {
  const auto seq = random(69, 70, 3);
  const auto plan = gs::SegmentPlan::make(70, 25, 5);
  std::mt19937_64 rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(gs::select_contrast_segment(seq, plan, rng));
}
BENCHMARK(BM_SelectContrastSegment);

void BM_Fid(benchmark::State& state) {
  const auto a = random(72, state.range(0), 5);
  const auto b = random(72, state.range(0), 6);
  for (auto _ : state) benchmark::DoNotOptimize(gs::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_KineticFeatures(benchmark::State& state) {
  gs::PoseSequence pose;
  pose.line_vectors = sample().poses;
  pose.root = sample().root;
  for (auto _ : state) benchmark::DoNotOptimize(gs::kinetic_features(pose, topo()));
}
BENCHMARK(BM_KineticFeatures);

}  // namespace

// The packaged benchmark_main archive carries LTO bytecode from another GCC.
BENCHMARK_MAIN();
