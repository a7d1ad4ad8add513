#include <gtest/gtest.h>

#include <filesystem>

#include "groovesynth/audiofeat.hpp"
#include "groovesynth/errors.hpp"
#include "groovesynth/wav.hpp"
#include "test_support.hpp"

namespace gs = groovesynth;
using gs::testing::click_track;
using gs::testing::tone;

namespace {

std::vector<double> click_times(double first, double period, int count) {
  std::vector<double> t;
  for (int i = 0; i < count; ++i) t.push_back(first + i * period);
  return t;
}

gs::AudioClip silence(double seconds) {
  gs::AudioClip c;
  c.samples.assign(static_cast<std::size_t>(seconds * c.sample_rate), 0.0);
  return c;
}

// Independent delta: regression over +-2 frames with clamped indices.
Eigen::MatrixXd delta_oracle(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols());
  const int last = static_cast<int>(x.cols()) - 1;
  for (int t = 0; t <= last; ++t) {
    const auto at = [&](int k) { return x.col(std::clamp(k, 0, last)); };
    d.col(t) = (1.0 * (at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
  }
  return d;
}

}  // namespace

TEST(Audio, SevenSecondsGiveSeventyFrames) {
  const auto clip = tone(7.0, 440.0);
  EXPECT_EQ(gs::extract_mfcc(clip, 10).cols(), 70);
  EXPECT_EQ(gs::extract_chroma(clip, 10).cols(), 70);
  EXPECT_EQ(gs::feature_frame_count(clip, 10), 70);
  EXPECT_EQ(gs::extract_mfcc(clip, 10).rows(), 60);
}

TEST(Audio, SilenceHasFlatMfccAndUniformChroma) {
  const auto clip = silence(2.0);
  const Eigen::MatrixXd m = gs::extract_mfcc(clip, 10);
  EXPECT_EQ(m.bottomRows(40).cwiseAbs().maxCoeff(), 0.0);
  for (Eigen::Index t = 1; t < m.cols(); ++t) EXPECT_EQ(m.col(t).head(20), m.col(0).head(20));
  const Eigen::MatrixXd c = gs::extract_chroma(clip, 10);
  EXPECT_LT((c.array() - 1.0 / std::sqrt(12.0)).abs().maxCoeff(), 1e-12);
  EXPECT_EQ(gs::testing::error_kind([&] { gs::detect_beats(clip, 10, 20); }), gs::ErrorKind::NoBeatsFound);
}

TEST(Audio, DifferentTonesGiveDifferentMfcc) {
  const Eigen::MatrixXd a = gs::extract_mfcc(tone(2.0, 440.0), 10);
  const Eigen::MatrixXd b = gs::extract_mfcc(tone(2.0, 880.0), 10);
  EXPECT_GT((a - b).norm(), 0.0);
}

TEST(Audio, DeltaRowsMatchRegressionOracle) {
  gs::AudioClip clip = click_track(4.0, click_times(0.3, 0.5, 7));
  const auto noisy = tone(4.0, 300.0, 16000.0, 0.1);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) clip.samples[i] += noisy.samples[i];
  const Eigen::MatrixXd m = gs::extract_mfcc(clip, 10);
  const Eigen::MatrixXd base = m.topRows(20);
  EXPECT_LT((m.middleRows(20, 20) - delta_oracle(base)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((m.bottomRows(20) - delta_oracle(delta_oracle(base))).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Audio, A440PeaksAtPitchClassA) {
  const Eigen::MatrixXd c = gs::extract_chroma(tone(3.0, 440.0), 10);
  for (Eigen::Index t = 0; t < c.cols(); ++t) {
    Eigen::Index arg;
    c.col(t).maxCoeff(&arg);
    EXPECT_EQ(arg, 9) << "frame " << t;
    EXPECT_NEAR(c.col(t).norm(), 1.0, 1e-6);
  }
}

TEST(Audio, ClickTrackAt120BpmWithinOneFrame) {
  const auto clip = click_track(7.0, click_times(0.25, 0.5, 14));
  const auto beats = gs::detect_beats(clip, 10, 20);
  int hits = 0;
  for (int k = 0; k < 14; ++k) {
    const double truth = (0.25 + 0.5 * k) * 10;
    for (int b : beats)
      if (std::abs(b - truth) <= 1.0) {
        ++hits;
        break;
      }
  }
  EXPECT_GE(hits, 13);
}

TEST(Audio, CapTruncatesToTwentyBeats) {
  // 25 clicks: at 120 BPM they need 12.5 s.
  const auto clip = click_track(12.75, click_times(0.25, 0.5, 25));
  EXPECT_EQ(gs::detect_beats(clip, 10, 20).size(), 20u);
  EXPECT_GT(gs::detect_beats(clip, 10, 40).size(), 20u);
}

TEST(Audio, BeatsInvariantToGain) {
  auto clip = click_track(7.0, click_times(0.35, 0.6, 11));
  const auto before = gs::detect_beats(clip, 10, 20);
  for (auto& s : clip.samples) s *= 0.5;
  EXPECT_EQ(gs::detect_beats(clip, 10, 20), before);
}

TEST(Audio, TooShortClip) {
  gs::AudioClip clip;
  clip.samples.assign(100, 0.0);
  EXPECT_EQ(gs::testing::error_kind([&] { gs::extract_mfcc(clip, 10); }), gs::ErrorKind::TooShortClip);
}

TEST(Audio, FeaturesJsonRoundTrip) {
  const auto feats = gs::extract_features(click_track(7.0, click_times(0.25, 0.5, 14)), 10, 20);
  const auto back = gs::features_from_json(nlohmann::json::parse(gs::features_to_json(feats).dump()));
  EXPECT_EQ(back.mfcc, feats.mfcc);
  EXPECT_EQ(back.chroma, feats.chroma);
  EXPECT_EQ(back.beats, feats.beats);
}

TEST(Wav, RoundTripsBothEncodings) {
  const auto dir = std::filesystem::temp_directory_path() / "groovesynth_wav_test";
  std::filesystem::create_directories(dir);
  auto clip = tone(0.5, 220.0, 22050.0);
  gs::write_wav(dir / "f.wav", clip, gs::WavEncoding::Float32);
  const auto f = gs::read_wav(dir / "f.wav");
  EXPECT_EQ(f.sample_rate, 22050.0);
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    EXPECT_EQ(f.samples[i], static_cast<double>(static_cast<float>(clip.samples[i])));
  gs::write_wav(dir / "p.wav", clip, gs::WavEncoding::Pcm16);
  const auto p = gs::read_wav(dir / "p.wav");
  for (std::size_t i = 0; i < clip.samples.size(); ++i) EXPECT_NEAR(p.samples[i], clip.samples[i], 1.0 / 32767);
  EXPECT_EQ(gs::testing::error_kind([&] { gs::read_wav(dir / "missing.wav"); }), gs::ErrorKind::FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Wav, ResamplePreservesTone) {
  const auto clip = tone(1.0, 440.0, 44100.0);
  const auto r = gs::resample(clip, 16000.0);
  EXPECT_EQ(r.samples.size(), 16000u);
  double err = 0;
  for (std::size_t i = 200; i < 15800; ++i) err = std::max(err, std::abs(r.samples[i] - 0.5 * std::sin(2 * M_PI * 440 * i / 16000.0)));
  EXPECT_LT(err, 1e-2);
}
