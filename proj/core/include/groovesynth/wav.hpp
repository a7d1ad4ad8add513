#pragma once

#include <filesystem>
#include <vector>

namespace groovesynth {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  double sample_rate = 16000.0;

  double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

enum class WavEncoding { Pcm16, Float32 };

// Reads RIFF WAV (PCM 16-bit or IEEE float32, any channel count; channels are
// averaged to mono). Throws FormatError naming the file.
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding = WavEncoding::Pcm16);

// Band-limited (Hann-windowed sinc) resampling.
AudioClip resample(const AudioClip& clip, double target_rate);

// Samples [begin, begin + count) clamped to the clip.
AudioClip slice(const AudioClip& clip, std::size_t begin, std::size_t count);

}  // namespace groovesynth
