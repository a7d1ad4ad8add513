#include "groovesynth/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
void put_u16(std::ofstream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, path.string() + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorKind::FormatError, name + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      fail(ErrorKind::FormatError, name + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail(ErrorKind::FormatError, name + ": fmt chunk too short");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && size >= 26) format = read_u16(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }
  if (!data) fail(ErrorKind::FormatError, name + ": no data chunk");
  if (channels == 0 || rate == 0) fail(ErrorKind::FormatError, name + ": missing or invalid fmt chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    fail(ErrorKind::FormatError, name + ": unsupported encoding (format " + std::to_string(format) + ", " +
                                     std::to_string(bits) + " bits); expected PCM16 or float32");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * width;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        float v;
        const std::uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, 4);
        acc += v;
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::FormatError, path.string() + ": cannot open for writing");
  const bool pcm16 = encoding == WavEncoding::Pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  out.write("RIFF", 4);
  put_u32(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, pcm16 ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out.write("data", 4);
  put_u32(out, data_size);
  for (double s : clip.samples) {
    if (pcm16) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
    } else {
      const float v = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &v, 4);
      put_u32(out, raw);
    }
  }
  if (!out) fail(ErrorKind::FormatError, path.string() + ": write failed");
}

AudioClip resample(const AudioClip& clip, double target_rate) {
  require(clip.sample_rate > 0 && target_rate > 0, ErrorKind::FormatError, "sample rates must be positive");
  if (clip.sample_rate == target_rate) return clip;
  const double ratio = target_rate / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to the source Nyquist
  constexpr int kHalfTaps = 16;
  const double support = kHalfTaps / cutoff;
  const auto n_out = static_cast<std::size_t>(std::floor(clip.samples.size() * ratio));
  const auto n_in = static_cast<long>(clip.samples.size());
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double center = i / ratio;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(center - support)));
    const long hi = std::min<long>(n_in - 1, static_cast<long>(std::floor(center + support)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double x = (k - center) * cutoff;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * (k - center) / support);
      acc += clip.samples[k] * sinc * w * cutoff;
    }
    out.samples[i] = acc;
  }
  return out;
}

AudioClip slice(const AudioClip& clip, std::size_t begin, std::size_t count) {
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  if (begin >= clip.samples.size()) return out;
  const std::size_t end = std::min(clip.samples.size(), begin + count);
  out.samples.assign(clip.samples.begin() + static_cast<long>(begin), clip.samples.begin() + static_cast<long>(end));
  return out;
}

}  // namespace groovesynth
