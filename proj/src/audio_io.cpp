#include "mtrack/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_wav(const std::filesystem::path& path, std::span<const float> interleaved,
               int channels, int sample_rate, WavEncoding encoding) {
  const bool is_float = encoding == WavEncoding::Float32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, is_float ? kFormatFloat : kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : interleaved) {
    if (is_float) {
      std::uint32_t bitsv;
      std::memcpy(&bitsv, &s, sizeof bitsv);
      put_u32(out, bitsv);
    } else {
      const float c = std::clamp(s, -1.0f, 1.0f);
      const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0f));
      put_u16(out, static_cast<std::uint16_t>(v));
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(Errc::IoError, "short write to " + path.string());
}

}  // namespace

AudioClip decode_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(Errc::UnsupportedFormat, path.string() + " is not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw Error(Errc::MalformedFile, "truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = avail;
    }
    pos = body + len + (len & 1U);
  }

  if (format == 0) throw Error(Errc::MalformedFile, "missing fmt chunk in " + path.string());
  if (data == nullptr) throw Error(Errc::MalformedFile, "missing data chunk in " + path.string());
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(Errc::UnsupportedFormat, "only 16-bit PCM and 32-bit float WAV are supported");
  }
  if (channels < 1 || channels > 2) {
    throw Error(Errc::UnsupportedFormat, "unsupported channel count " + std::to_string(channels));
  }
  if (rate == 0) throw Error(Errc::MalformedFile, "zero sample rate");

  const std::size_t sample_bytes = bits / 8;
  const std::size_t frames = data_len / (sample_bytes * channels);
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * sample_bytes;
      float v;
      if (pcm16) {
        v = static_cast<float>(static_cast<std::int16_t>(read_u16(p))) / 32768.0f;
      } else {
        const std::uint32_t raw = read_u32(p);
        std::memcpy(&v, &raw, sizeof v);
        if (!std::isfinite(v)) v = 0.0f;
      }
      acc += v;
    }
    clip.samples[i] = std::clamp(acc / static_cast<float>(channels), -1.0f, 1.0f);
  }
  return clip;
}

void encode_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  write_wav(path, clip.samples, 1, clip.sample_rate, encoding);
}

void encode_wav_stereo(const std::filesystem::path& path, std::span<const float> left,
                       std::span<const float> right, int sample_rate, WavEncoding encoding) {
  if (left.size() != right.size()) throw Error(Errc::InvalidParam, "channel length mismatch");
  std::vector<float> interleaved(left.size() * 2);
  for (std::size_t i = 0; i < left.size(); ++i) {
    interleaved[2 * i] = left[i];
    interleaved[2 * i + 1] = right[i];
  }
  write_wav(path, interleaved, 2, sample_rate, encoding);
}

std::size_t hop_samples(int sample_rate, double frame_period_ms) {
  return static_cast<std::size_t>(std::lround(sample_rate * frame_period_ms / 1000.0));
}

std::size_t window_samples(int sample_rate, double window_ms) {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

FrameStream::FrameStream(std::shared_ptr<const std::vector<float>> samples, int sample_rate,
                         double frame_period_ms, std::size_t window_size, std::size_t hop_size)
    : samples_(std::move(samples)),
      sample_rate_(sample_rate),
      frame_period_ms_(frame_period_ms),
      window_size_(window_size),
      hop_size_(hop_size) {
  const std::size_t n = samples_ ? samples_->size() : 0;
  count_ = (n >= window_size_ && hop_size_ > 0) ? (n - window_size_) / hop_size_ + 1 : 0;
}

std::span<const float> FrameStream::frame(std::size_t i) const {
  if (i >= count_) throw Error(Errc::OutOfBounds, "frame index out of range");
  return std::span<const float>(*samples_).subspan(start(i), window_size_);
}

FrameStream frame(const AudioClip& clip, double frame_period_ms, double window_ms) {
  if (!(frame_period_ms > 0.0) || !(window_ms > 0.0)) {
    throw Error(Errc::InvalidParam, "frame period and window must be positive");
  }
  if (window_ms < frame_period_ms) {
    throw Error(Errc::InvalidParam, "window must be at least one frame period");
  }
  if (clip.sample_rate <= 0) throw Error(Errc::InvalidParam, "sample rate must be positive");
  const std::size_t hop = hop_samples(clip.sample_rate, frame_period_ms);
  const std::size_t win = window_samples(clip.sample_rate, window_ms);
  if (hop == 0) throw Error(Errc::InvalidParam, "frame period shorter than one sample");
  auto shared = std::make_shared<const std::vector<float>>(clip.samples);
  return FrameStream(std::move(shared), clip.sample_rate, frame_period_ms, win, hop);
}

LiveSampleQueue::LiveSampleQueue(int sample_rate, double frame_period_ms, double window_ms)
    : window_(window_samples(sample_rate, window_ms)), hop_(hop_samples(sample_rate, frame_period_ms)) {
  if (hop_ == 0 || window_ < hop_) throw Error(Errc::InvalidParam, "invalid live framing");
}

void LiveSampleQueue::push(std::span<const float> block) {
  {
    std::lock_guard lock(mutex_);
    pending_.insert(pending_.end(), block.begin(), block.end());
  }
  ready_.notify_one();
}

void LiveSampleQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

std::optional<std::vector<float>> LiveSampleQueue::take_locked() {
  if (pending_.size() < window_) return std::nullopt;
  std::vector<float> out(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(window_));
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(hop_));
  return out;
}

std::optional<std::vector<float>> LiveSampleQueue::try_pop() {
  std::lock_guard lock(mutex_);
  return take_locked();
}

std::optional<std::vector<float>> LiveSampleQueue::pop() {
  std::unique_lock lock(mutex_);
  ready_.wait(lock, [&] { return closed_ || pending_.size() >= window_; });
  return take_locked();
}

}  // namespace mtrack
