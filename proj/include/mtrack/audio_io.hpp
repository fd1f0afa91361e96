#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace mtrack {

inline constexpr int kDefaultSampleRate = 44100;
inline constexpr double kDefaultFramePeriodMs = 20.0;
inline constexpr double kDefaultWindowMs = 64.0;

/// Mono audio with samples in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kDefaultSampleRate;

  double duration_ms() const {
    return sample_rate > 0 ? 1000.0 * static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

enum class WavEncoding { Pcm16, Float32 };

/// Reads a RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit, 1 or 2 channels).
/// Stereo input is mixed down by averaging the two channels.
AudioClip decode_wav(const std::filesystem::path& path);

/// Writes a mono WAV file. Samples are clipped to [-1, 1] for PCM output.
void encode_wav(const std::filesystem::path& path, const AudioClip& clip,
                WavEncoding encoding = WavEncoding::Pcm16);

/// Stereo variant used by fixtures and tests.
void encode_wav_stereo(const std::filesystem::path& path, std::span<const float> left,
                       std::span<const float> right, int sample_rate,
                       WavEncoding encoding = WavEncoding::Pcm16);

std::size_t hop_samples(int sample_rate, double frame_period_ms);
std::size_t window_samples(int sample_rate, double window_ms);

/// Fixed-period analysis frames over a clip. Frames are views into shared
/// sample storage; frame i starts at sample i * hop_size and the tail that
/// does not fill a whole window is dropped.
class FrameStream {
 public:
  FrameStream() = default;
  FrameStream(std::shared_ptr<const std::vector<float>> samples, int sample_rate,
              double frame_period_ms, std::size_t window_size, std::size_t hop_size);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t start(std::size_t i) const { return i * hop_size_; }
  std::span<const float> frame(std::size_t i) const;

  int sample_rate() const { return sample_rate_; }
  double frame_period_ms() const { return frame_period_ms_; }
  std::size_t window_size() const { return window_size_; }
  std::size_t hop_size() const { return hop_size_; }

 private:
  std::shared_ptr<const std::vector<float>> samples_;
  int sample_rate_ = kDefaultSampleRate;
  double frame_period_ms_ = kDefaultFramePeriodMs;
  std::size_t window_size_ = 0;
  std::size_t hop_size_ = 0;
  std::size_t count_ = 0;
};

FrameStream frame(const AudioClip& clip, double frame_period_ms = kDefaultFramePeriodMs,
                  double window_ms = kDefaultWindowMs);

/// Append-only sample queue for live input: one producer pushes blocks of
/// samples as they arrive, one consumer pulls complete analysis windows.
/// Framing is identical to frame() on the concatenated input.
class LiveSampleQueue {
 public:
  LiveSampleQueue(int sample_rate, double frame_period_ms = kDefaultFramePeriodMs,
                  double window_ms = kDefaultWindowMs);

  void push(std::span<const float> block);
  void close();

  /// Non-blocking; returns a window when one is complete.
  std::optional<std::vector<float>> try_pop();
  /// Blocks until a window is complete or the queue is closed and drained.
  std::optional<std::vector<float>> pop();

  std::size_t window_size() const { return window_; }
  std::size_t hop_size() const { return hop_; }

 private:
  std::optional<std::vector<float>> take_locked();

  std::size_t window_;
  std::size_t hop_;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<float> pending_;
  bool closed_ = false;
};

}  // namespace mtrack
