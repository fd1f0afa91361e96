#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mtrack/audio_io.hpp"

namespace mtrack {

enum class FeatureKind : std::uint32_t {
  SemitoneSpectrum = 0,
  RectifiedSpectralDiff = 1,
  LowResSpectrum = 2,
  Chroma = 3,
};

const char* to_string(FeatureKind kind) noexcept;

// Piano range, one band per equal-tempered semitone.
inline constexpr int kLowestMidi = 21;
inline constexpr int kHighestMidi = 108;
inline constexpr std::size_t kSemitoneBands = kHighestMidi - kLowestMidi + 1;
inline constexpr std::size_t kChromaBins = 12;

inline constexpr int kDefaultLowResTimeFactor = 8;
inline constexpr int kDefaultLowResBandFactor = 4;

/// Row-major T x dim matrix of feature vectors sampled every frame_period_ms.
class FeatureSequence {
 public:
  FeatureSequence() = default;
  FeatureSequence(FeatureKind kind, double frame_period_ms, std::size_t dim)
      : kind_(kind), frame_period_ms_(frame_period_ms), dim_(dim) {}

  static FeatureSequence from_rows(FeatureKind kind, double frame_period_ms,
                                   const std::vector<std::vector<float>>& rows);

  FeatureKind kind() const { return kind_; }
  double frame_period_ms() const { return frame_period_ms_; }
  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return rows() == 0; }

  std::span<const float> row(std::size_t t) const { return {data_.data() + t * dim_, dim_}; }
  std::span<float> row(std::size_t t) { return {data_.data() + t * dim_, dim_}; }

  void append_row(std::span<const float> values);
  void reserve_rows(std::size_t n) { data_.reserve(n * dim_); }
  /// Copy of rows [begin, end).
  FeatureSequence slice(std::size_t begin, std::size_t end) const;

  const std::vector<float>& data() const { return data_; }

  bool operator==(const FeatureSequence&) const = default;

 private:
  FeatureKind kind_ = FeatureKind::SemitoneSpectrum;
  double frame_period_ms_ = kDefaultFramePeriodMs;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// Band layout of the semitone filterbank for a given sample rate and window.
struct SemitoneLayout {
  int sample_rate = kDefaultSampleRate;
  std::size_t window_size = 0;
  std::size_t fft_size = 0;
  // Half-open FFT bin range [first, last) for each band.
  std::vector<std::size_t> band_first;
  std::vector<std::size_t> band_last;
};

/// Chooses the transform length so that even the narrowest (lowest) band
/// contains at least one bin centre, then assigns bins within +-50 cents of
/// each band centre.
SemitoneLayout make_semitone_layout(int sample_rate, std::size_t window_size);

double midi_to_hz(double midi);

/// Hann-windowed magnitude spectrum pooled into semitone bands. Owns its FFT
/// buffers, so one instance is single-threaded; use one per thread.
class SemitoneAnalyzer {
 public:
  SemitoneAnalyzer(int sample_rate, std::size_t window_size);
  ~SemitoneAnalyzer();
  SemitoneAnalyzer(const SemitoneAnalyzer&) = delete;
  SemitoneAnalyzer& operator=(const SemitoneAnalyzer&) = delete;
  SemitoneAnalyzer(SemitoneAnalyzer&&) noexcept;
  SemitoneAnalyzer& operator=(SemitoneAnalyzer&&) noexcept;

  const SemitoneLayout& layout() const;
  void analyze(std::span<const float> window, std::span<float> bands);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

FeatureSequence semitone_spectrum(const FrameStream& frames);
FeatureSequence rectified_spectral_difference(const FeatureSequence& spectrum);
FeatureSequence low_res_features(const FeatureSequence& spectrum,
                                 int time_factor = kDefaultLowResTimeFactor,
                                 int band_factor = kDefaultLowResBandFactor);
FeatureSequence chroma(const FrameStream& frames);
FeatureSequence chroma_from_spectrum(const FeatureSequence& spectrum);

/// Framewise feature extraction for live input. Produces exactly the rows the
/// batch functions produce on the same samples.
class StreamingFeatures {
 public:
  struct Frame {
    std::vector<float> spectrum;
    std::vector<float> diff;
    // Set every time_factor frames, once a low-resolution frame is complete.
    std::optional<std::vector<float>> low_res;
  };

  StreamingFeatures(int sample_rate, double frame_period_ms = kDefaultFramePeriodMs,
                    double window_ms = kDefaultWindowMs,
                    int low_res_time_factor = kDefaultLowResTimeFactor,
                    int low_res_band_factor = kDefaultLowResBandFactor);

  Frame push(std::span<const float> window);
  std::size_t frames_seen() const { return count_; }

 private:
  SemitoneAnalyzer analyzer_;
  int time_factor_;
  int band_factor_;
  std::vector<float> previous_;
  std::vector<double> low_res_acc_;
  std::size_t count_ = 0;
};

/// All tracking features of one recording.
struct RecordingFeatures {
  FeatureSequence spectrum;
  FeatureSequence diff;
  FeatureSequence low_res;
};

RecordingFeatures extract_recording_features(const AudioClip& clip,
                                             double frame_period_ms = kDefaultFramePeriodMs,
                                             double window_ms = kDefaultWindowMs,
                                             int low_res_time_factor = kDefaultLowResTimeFactor,
                                             int low_res_band_factor = kDefaultLowResBandFactor);

/// Binary container, little-endian: "MTFS", u32 version, u32 kind, u64 rows,
/// u64 dim, f64 frame period (ms), then rows*dim f32 values row-major.
void write_features(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_features(const std::filesystem::path& path);

}  // namespace mtrack
