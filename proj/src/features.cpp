#include "mtrack/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 1)); }

template <typename T>
void put_le(std::ofstream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::ifstream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(Errc::MalformedFile, "truncated feature file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

constexpr char kMagic[4] = {'M', 'T', 'F', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

const char* to_string(FeatureKind kind) noexcept {
  switch (kind) {
    case FeatureKind::SemitoneSpectrum: return "semitone_spectrum";
    case FeatureKind::RectifiedSpectralDiff: return "rectified_spectral_diff";
    case FeatureKind::LowResSpectrum: return "low_res_spectrum";
    case FeatureKind::Chroma: return "chroma";
  }
  return "unknown";
}

FeatureSequence FeatureSequence::from_rows(FeatureKind kind, double frame_period_ms,
                                           const std::vector<std::vector<float>>& rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  FeatureSequence seq(kind, frame_period_ms, dim);
  seq.reserve_rows(rows.size());
  for (const auto& r : rows) seq.append_row(r);
  return seq;
}

void FeatureSequence::append_row(std::span<const float> values) {
  if (values.size() != dim_) throw Error(Errc::DimensionMismatch, "row width differs from sequence dim");
  data_.insert(data_.end(), values.begin(), values.end());
}

FeatureSequence FeatureSequence::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, rows());
  begin = std::min(begin, end);
  FeatureSequence out(kind_, frame_period_ms_, dim_);
  out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                   data_.begin() + static_cast<std::ptrdiff_t>(end * dim_));
  return out;
}

double midi_to_hz(double midi) { return 440.0 * std::pow(2.0, (midi - 69.0) / 12.0); }

SemitoneLayout make_semitone_layout(int sample_rate, std::size_t window_size) {
  if (sample_rate <= 0 || window_size == 0) throw Error(Errc::InvalidParam, "bad analysis geometry");
  const double half_band = std::pow(2.0, 1.0 / 24.0);
  const double lowest = midi_to_hz(kLowestMidi);
  const double narrowest = lowest * (half_band - 1.0 / half_band);
  const auto min_fft = static_cast<std::size_t>(std::ceil(sample_rate / narrowest));

  SemitoneLayout layout;
  layout.sample_rate = sample_rate;
  layout.window_size = window_size;
  layout.fft_size = next_pow2(std::max(window_size, min_fft));
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(layout.fft_size);
  const std::size_t nyquist_bin = layout.fft_size / 2;

  for (int m = kLowestMidi; m <= kHighestMidi; ++m) {
    const double centre = midi_to_hz(m);
    const double lo = centre / half_band;
    const double hi = centre * half_band;
    auto first = static_cast<std::size_t>(std::ceil(lo / bin_hz));
    auto last = static_cast<std::size_t>(std::ceil(hi / bin_hz));
    first = std::min(first, nyquist_bin + 1);
    last = std::min(last, nyquist_bin + 1);
    layout.band_first.push_back(first);
    layout.band_last.push_back(last);
  }
  return layout;
}

struct SemitoneAnalyzer::Impl {
  SemitoneLayout layout;
  std::vector<double> window;
  double scale = 0.0;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  Impl(int sample_rate, std::size_t window_size) : layout(make_semitone_layout(sample_rate, window_size)) {
    window.resize(window_size);
    double sum = 0.0;
    for (std::size_t i = 0; i < window_size; ++i) {
      // Periodic Hann.
      window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                        static_cast<double>(window_size));
      sum += window[i];
    }
    // Full-scale sinusoid peaks at its amplitude.
    scale = sum > 0.0 ? 2.0 / sum : 0.0;

    const auto n = layout.fft_size;
    std::lock_guard lock(fftw_planner_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }

  ~Impl() {
    std::lock_guard lock(fftw_planner_mutex());
    if (plan) fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
};

SemitoneAnalyzer::SemitoneAnalyzer(int sample_rate, std::size_t window_size)
    : impl_(std::make_unique<Impl>(sample_rate, window_size)) {}
SemitoneAnalyzer::~SemitoneAnalyzer() = default;
SemitoneAnalyzer::SemitoneAnalyzer(SemitoneAnalyzer&&) noexcept = default;
SemitoneAnalyzer& SemitoneAnalyzer::operator=(SemitoneAnalyzer&&) noexcept = default;

const SemitoneLayout& SemitoneAnalyzer::layout() const { return impl_->layout; }

void SemitoneAnalyzer::analyze(std::span<const float> frame, std::span<float> bands) {
  auto& im = *impl_;
  if (frame.size() != im.layout.window_size) throw Error(Errc::DimensionMismatch, "frame length");
  if (bands.size() != kSemitoneBands) throw Error(Errc::DimensionMismatch, "band count");

  const std::size_t n = im.layout.fft_size;
  for (std::size_t i = 0; i < frame.size(); ++i) im.in[i] = frame[i] * im.window[i];
  std::fill(im.in + frame.size(), im.in + n, 0.0);
  fftw_execute_dft_r2c(im.plan, im.in, im.out);

  for (std::size_t b = 0; b < kSemitoneBands; ++b) {
    double acc = 0.0;
    for (std::size_t k = im.layout.band_first[b]; k < im.layout.band_last[b]; ++k) {
      acc += std::hypot(im.out[k][0], im.out[k][1]);
    }
    bands[b] = static_cast<float>(acc * im.scale);
  }
}

FeatureSequence semitone_spectrum(const FrameStream& frames) {
  if (frames.empty()) throw Error(Errc::InvalidParam, "empty frame stream");
  SemitoneAnalyzer analyzer(frames.sample_rate(), frames.window_size());
  FeatureSequence out(FeatureKind::SemitoneSpectrum, frames.frame_period_ms(), kSemitoneBands);
  out.reserve_rows(frames.size());
  std::vector<float> row(kSemitoneBands);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    analyzer.analyze(frames.frame(i), row);
    out.append_row(row);
  }
  return out;
}

FeatureSequence rectified_spectral_difference(const FeatureSequence& spectrum) {
  if (spectrum.empty()) throw Error(Errc::InvalidParam, "empty spectrum");
  FeatureSequence out(FeatureKind::RectifiedSpectralDiff, spectrum.frame_period_ms(), spectrum.dim());
  out.reserve_rows(spectrum.rows());
  std::vector<float> row(spectrum.dim());
  for (std::size_t t = 0; t < spectrum.rows(); ++t) {
    const auto cur = spectrum.row(t);
    for (std::size_t b = 0; b < row.size(); ++b) {
      const float prev = t == 0 ? 0.0f : spectrum.row(t - 1)[b];
      row[b] = std::max(cur[b] - prev, 0.0f);
    }
    out.append_row(row);
  }
  return out;
}

FeatureSequence low_res_features(const FeatureSequence& spectrum, int time_factor, int band_factor) {
  if (time_factor < 1 || band_factor < 1) throw Error(Errc::InvalidParam, "pooling factors must be >= 1");
  const auto tf = static_cast<std::size_t>(time_factor);
  const auto bf = static_cast<std::size_t>(band_factor);
  const std::size_t out_dim = spectrum.dim() / bf;
  const std::size_t out_rows = spectrum.rows() / tf;
  FeatureSequence out(FeatureKind::LowResSpectrum, spectrum.frame_period_ms() * time_factor, out_dim);
  if (time_factor == 1 && band_factor == 1) {
    for (std::size_t t = 0; t < spectrum.rows(); ++t) out.append_row(spectrum.row(t));
    return out;
  }
  out.reserve_rows(out_rows);
  std::vector<double> acc(out_dim);
  std::vector<float> row(out_dim);
  const double norm = 1.0 / static_cast<double>(tf * bf);
  for (std::size_t r = 0; r < out_rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = r * tf; t < (r + 1) * tf; ++t) {
      const auto in = spectrum.row(t);
      for (std::size_t b = 0; b < out_dim * bf; ++b) acc[b / bf] += in[b];
    }
    for (std::size_t b = 0; b < out_dim; ++b) row[b] = static_cast<float>(acc[b] * norm);
    out.append_row(row);
  }
  return out;
}

FeatureSequence chroma_from_spectrum(const FeatureSequence& spectrum) {
  if (spectrum.empty()) throw Error(Errc::InvalidParam, "empty spectrum");
  if (spectrum.dim() != kSemitoneBands) throw Error(Errc::DimensionMismatch, "expected semitone bands");
  FeatureSequence out(FeatureKind::Chroma, spectrum.frame_period_ms(), kChromaBins);
  out.reserve_rows(spectrum.rows());
  std::vector<double> acc(kChromaBins);
  std::vector<float> row(kChromaBins);
  for (std::size_t t = 0; t < spectrum.rows(); ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto in = spectrum.row(t);
    for (std::size_t b = 0; b < kSemitoneBands; ++b) acc[(kLowestMidi + b) % kChromaBins] += in[b];
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < kChromaBins; ++c) {
      row[c] = static_cast<float>(norm > 0.0 ? acc[c] / norm : 0.0);
    }
    out.append_row(row);
  }
  return out;
}

FeatureSequence chroma(const FrameStream& frames) { return chroma_from_spectrum(semitone_spectrum(frames)); }

StreamingFeatures::StreamingFeatures(int sample_rate, double frame_period_ms, double window_ms,
                                     int low_res_time_factor, int low_res_band_factor)
    : analyzer_(sample_rate, window_samples(sample_rate, window_ms)),
      time_factor_(low_res_time_factor),
      band_factor_(low_res_band_factor),
      previous_(kSemitoneBands, 0.0f),
      low_res_acc_(kSemitoneBands / static_cast<std::size_t>(std::max(low_res_band_factor, 1)), 0.0) {
  (void)frame_period_ms;
  if (time_factor_ < 1 || band_factor_ < 1) throw Error(Errc::InvalidParam, "pooling factors must be >= 1");
}

StreamingFeatures::Frame StreamingFeatures::push(std::span<const float> window) {
  Frame f;
  f.spectrum.resize(kSemitoneBands);
  analyzer_.analyze(window, f.spectrum);
  f.diff.resize(kSemitoneBands);
  for (std::size_t b = 0; b < kSemitoneBands; ++b) {
    f.diff[b] = std::max(f.spectrum[b] - previous_[b], 0.0f);
  }
  previous_ = f.spectrum;

  const auto bf = static_cast<std::size_t>(band_factor_);
  const std::size_t out_dim = low_res_acc_.size();
  for (std::size_t b = 0; b < out_dim * bf; ++b) low_res_acc_[b / bf] += f.spectrum[b];
  ++count_;
  if (count_ % static_cast<std::size_t>(time_factor_) == 0) {
    const double norm = 1.0 / static_cast<double>(static_cast<std::size_t>(time_factor_) * bf);
    std::vector<float> row(out_dim);
    for (std::size_t b = 0; b < out_dim; ++b) row[b] = static_cast<float>(low_res_acc_[b] * norm);
    f.low_res = std::move(row);
    std::fill(low_res_acc_.begin(), low_res_acc_.end(), 0.0);
  }
  return f;
}

RecordingFeatures extract_recording_features(const AudioClip& clip, double frame_period_ms,
                                             double window_ms, int low_res_time_factor,
                                             int low_res_band_factor) {
  const auto frames = frame(clip, frame_period_ms, window_ms);
  RecordingFeatures out;
  out.spectrum = semitone_spectrum(frames);
  out.diff = rectified_spectral_difference(out.spectrum);
  out.low_res = low_res_features(out.spectrum, low_res_time_factor, low_res_band_factor);
  return out;
}

void write_features(const std::filesystem::path& path, const FeatureSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq.kind()));
  put_le<std::uint64_t>(out, seq.rows());
  put_le<std::uint64_t>(out, seq.dim());
  put_le<double>(out, seq.frame_period_ms());
  for (float v : seq.data()) put_le<float>(out, v);
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error(Errc::UnsupportedFormat, "not a feature file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) throw Error(Errc::UnsupportedFormat, "unknown feature file version");
  const auto kind = get_le<std::uint32_t>(in);
  if (kind > static_cast<std::uint32_t>(FeatureKind::Chroma)) throw Error(Errc::MalformedFile, "bad kind");
  const auto rows = get_le<std::uint64_t>(in);
  const auto dim = get_le<std::uint64_t>(in);
  const auto period = get_le<double>(in);
  const std::uintmax_t payload = std::filesystem::file_size(path) - 36;
  const bool fits = dim == 0 ? payload == 0
                             : rows <= payload / sizeof(float) / dim && rows * dim * sizeof(float) == payload;
  if (!fits) {
    throw Error(Errc::MalformedFile, "feature file size does not match its header");
  }
  FeatureSequence seq(static_cast<FeatureKind>(kind), period, dim);
  std::vector<float> row(dim);
  seq.reserve_rows(rows);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (auto& v : row) v = get_le<float>(in);
    seq.append_row(row);
  }
  return seq;
}

}  // namespace mtrack
