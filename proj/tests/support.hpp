#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mtrack/audio_io.hpp"
#include "mtrack/dtw.hpp"
#include "mtrack/features.hpp"

namespace mtrack::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

FeatureSequence seq1d(const std::vector<float>& values, FeatureKind kind = FeatureKind::SemitoneSpectrum);

struct BruteDtw {
  double cost = 0.0;
  std::size_t paths = 0;  // number of monotone paths enumerated
  std::vector<std::vector<IndexPair>> optimal;
};

// Walks every monotone (1,0)/(0,1)/(1,1) path from (1,1) to (P,Q), trying
// diagonal, then (p+1,q), then (p,q+1) at each cell. optimal keeps that
// order, so optimal.front() is the path the tie rule should pick.
BruteDtw brute_force_dtw(const FeatureSequence& x, const FeatureSequence& y);

// Hann window, zero padding to fft_size, direct DFT per bin, bins pooled by
// the +-50 cent rule. Same scale as SemitoneAnalyzer.
std::vector<double> naive_semitone_bands(std::span<const float> frame, int sample_rate, std::size_t fft_size);

AudioClip sine_clip(double hz, double duration_ms, double amplitude = 0.5, int sample_rate = kDefaultSampleRate);

// Validates the subset of JSON Schema the packet schema uses: type, required,
// properties, additionalProperties, enum, minimum, maximum, maxLength.
bool schema_valid(const nlohmann::json& schema, const nlohmann::json& value, std::string* why = nullptr);

nlohmann::json load_packet_schema();

double percentile(std::vector<double> v, double p);

}  // namespace mtrack::test
