#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtrack/audio_io.hpp"
#include "mtrack/midi.hpp"
#include "mtrack/timemap.hpp"

namespace mtrack {

inline constexpr double kLatencySampleMs = 20.0;

/// Beat times (ms) on one timeline, strictly increasing, at least two.
struct BeatAnnotation {
  std::vector<double> beats_ms;

  void validate() const;
  /// Local tempo at t from the surrounding inter-beat interval; the first and
  /// last intervals extend outward.
  double bpm_at(double t_ms) const;
  double beat_ms_at(double t_ms) const { return 60000.0 / bpm_at(t_ms); }
};

/// Plain text, one timestamp in ms per line; blank lines and '#' comments ignored.
BeatAnnotation read_beats(const std::filesystem::path& path);
void write_beats(const std::filesystem::path& path, const BeatAnnotation& beats);

struct LatencySample {
  double t_ms = 0.0;
  double latency_ms = 0.0;
  double latency_sixteenths = 0.0;
  double tempo_bpm = 0.0;
};

struct LatencySummary {
  double average_deviation_ms = 0.0;
  double max_abs_latency_ms = 0.0;
  // Offset from the first sample to the first time |latency| stays within a
  // quarter beat for two seconds; empty if that never happens.
  std::optional<double> convergence_time_ms;
  // Mean |latency| from convergence onward (whole curve when never converged).
  double steady_state_average_deviation_ms = 0.0;
};

struct LatencyCurve {
  std::vector<LatencySample> samples;
  double average_deviation_ms = 0.0;

  LatencySummary summary(double settle_ms = 2000.0, double tolerance_beats = 0.25) const;
};

/// Beat-pair map from ref_beats onto live_beats (first and last intervals are
/// extrapolated linearly for events outside the annotated span).
/// Throws BeatCountMismatch when the annotations differ in length.
MidiEventList warp_midi_to_beats(const MidiEventList& events, const BeatAnnotation& ref_beats,
                                 const BeatAnnotation& live_beats);

/// Reference-to-live map whose knots are the beat pairs.
TimeMap estimated_counterpart_map(const BeatAnnotation& ref_beats, const BeatAnnotation& live_beats);

/// Both maps take live time to reference time: `actual` is what the system
/// played, `estimated` what it should have played. At each live time t on a
/// 20 ms grid, latency = t - (time the estimated counterpart reaches the
/// reference position that actual was at). Positive means dragging.
/// Throws DomainMismatch when the live domains do not overlap.
LatencyCurve latency_curve(const TimeMap& actual, const TimeMap& estimated, const BeatAnnotation& tempo);

/// Same as latency_curve with the actual counterpart given as raw
/// (live_ms, ref_ms) samples, which may jump backward.
LatencyCurve latency_curve_from_positions(const std::vector<std::pair<double, double>>& actual,
                                          const TimeMap& estimated, const BeatAnnotation& tempo);

/// Audio-only path: chroma features of both clips, offline DTW, then
/// latency of the live clip against the estimated one on the estimated
/// timeline. Without a tempo annotation 120 BPM is assumed.
LatencyCurve chroma_dtw_latency(const AudioClip& live, const AudioClip& estimated,
                                const std::optional<BeatAnnotation>& tempo = std::nullopt);

void write_latency_csv(const std::filesystem::path& path, const LatencyCurve& curve);
std::string latency_summary_json(const LatencySummary& summary);

}  // namespace mtrack
