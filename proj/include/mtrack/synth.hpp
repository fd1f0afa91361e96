#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtrack/audio_io.hpp"
#include "mtrack/eval.hpp"
#include "mtrack/midi.hpp"
#include "mtrack/timemap.hpp"

namespace mtrack {

// Deterministic test material: a seeded duet piece, tempo warps, and audio
// renderers. Everything here depends only on its arguments.

struct Note {
  double onset_ms = 0.0;  // reference timeline
  double duration_ms = 0.0;
  int pitch = 60;
  int velocity = 90;
};

struct DuetPiece {
  double bpm = 120.0;
  int beats_per_bar = 4;
  int bars = 25;
  std::vector<Note> piano;   // the tracked (human) part
  std::vector<Note> violin;  // the counterpart
  double beat_ms() const { return 60000.0 / bpm; }
  double length_ms() const { return beat_ms() * beats_per_bar * bars; }
  /// One beat per quarter note, including the closing downbeat.
  BeatAnnotation beats() const;
};

DuetPiece make_duet_piece(std::uint32_t seed, int bars = 25, double bpm = 120.0);

/// Track 0 piano, track 1 violin (channel 1), one tempo at piece.bpm.
SmfSong to_smf(const DuetPiece& piece);

enum class Timbre { Piano, Violin, Sine };

struct RenderOptions {
  int sample_rate = kDefaultSampleRate;
  double tail_ms = 1000.0;
  double noise_level = 0.0;  // RMS of additive white noise
  std::uint32_t noise_seed = 1;
  double gain = 0.2;
};

/// Renders notes whose reference times are taken through warp (reference ms
/// to output ms). The clip runs until the last warped note end plus tail_ms.
AudioClip render_notes(const std::vector<Note>& notes, const TimeMap& warp, Timbre timbre,
                       const RenderOptions& options = {});

enum class TempoScenario { Rehearsed, Normal, Slow, Fast, Accelerando };

const char* to_string(TempoScenario s) noexcept;
TempoScenario parse_tempo_scenario(const std::string& name);

/// Reference-to-performance map with one knot per beat. The performance
/// starts lead_ms into its recording.
TimeMap scenario_warp(const DuetPiece& piece, TempoScenario scenario, std::uint32_t seed, double lead_ms);

/// Map whose slope is 1/ratio inside each segment; segments cover equal
/// shares of the reference duration. ratio > 1 means the performance is faster.
TimeMap piecewise_tempo_warp(double ref_duration_ms, const std::vector<double>& ratios, double lead_ms = 0.0);

/// Random three-note chords of 250..1000 ms spanning duration_ms.
std::vector<Note> chord_sequence(std::uint32_t seed, double duration_ms);

AudioClip silence_clip(double duration_ms, int sample_rate = kDefaultSampleRate);
AudioClip noise_clip(double duration_ms, double rms, std::uint32_t seed, int sample_rate = kDefaultSampleRate);

/// Stretches a clip in time by resampling with linear interpolation (pitch
/// shifts along with it; fine for short detector tests).
AudioClip time_stretch(const AudioClip& clip, double factor);

}  // namespace mtrack
