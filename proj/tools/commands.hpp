#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtrack/broadcast.hpp"
#include "mtrack/eval.hpp"
#include "mtrack/tracker.hpp"

namespace mtrack::cli {

enum ExitCode : int { kOk = 0, kQualityFailure = 1, kUsageOrIo = 2 };

/// Everything one tracking run needs. Relative paths are resolved against
/// the manifest's directory.
struct RunManifest {
  std::string piece_id;
  std::filesystem::path reference_midi;
  int counterpart_track = -1;  // SMF chunk index; -1 keeps every track
  std::filesystem::path rehearsed_audio;
  std::optional<std::filesystem::path> rehearsal_map;  // rehearsed -> reference CSV
  std::filesystem::path live_audio;
  std::optional<std::filesystem::path> tracker_config;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> ref_beats;
  std::optional<std::filesystem::path> live_beats;
};

RunManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

struct TrackOptions {
  bool simulate_realtime = false;
  std::optional<UdpTarget> udp_target;
  double broadcast_period_ms = 20.0;
  std::optional<std::filesystem::path> midi_out;  // raw MIDI bytes of scheduled events
  // Give up when the detector has not fired this long into the live input.
  std::optional<double> detect_timeout_ms;
};

struct PositionSample {
  double live_ms = 0.0;
  double position_rehearsed_ms = 0.0;
  double position_ref_ms = 0.0;
};

struct TrackResult {
  bool detected = false;
  double detected_at_ms = 0.0;
  std::size_t frames = 0;
  TrackerState final_state;
  std::vector<PositionSample> tracking_positions;  // frames in the Tracking phase
  std::vector<double> step_ms;                     // wall time of each tracking push
  BroadcastStats broadcast;
  std::vector<std::filesystem::path> artifacts;
};

/// detector -> tracker -> scheduler (+ broadcaster) over the manifest's live
/// audio. Writes events.jsonl, positions.jsonl, scheduler.jsonl and
/// summary.json into the output directory.
TrackResult run_track(const RunManifest& manifest, const TrackOptions& options);

// Command entry points: return the exit code, write the final artifact line
// to out and diagnostics to err.
int cmd_align(const std::filesystem::path& rehearsed, const std::filesystem::path& reference,
              const std::filesystem::path& out_csv, std::ostream& out, std::ostream& err);

int cmd_detect(const std::filesystem::path& rehearsed, const std::optional<std::filesystem::path>& live,
               const std::optional<std::filesystem::path>& config, std::ostream& out, std::ostream& err);

int cmd_track(const std::filesystem::path& manifest, const TrackOptions& options, std::ostream& out,
              std::ostream& err);

struct EvaluateArgs {
  std::optional<std::filesystem::path> positions;   // positions.jsonl from track
  std::optional<std::filesystem::path> actual_map;  // or a live -> reference CSV
  std::optional<std::filesystem::path> ref_beats;
  std::optional<std::filesystem::path> live_beats;
  std::optional<std::filesystem::path> chroma_live;  // audio-only path
  std::optional<std::filesystem::path> chroma_estimated;
  std::optional<double> max_average_ms;  // quality gate for exit code 1
  std::filesystem::path out_dir;
};

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct FixtureArgs {
  std::filesystem::path out_dir;
  std::uint32_t seed = 7;
  int bars = 25;
  bool align_rehearsal = true;  // rehearsal map by offline DTW instead of ground truth
};

int cmd_fixtures(const FixtureArgs& args, std::ostream& out, std::ostream& err);

/// Reads (live_ms, position_ref_ms) of tracking-phase lines of positions.jsonl.
std::vector<std::pair<double, double>> read_tracking_positions(const std::filesystem::path& path);

}  // namespace mtrack::cli
