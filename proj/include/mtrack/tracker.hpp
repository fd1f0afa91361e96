#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mtrack/features.hpp"
#include "mtrack/odtw.hpp"

namespace mtrack {

/// Every tunable of the tracker. Loaded from a `key = value` text file; see
/// docs/config.md for the keys.
struct TrackerConfig {
  double frame_period_ms = kDefaultFramePeriodMs;
  double window_ms = kDefaultWindowMs;
  double detector_window_ms = 500.0;
  // <= 0 selects 0.9 of the silence-vs-prefix alignment cost.
  double detector_cost_threshold = 0.0;
  double rough_window_ms = 9000.0;
  std::size_t rough_top_k = 4;
  std::size_t n_workers = 4;
  OdtwConfig odtw;
  int low_res_time_factor = kDefaultLowResTimeFactor;
  int low_res_band_factor = kDefaultLowResBandFactor;
  double nms_radius_ms = 2000.0;
  double divergence_factor = 3.0;
  double respawn_interval_ms = 1000.0;
  double warmup_ms = 1000.0;
  double min_switch_interval_ms = 1000.0;
  // A non-trusted worker whose position has not moved for this long is replaced.
  double stall_ms = 5000.0;
  bool parallel = false;

  void validate() const;
  std::size_t frames(double ms) const;
};

TrackerConfig parse_tracker_config(const std::string& text);
TrackerConfig load_tracker_config(const std::filesystem::path& path);
std::string format_tracker_config(const TrackerConfig& cfg);

/// Rehearsed-recording features plus everything derived from them once.
struct TrackerReference {
  std::shared_ptr<const FeatureSequence> diff;
  std::shared_ptr<const FeatureSequence> low_res;
  FeatureSequence detector_prefix;
  std::size_t music_start = 0;  // 0-based first non-silent frame
  double feature_scale = 1.0;   // mean norm of non-silent feature rows
  double silence_level = 0.0;   // rows at or below this norm count as silent
  double cost_threshold = 0.0;

  double duration_ms() const { return diff ? static_cast<double>(diff->rows()) * diff->frame_period_ms() : 0.0; }
};

TrackerReference prepare_reference(const RecordingFeatures& rehearsed, const TrackerConfig& cfg);

/// 0.9 x the cost of aligning silence against the prefix.
double calibrate_detector_threshold(const FeatureSequence& ref_prefix);

bool detect_music(const FeatureSequence& live_prefix, const FeatureSequence& ref_prefix, double threshold);

/// Candidate current positions (1-based end frames in ref) ranked by the
/// framewise-summed Euclidean distance between live_tail and the ref segment
/// ending there. Candidates within nms_radius frames of a better one are
/// suppressed. Throws InsufficientHistory when live_tail has fewer than
/// required_rows rows.
std::vector<std::size_t> rough_positions(const FeatureSequence& live_tail, const FeatureSequence& ref,
                                         std::size_t top_k, std::size_t nms_radius, std::size_t required_rows = 1);

enum class TrackerPhase : std::uint8_t { Waiting, Tracking };

const char* to_string(TrackerPhase phase) noexcept;

struct WorkerSnapshot {
  int id = 0;
  std::size_t start_frame = 0;  // 1-based reference frame the worker started at
  std::size_t current_ref_frame = 0;
  double normalized_cost = 0.0;
  double tempo_ratio = 1.0;
};

struct TrackerState {
  TrackerPhase phase = TrackerPhase::Waiting;
  std::size_t live_frame = 0;  // frames received so far
  int trusted_worker = -1;
  double position_ref_ms = 0.0;
  double tempo_ratio = 1.0;
  double confidence = 0.0;
  std::size_t respawns = 0;
  std::size_t switches = 0;
  std::vector<WorkerSnapshot> per_worker;
};

enum class TrackerEventType : std::uint8_t { Detection, Spawn, Respawn, Switch };

struct TrackerEvent {
  TrackerEventType type = TrackerEventType::Detection;
  double live_ms = 0.0;
  int worker = -1;
  int previous_worker = -1;
  std::size_t ref_frame = 0;
  double cost = 0.0;
};

std::string tracker_event_json(const TrackerEvent& e);

/// The live-frame input of the tracker: one high-resolution feature row and,
/// every low_res_time_factor frames, one low-resolution row.
struct LiveFrame {
  std::vector<float> diff;
  std::optional<std::vector<float>> low_res;
};

/// Music detector, rough position estimator, ODTW worker pool and decision
/// maker. Single-threaded by default; with cfg.parallel the workers of one
/// frame are stepped concurrently and joined before the decision, which
/// leaves results identical.
class Tracker {
 public:
  Tracker(std::shared_ptr<const TrackerReference> reference, TrackerConfig cfg);
  ~Tracker();
  Tracker(const Tracker&) = delete;
  Tracker& operator=(const Tracker&) = delete;

  /// Consumes one live frame: runs the detector while waiting, otherwise one
  /// tracking step.
  const TrackerState& push(const LiveFrame& frame);

  /// Starts tracking immediately with one worker per seed (1-based reference
  /// frames), bypassing the detector.
  void begin_tracking(const std::vector<std::size_t>& seeds);

  bool tracking() const { return tracking_; }
  const TrackerState& state() const { return state_; }
  std::vector<TrackerEvent> drain_events();
  const TrackerConfig& config() const { return cfg_; }

 private:
  struct Worker;
  class StepPool;

  void spawn(std::size_t slot, std::size_t ref_frame, bool respawn, std::span<const std::vector<float>> replay = {});
  void tracking_step(const std::vector<float>& diff);
  void maintain_workers();
  std::vector<std::size_t> candidate_positions();
  void decide();
  void publish();
  double live_ms() const;

  std::shared_ptr<const TrackerReference> ref_;
  TrackerConfig cfg_;
  TrackerState state_;
  bool tracking_ = false;
  std::size_t tracking_since_ = 0;
  std::size_t last_switch_ = 0;
  std::size_t detector_frames_;
  std::size_t warmup_frames_;
  std::size_t respawn_frames_;
  std::size_t switch_frames_;
  std::size_t stall_frames_;
  std::size_t rough_rows_;
  std::size_t nms_frames_;
  std::deque<std::vector<float>> recent_diff_;
  std::deque<std::vector<float>> recent_low_res_;
  std::size_t last_low_res_frame_ = 0;
  std::vector<std::unique_ptr<Worker>> workers_;
  int trusted_ = -1;
  int next_worker_id_ = 0;
  std::vector<TrackerEvent> events_;
  std::unique_ptr<StepPool> pool_;
};

}  // namespace mtrack
