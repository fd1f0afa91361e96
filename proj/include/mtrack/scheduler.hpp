#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mtrack/midi.hpp"

namespace mtrack {

struct ScheduledEvent {
  MidiEvent event;
  double wall_ms = 0.0;
  double position_ref_ms = 0.0;
  // NoteOff issued to silence a sounding note after a backward jump or at stop.
  bool recovery = false;
};

struct SchedulerConfig {
  // Events fire this far ahead of the tracked position to absorb downstream
  // synthesis latency.
  double anticipation_ms = 0.0;
};

/// Emits counterpart events as the tracked reference position passes them.
/// Single owner; driven at the decision cadence.
class Scheduler {
 public:
  using Sink = std::function<void(const ScheduledEvent&)>;

  explicit Scheduler(MidiEventList events, SchedulerConfig cfg = {});

  /// Every not-yet-emitted event with t_ref_ms <= position (+ anticipation).
  /// A backward position jump first silences all sounding notes, then moves
  /// the cursor back without re-emitting past NoteOns.
  std::vector<ScheduledEvent> advance(double position_ref_ms, double wall_ms);

  /// NoteOffs for every sounding note.
  std::vector<ScheduledEvent> flush(double wall_ms);

  void set_sink(Sink sink) { sink_ = std::move(sink); }

  std::size_t cursor() const { return cursor_; }
  std::size_t sounding() const { return sounding_.size(); }
  const MidiEventList& events() const { return list_; }

 private:
  void emit(std::vector<ScheduledEvent>& out, const ScheduledEvent& e);

  MidiEventList list_;
  SchedulerConfig cfg_;
  std::size_t cursor_ = 0;
  bool started_ = false;
  double last_position_ = 0.0;
  std::vector<bool> emitted_;
  std::vector<std::size_t> sounding_;  // indices of NoteOns currently on
  Sink sink_;
};

/// One JSON object per line, wall-clock and reference timestamps included.
std::string scheduled_event_json(const ScheduledEvent& e);

}  // namespace mtrack
