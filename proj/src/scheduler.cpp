#include "mtrack/scheduler.hpp"

#include <algorithm>
#include <json.hpp>

namespace mtrack {

Scheduler::Scheduler(MidiEventList events, SchedulerConfig cfg)
    : list_(std::move(events)), cfg_(cfg), emitted_(list_.size(), false) {}

void Scheduler::emit(std::vector<ScheduledEvent>& out, const ScheduledEvent& e) {
  out.push_back(e);
  if (sink_) sink_(e);
}

std::vector<ScheduledEvent> Scheduler::advance(double position_ref_ms, double wall_ms) {
  std::vector<ScheduledEvent> out;
  const double pos = position_ref_ms + cfg_.anticipation_ms;
  const auto& ev = list_.events;

  if (started_ && pos < last_position_) {
    for (std::size_t on : sounding_) {
      MidiEvent off = ev[on];
      off.kind = MidiEventKind::NoteOff;
      off.velocity = 0;
      emit(out, {off, wall_ms, position_ref_ms, true});
    }
    sounding_.clear();
    cursor_ = static_cast<std::size_t>(
        std::upper_bound(ev.begin(), ev.end(), pos, [](double p, const MidiEvent& e) { return p < e.t_ref_ms; }) -
        ev.begin());
  }
  started_ = true;
  last_position_ = pos;

  for (; cursor_ < ev.size() && ev[cursor_].t_ref_ms <= pos; ++cursor_) {
    if (emitted_[cursor_]) continue;
    const MidiEvent& e = ev[cursor_];
    if (e.kind == MidiEventKind::NoteOn) {
      emitted_[cursor_] = true;
      sounding_.push_back(cursor_);
      emit(out, {e, wall_ms, position_ref_ms, false});
    } else {
      // Only release notes this scheduler turned on and has not silenced.
      auto it = std::find(sounding_.begin(), sounding_.end(), e.partner);
      if (it == sounding_.end()) {
        // The NoteOn has not been emitted yet or was already silenced. Mark
        // consumed only when its NoteOn will never sound.
        if (e.partner < emitted_.size() && emitted_[e.partner]) emitted_[cursor_] = true;
        continue;
      }
      sounding_.erase(it);
      emitted_[cursor_] = true;
      emit(out, {e, wall_ms, position_ref_ms, false});
    }
  }
  return out;
}

std::vector<ScheduledEvent> Scheduler::flush(double wall_ms) {
  std::vector<ScheduledEvent> out;
  for (std::size_t on : sounding_) {
    MidiEvent off = list_.events[on];
    off.kind = MidiEventKind::NoteOff;
    off.velocity = 0;
    emit(out, {off, wall_ms, last_position_ - cfg_.anticipation_ms, true});
  }
  sounding_.clear();
  return out;
}

std::string scheduled_event_json(const ScheduledEvent& e) {
  nlohmann::ordered_json j;
  j["wall_ms"] = e.wall_ms;
  j["position_ref_ms"] = e.position_ref_ms;
  j["t_ref_ms"] = e.event.t_ref_ms;
  j["kind"] = e.event.kind == MidiEventKind::NoteOn ? "note_on" : "note_off";
  j["pitch"] = e.event.pitch;
  j["velocity"] = e.event.velocity;
  j["channel"] = e.event.channel;
  j["recovery"] = e.recovery;
  return j.dump();
}

}  // namespace mtrack
