#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace mtrack {

enum class MidiEventKind : std::uint8_t { NoteOn, NoteOff };

struct MidiEvent {
  double t_ref_ms = 0.0;
  MidiEventKind kind = MidiEventKind::NoteOn;
  std::uint8_t pitch = 60;
  std::uint8_t velocity = 0;
  std::uint8_t channel = 0;
  std::uint16_t track = 0;
  // Index of the matching NoteOff (for a NoteOn) or NoteOn (for a NoteOff)
  // within the owning list.
  std::size_t partner = 0;
};

/// Note events of a piece on one millisecond timeline, sorted by time with
/// NoteOffs ahead of NoteOns at equal times.
struct MidiEventList {
  std::vector<MidiEvent> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  double end_ms() const { return events.empty() ? 0.0 : events.back().t_ref_ms; }
};

/// Sorts events and links every NoteOn to the next NoteOff of the same
/// channel and pitch (first in, first out). A NoteOn without a NoteOff gets
/// one appended at the latest event time.
void normalize_events(MidiEventList& list);

/// Events of one track only (partners re-linked).
MidiEventList select_track(const MidiEventList& list, std::uint16_t track);

/// Reads a Standard MIDI File of format 0 or 1. Tempo meta events from every
/// track form one global tempo map; absent any, 120 BPM applies.
MidiEventList parse_midi(const std::filesystem::path& path);

/// Minimal writer used for fixtures: format 1, tempo track first.
struct SmfNote {
  std::uint32_t start_tick = 0;
  std::uint32_t duration_ticks = 0;
  std::uint8_t pitch = 60;
  std::uint8_t velocity = 90;
  std::uint8_t channel = 0;
};

struct SmfTempo {
  std::uint32_t tick = 0;
  double bpm = 120.0;
};

struct SmfSong {
  std::uint16_t ppq = 480;
  std::vector<SmfTempo> tempos;
  std::vector<std::vector<SmfNote>> tracks;
};

void write_midi(const std::filesystem::path& path, const SmfSong& song);

/// Milliseconds of a tick position under the song's tempo map.
double tick_to_ms(const SmfSong& song, std::uint32_t tick);

/// Raw 3-byte channel message for an event.
std::vector<std::uint8_t> midi_bytes(const MidiEvent& event);

}  // namespace mtrack
