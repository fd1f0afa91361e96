#include "mtrack/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <string>
#include <utility>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

constexpr std::uint32_t kDefaultTempoUs = 500000;  // 120 BPM

struct RawNote {
  std::uint64_t tick;
  MidiEventKind kind;
  std::uint8_t pitch, velocity, channel;
  std::uint16_t track;
};

struct TempoPoint {
  std::uint64_t tick;
  std::uint32_t us_per_quarter;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  bool done() const { return p_ >= end_; }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

  std::uint8_t u8() {
    need(1);
    return *p_++;
  }
  std::uint8_t peek() {
    need(1);
    return *p_;
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>((p_[0] << 8) | p_[1]);
    p_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = (static_cast<std::uint32_t>(p_[0]) << 24) | (static_cast<std::uint32_t>(p_[1]) << 16) |
                            (static_cast<std::uint32_t>(p_[2]) << 8) | p_[3];
    p_ += 4;
    return v;
  }
  std::uint32_t vlq() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return v;
    }
    throw Error(Errc::MalformedFile, "variable-length quantity longer than 4 bytes");
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* at = p_;
    p_ += n;
    return at;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(Errc::MalformedFile, "unexpected end of MIDI data");
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

void parse_track(Reader& r, std::uint16_t track, std::vector<RawNote>& notes, std::vector<TempoPoint>& tempos,
                 std::uint64_t& last_tick) {
  std::uint64_t tick = 0;
  std::uint8_t status = 0;
  while (!r.done()) {
    tick += r.vlq();
    std::uint8_t b = r.peek();
    if (b & 0x80) {
      status = r.u8();
    } else if (status == 0) {
      throw Error(Errc::MalformedFile, "running status without a previous status byte");
    }

    if (status == 0xFF) {
      const std::uint8_t type = r.u8();
      const std::uint32_t len = r.vlq();
      const std::uint8_t* body = r.take(len);
      if (type == 0x51 && len == 3) {
        const std::uint32_t us = (static_cast<std::uint32_t>(body[0]) << 16) | (body[1] << 8) | body[2];
        if (us == 0) throw Error(Errc::MalformedFile, "zero tempo");
        tempos.push_back({tick, us});
      }
      status = 0;  // meta events cancel running status
      if (type == 0x2F) break;
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      r.take(r.vlq());
      status = 0;
      continue;
    }

    const std::uint8_t kind = status & 0xF0;
    const std::uint8_t channel = status & 0x0F;
    switch (kind) {
      case 0x80:
      case 0x90: {
        const std::uint8_t pitch = r.u8() & 0x7F;
        const std::uint8_t vel = r.u8() & 0x7F;
        const bool on = kind == 0x90 && vel > 0;
        notes.push_back({tick, on ? MidiEventKind::NoteOn : MidiEventKind::NoteOff, pitch, on ? vel : std::uint8_t{0},
                         channel, track});
        break;
      }
      case 0xA0:
      case 0xB0:
      case 0xE0:
        r.take(2);
        break;
      case 0xC0:
      case 0xD0:
        r.take(1);
        break;
      default:
        throw Error(Errc::MalformedFile, "unexpected status byte");
    }
  }
  last_tick = std::max(last_tick, tick);
}

// Tick -> ms under a sorted tempo map (PPQ timing).
class TempoMap {
 public:
  TempoMap(std::vector<TempoPoint> points, std::uint16_t ppq) : ppq_(ppq) {
    std::stable_sort(points.begin(), points.end(), [](auto& a, auto& b) { return a.tick < b.tick; });
    if (points.empty() || points.front().tick != 0) points.insert(points.begin(), {0, kDefaultTempoUs});
    double ms = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i > 0) ms += span_ms(points[i - 1].us_per_quarter, points[i].tick - points[i - 1].tick);
      starts_.push_back({points[i], ms});
    }
  }

  double to_ms(std::uint64_t tick) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), tick,
                               [](std::uint64_t t, const auto& s) { return t < s.first.tick; });
    --it;
    return it->second + span_ms(it->first.us_per_quarter, tick - it->first.tick);
  }

 private:
  double span_ms(std::uint32_t us, std::uint64_t ticks) const {
    return static_cast<double>(us) * static_cast<double>(ticks) / (1000.0 * ppq_);
  }
  std::uint16_t ppq_;
  std::vector<std::pair<TempoPoint, double>> starts_;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7F;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

void put_track(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& body) {
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
}

}  // namespace

void normalize_events(MidiEventList& list) {
  auto& ev = list.events;
  std::stable_sort(ev.begin(), ev.end(), [](const MidiEvent& a, const MidiEvent& b) {
    if (a.t_ref_ms != b.t_ref_ms) return a.t_ref_ms < b.t_ref_ms;
    return a.kind == MidiEventKind::NoteOff && b.kind == MidiEventKind::NoteOn;
  });

  std::map<std::pair<int, int>, std::deque<std::size_t>> open;
  std::vector<MidiEvent> out;
  out.reserve(ev.size());
  for (const auto& e : ev) {
    const auto key = std::make_pair(int{e.channel}, int{e.pitch});
    if (e.kind == MidiEventKind::NoteOn) {
      open[key].push_back(out.size());
      out.push_back(e);
    } else {
      auto it = open.find(key);
      if (it == open.end() || it->second.empty()) continue;  // stray NoteOff
      const std::size_t on = it->second.front();
      it->second.pop_front();
      out.push_back(e);
      out.back().partner = on;
      out[on].partner = out.size() - 1;
    }
  }
  const double end = out.empty() ? 0.0 : out.back().t_ref_ms;
  for (auto& [key, ons] : open) {
    for (std::size_t on : ons) {
      MidiEvent off = out[on];
      off.kind = MidiEventKind::NoteOff;
      off.velocity = 0;
      off.t_ref_ms = end;
      off.partner = on;
      out.push_back(off);
      out[on].partner = out.size() - 1;
    }
  }
  ev = std::move(out);
}

MidiEventList select_track(const MidiEventList& list, std::uint16_t track) {
  MidiEventList out;
  for (const auto& e : list.events) {
    if (e.track == track) out.events.push_back(e);
  }
  normalize_events(out);
  return out;
}

MidiEventList parse_midi(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  Reader r(bytes.data(), bytes.size());
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0) {
    throw Error(Errc::MalformedFile, path.string() + " is not a Standard MIDI File");
  }
  r.take(4);
  const std::uint32_t header_len = r.u32();
  if (header_len < 6) throw Error(Errc::MalformedFile, "short MThd chunk");
  const std::uint16_t format = r.u16();
  const std::uint16_t ntracks = r.u16();
  const std::uint16_t division = r.u16();
  r.take(header_len - 6);
  if (format == 2) throw Error(Errc::UnsupportedFormat, "SMF format 2 is not supported");
  if (format > 2) throw Error(Errc::MalformedFile, "unknown SMF format");

  std::vector<RawNote> notes;
  std::vector<TempoPoint> tempos;
  std::uint64_t last_tick = 0;
  std::uint16_t track = 0;
  while (!r.done() && track < ntracks) {
    if (r.remaining() < 8) throw Error(Errc::MalformedFile, "truncated chunk header");
    const std::uint8_t* id = r.take(4);
    const std::uint32_t len = r.u32();
    const std::uint8_t* body = r.take(len);
    if (std::memcmp(id, "MTrk", 4) != 0) continue;  // unknown chunks are skipped
    Reader tr(body, len);
    parse_track(tr, track, notes, tempos, last_tick);
    ++track;
  }
  if (track < ntracks) throw Error(Errc::MalformedFile, "fewer track chunks than declared");

  std::function<double(std::uint64_t)> to_ms;
  if (division & 0x8000) {
    // SMPTE: negative frames per second in the high byte, ticks per frame low.
    const int fps = -static_cast<std::int8_t>(division >> 8);
    const int tpf = division & 0xFF;
    if (fps <= 0 || tpf <= 0) throw Error(Errc::MalformedFile, "bad SMPTE division");
    const double ms_per_tick = 1000.0 / (fps * tpf);
    to_ms = [ms_per_tick](std::uint64_t t) { return static_cast<double>(t) * ms_per_tick; };
  } else {
    if (division == 0) throw Error(Errc::MalformedFile, "zero ticks per quarter note");
    auto map = std::make_shared<TempoMap>(tempos, division);
    to_ms = [map](std::uint64_t t) { return map->to_ms(t); };
  }

  MidiEventList list;
  list.events.reserve(notes.size());
  for (const auto& n : notes) {
    list.events.push_back({to_ms(n.tick), n.kind, n.pitch, n.velocity, n.channel, n.track, 0});
  }
  normalize_events(list);
  return list;
}

double tick_to_ms(const SmfSong& song, std::uint32_t tick) {
  std::vector<TempoPoint> pts;
  for (const auto& t : song.tempos) {
    pts.push_back({t.tick, static_cast<std::uint32_t>(std::lround(60'000'000.0 / t.bpm))});
  }
  return TempoMap(pts, song.ppq).to_ms(tick);
}

void write_midi(const std::filesystem::path& path, const SmfSong& song) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  put_u32(out, 6);
  put_u16(out, 1);
  put_u16(out, static_cast<std::uint16_t>(song.tracks.size() + 1));
  put_u16(out, song.ppq);

  {
    auto tempos = song.tempos;
    std::stable_sort(tempos.begin(), tempos.end(), [](auto& a, auto& b) { return a.tick < b.tick; });
    std::vector<std::uint8_t> body;
    std::uint32_t now = 0;
    for (const auto& t : tempos) {
      const auto us = static_cast<std::uint32_t>(std::lround(60'000'000.0 / t.bpm));
      put_vlq(body, t.tick - now);
      now = t.tick;
      body.insert(body.end(), {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(us >> 16),
                               static_cast<std::uint8_t>((us >> 8) & 0xFF), static_cast<std::uint8_t>(us & 0xFF)});
    }
    put_vlq(body, 0);
    body.insert(body.end(), {0xFF, 0x2F, 0x00});
    put_track(out, body);
  }

  for (const auto& notes : song.tracks) {
    struct Msg {
      std::uint32_t tick;
      bool on;
      SmfNote note;
    };
    std::vector<Msg> msgs;
    for (const auto& n : notes) {
      msgs.push_back({n.start_tick, true, n});
      msgs.push_back({n.start_tick + n.duration_ticks, false, n});
    }
    std::stable_sort(msgs.begin(), msgs.end(), [](const Msg& a, const Msg& b) {
      if (a.tick != b.tick) return a.tick < b.tick;
      return !a.on && b.on;
    });
    std::vector<std::uint8_t> body;
    std::uint32_t now = 0;
    for (const auto& m : msgs) {
      put_vlq(body, m.tick - now);
      now = m.tick;
      const auto status = static_cast<std::uint8_t>((m.on ? 0x90 : 0x80) | (m.note.channel & 0x0F));
      body.insert(body.end(), {status, static_cast<std::uint8_t>(m.note.pitch & 0x7F),
                               static_cast<std::uint8_t>(m.on ? (m.note.velocity & 0x7F) : 0x40)});
    }
    put_vlq(body, 0);
    body.insert(body.end(), {0xFF, 0x2F, 0x00});
    put_track(out, body);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(Errc::IoError, "short write to " + path.string());
}

std::vector<std::uint8_t> midi_bytes(const MidiEvent& event) {
  const bool on = event.kind == MidiEventKind::NoteOn;
  return {static_cast<std::uint8_t>((on ? 0x90 : 0x80) | (event.channel & 0x0F)),
          static_cast<std::uint8_t>(event.pitch & 0x7F), static_cast<std::uint8_t>(on ? event.velocity & 0x7F : 0)};
}

}  // namespace mtrack
