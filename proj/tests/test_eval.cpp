#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "mtrack/error.hpp"
#include "mtrack/eval.hpp"
#include "mtrack/synth.hpp"
#include "support.hpp"

using namespace mtrack;

namespace {

const BeatAnnotation kSteady120{{0.0, 500.0, 1000.0, 1500.0, 2000.0}};

MidiEventList events_at(const std::vector<double>& times) {
  MidiEventList l;
  for (double t : times) l.events.push_back({t, MidiEventKind::NoteOn, 60, 90, 0, 0, 0});
  return l;
}

}  // namespace

TEST_CASE("beat annotation") {
  CHECK_THROWS_AS(BeatAnnotation{{0.0}}.validate(), Error);
  CHECK_THROWS_AS(BeatAnnotation({{0.0, 10.0, 10.0}}).validate(), Error);
  const BeatAnnotation b{{0.0, 500.0, 1500.0}};
  CHECK(b.bpm_at(-100.0) == 120.0);
  CHECK(b.bpm_at(250.0) == 120.0);
  CHECK(b.bpm_at(700.0) == 60.0);
  CHECK(b.bpm_at(9000.0) == 60.0);

  test::TempDir dir("beats");
  write_beats(dir / "b.txt", b);
  CHECK(read_beats(dir / "b.txt").beats_ms == b.beats_ms);
  std::ofstream(dir / "c.txt") << "# header\n0\n\n500 # one\n";
  CHECK(read_beats(dir / "c.txt").beats_ms == std::vector<double>{0.0, 500.0});
  std::ofstream(dir / "bad.txt") << "0\nabc\n";
  CHECK_THROWS_AS(read_beats(dir / "bad.txt"), Error);
}

TEST_CASE("warping MIDI to beats") {
  const auto ev = events_at({0.0, 250.0, 750.0, 1250.0, 1500.0});
  const BeatAnnotation ref{{0.0, 500.0, 1000.0, 1500.0}};
  CHECK(warp_midi_to_beats(ev, ref, ref).events[2].t_ref_ms == 750.0);

  const BeatAnnotation slow{{0.0, 1000.0, 2000.0, 3000.0}};
  const auto doubled = warp_midi_to_beats(ev, ref, slow);
  for (std::size_t i = 0; i < ev.size(); ++i) CHECK(doubled.events[i].t_ref_ms == 2 * ev.events[i].t_ref_ms);

  // Second beat lands 100 ms late: only the two intervals touching it move.
  const BeatAnnotation rubato{{0.0, 600.0, 1000.0, 1500.0}};
  const auto r = warp_midi_to_beats(ev, ref, rubato);
  CHECK(r.events[0].t_ref_ms == 0.0);
  CHECK(r.events[1].t_ref_ms == 300.0);
  CHECK(r.events[2].t_ref_ms == 800.0);
  CHECK(r.events[3].t_ref_ms == 1250.0);
  CHECK(r.events[4].t_ref_ms == 1500.0);

  try {
    warp_midi_to_beats(ev, ref, BeatAnnotation{{0.0, 1.0}});
    FAIL("expected BeatCountMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BeatCountMismatch);
  }
}

TEST_CASE("estimated counterpart map") {
  const auto piece = make_duet_piece(2, 6);
  const auto ref_beats = piece.beats();
  const auto id = estimated_counterpart_map(ref_beats, ref_beats);
  for (double t = 0; t < piece.length_ms(); t += 97) CHECK(id.lookup(t) == doctest::Approx(t));

  BeatAnnotation faster;
  for (double b : ref_beats.beats_ms) faster.beats_ms.push_back(b / 1.25 + 1000.0);
  const auto m = estimated_counterpart_map(ref_beats, faster);
  for (double t = 100; t < piece.length_ms() - 100; t += 100) {
    const double slope = (m.lookup(t + 20) - m.lookup(t)) / 20.0;
    CHECK(std::abs(slope - 1 / 1.25) < 1e-9);
  }

  const auto warp = scenario_warp(piece, TempoScenario::Accelerando, 3, 1000.0);
  BeatAnnotation accel;
  for (double b : ref_beats.beats_ms) accel.beats_ms.push_back(warp.lookup(b));
  const auto a = estimated_counterpart_map(ref_beats, accel);
  // Slope per beat; rubato jitter rides on top of the ramp, so compare bars.
  std::vector<double> bar_slopes;
  const double bar = 4 * piece.beat_ms();
  for (double t = 0; t + bar <= piece.length_ms(); t += bar) bar_slopes.push_back((a.lookup(t + bar) - a.lookup(t)) / bar);
  for (std::size_t i = 1; i < bar_slopes.size(); ++i) CHECK(bar_slopes[i] < bar_slopes[i - 1]);
}

TEST_CASE("latency curve on hand-built maps") {
  // Spans of 1024 ms keep every interpolation weight exact.
  const TimeMap est({{-1024.0, -1024.0}, {2048.0, 2048.0}});

  SUBCASE("identical maps") {
    const auto c = latency_curve(est, est, kSteady120);
    for (const auto& s : c.samples) CHECK(s.latency_ms == 0.0);
    CHECK(c.average_deviation_ms == 0.0);
  }
  SUBCASE("constant lag") {
    const TimeMap lag({{0.0, -100.0}, {1024.0, 924.0}});
    const auto c = latency_curve(lag, est, kSteady120);
    CHECK(c.samples.size() == 52);
    for (const auto& s : c.samples) {
      CHECK(s.latency_ms == 100.0);
      CHECK(s.latency_sixteenths == 0.8);
      CHECK(s.tempo_bpm == 120.0);
    }
    CHECK(c.average_deviation_ms == 100.0);
    CHECK(c.samples.front().t_ms == 0.0);
    CHECK(c.samples[1].t_ms == 20.0);
  }
  SUBCASE("sign flip keeps the average") {
    const TimeMap lag({{0.0, -100.0}, {1024.0, 924.0}});
    const TimeMap lead({{0.0, 100.0}, {1024.0, 1124.0}});
    const auto a = latency_curve(lag, est, kSteady120);
    const auto b = latency_curve(lead, est, kSteady120);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(b.samples[i].latency_ms == -a.samples[i].latency_ms);
    CHECK(a.average_deviation_ms == b.average_deviation_ms);
    CHECK(b.average_deviation_ms == 100.0);
  }
  SUBCASE("mixed sign") {
    // Three samples at 0, 20, 40: actual ref positions -100, 120, 120.
    const TimeMap act({{0.0, -100.0}, {20.0, 120.0}, {40.0, 120.0}});
    const auto c = latency_curve(act, est, kSteady120);
    REQUIRE(c.samples.size() == 3);
    CHECK(c.samples[0].latency_ms == 100.0);
    CHECK(c.samples[1].latency_ms == -100.0);
    CHECK(c.samples[2].latency_ms == -80.0);
    CHECK(c.average_deviation_ms == doctest::Approx(280.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("disjoint domains") {
    const TimeMap later({{5000.0, 0.0}, {6000.0, 1000.0}});
    try {
      latency_curve(later, est, kSteady120);
      FAIL("expected DomainMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::DomainMismatch);
    }
  }
}

TEST_CASE("latency from raw positions") {
  const TimeMap est({{-1024.0, -1024.0}, {2048.0, 2048.0}});
  const auto c = latency_curve_from_positions({{0.0, -100.0}, {20.0, 120.0}, {40.0, -260.0}}, est, kSteady120);
  REQUIRE(c.samples.size() == 3);
  CHECK(c.samples[0].latency_ms == 100.0);
  CHECK(c.samples[1].latency_ms == -100.0);
  CHECK(c.samples[2].latency_ms == 300.0);
  CHECK(c.average_deviation_ms == doctest::Approx(500.0 / 3.0).epsilon(1e-15));

  // Held between reports.
  const auto h = latency_curve_from_positions({{0.0, 0.0}, {100.0, 100.0}}, est, kSteady120);
  CHECK(h.samples[2].latency_ms == 40.0);
}

TEST_CASE("summary") {
  LatencyCurve c;
  // 3 s of 400 ms error, then 3 s of 50 ms at 120 BPM (quarter beat = 125 ms).
  for (int i = 0; i < 300; ++i) c.samples.push_back({i * 20.0, i < 150 ? 400.0 : 50.0, 0.0, 120.0});
  c.average_deviation_ms = (150 * 400.0 + 150 * 50.0) / 300.0;
  const auto s = c.summary();
  REQUIRE(s.convergence_time_ms);
  CHECK(*s.convergence_time_ms == 3000.0);
  CHECK(s.steady_state_average_deviation_ms == 50.0);
  CHECK(s.max_abs_latency_ms == 400.0);

  LatencyCurve never;
  for (int i = 0; i < 100; ++i) never.samples.push_back({i * 20.0, 300.0, 0.0, 120.0});
  never.average_deviation_ms = 300.0;
  CHECK_FALSE(never.summary().convergence_time_ms);
  const auto j = nlohmann::json::parse(latency_summary_json(never.summary()));
  CHECK(j["convergence_time_ms"].is_null());
  CHECK(j["average_deviation_ms"] == 300.0);
}

TEST_CASE("chroma path") {
  const auto notes = chord_sequence(9, 8000.0);
  RenderOptions ro;
  ro.tail_ms = 200.0;
  const auto clip = render_notes(notes, TimeMap::identity(0, 20000), Timbre::Violin, ro);

  const auto self = chroma_dtw_latency(clip, clip);
  CHECK(self.average_deviation_ms == 0.0);

  AudioClip delayed = clip;
  delayed.samples.insert(delayed.samples.begin(), 4410, 0.0f);
  const auto d = chroma_dtw_latency(delayed, clip);
  int n = 0;
  for (const auto& s : d.samples) {
    if (s.t_ms < 500 || s.t_ms > 7500) continue;
    CHECK(std::abs(s.latency_ms - 100.0) <= 20.0);
    ++n;
  }
  CHECK(n > 300);

  const auto warp = piecewise_tempo_warp(8000.0, {1.2, 0.9}, 0.0);
  const auto live = render_notes(notes, warp, Timbre::Violin, ro);
  const auto w = chroma_dtw_latency(live, clip, kSteady120);
  double err = 0.0;
  int m = 0;
  for (const auto& s : w.samples) {
    if (s.t_ms > 8000) break;
    err += std::abs(s.latency_ms - (warp.lookup(s.t_ms) - s.t_ms));
    ++m;
  }
  CHECK(err / m <= 40.0);
}

TEST_CASE("csv export") {
  test::TempDir dir("lat");
  LatencyCurve c;
  c.samples = {{0, 100, 0.8, 120}, {20, -50, -0.4, 120}};
  write_latency_csv(dir / "l.csv", c);
  std::ifstream in(dir / "l.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t_ms,latency_ms,latency_sixteenths,tempo_bpm");
  CHECK(row == "0,100,0.8,120");
}
