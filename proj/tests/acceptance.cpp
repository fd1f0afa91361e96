// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <json.hpp>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "../tools/commands.hpp"
#include "mtrack/broadcast.hpp"
#include "mtrack/dtw.hpp"
#include "mtrack/eval.hpp"
#include "mtrack/features.hpp"
#include "mtrack/odtw.hpp"
#include "mtrack/scheduler.hpp"
#include "mtrack/synth.hpp"
#include "mtrack/tracker.hpp"
#include "support.hpp"

using namespace mtrack;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every pair of sequences over {0,1,2} with lengths 1..6, against path
// enumeration.
Outcome dtw_oracle() {
  const auto t0 = Clock::now();
  std::vector<std::vector<float>> all;
  for (int len = 1; len <= 6; ++len) {
    int n = 1;
    for (int i = 0; i < len; ++i) n *= 3;
    for (int code = 0; code < n; ++code) {
      std::vector<float> v;
      for (int i = 0, c = code; i < len; ++i, c /= 3) v.push_back(float(c % 3));
      all.push_back(v);
    }
  }
  std::size_t checked = 0, bad = 0;
  for (const auto& a : all) {
    const auto x = test::seq1d(a);
    for (const auto& b : all) {
      const auto y = test::seq1d(b);
      const auto brute = test::brute_force_dtw(x, y);
      const auto w = dtw_align(x, y);
      ++checked;
      if (w.cost != brute.cost || dtw_cost(x, y) != brute.cost || w.pairs != brute.optimal.front()) ++bad;
    }
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < 60.0, fmt("%zu pairs, %zu mismatches, %.1f s", checked, bad, s)};
}

Outcome odtw_fidelity() {
  const auto t0 = Clock::now();
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> ratio(0.75, 1.33);
  std::uniform_int_distribution<int> segments(2, 6);
  double worst = 0.0, total = 0.0, self_dev = 0.0;
  for (int k = 0; k < 20; ++k) {
    const auto notes = chord_sequence(100 + k, 60000.0);
    std::vector<double> ratios(segments(rng));
    for (auto& r : ratios) r = ratio(rng);
    RenderOptions ro;
    ro.tail_ms = 0.0;
    const auto ref_f = extract_recording_features(render_notes(notes, TimeMap::identity(0, 60000), Timbre::Sine, ro));
    const auto live_f = extract_recording_features(
        render_notes(notes, piecewise_tempo_warp(60000.0, ratios), Timbre::Sine, ro));
    auto ref = std::make_shared<const FeatureSequence>(ref_f.diff);

    OnlineDtw o(ref, OdtwConfig{});
    std::vector<TrackedPoint> pts;
    for (std::size_t t = 0; t < live_f.diff.rows(); ++t) pts.push_back(o.step(live_f.diff.row(t)));
    const double dev = odtw_path_deviation(pts, dtw_align(live_f.diff, *ref));
    worst = std::max(worst, dev);
    total += dev;

    if (k == 0) {
      OnlineDtw self(ref, OdtwConfig{});
      std::vector<TrackedPoint> sp;
      for (std::size_t t = 0; t < ref->rows(); ++t) sp.push_back(self.step(ref->row(t)));
      self_dev = odtw_path_deviation(sp, dtw_align(*ref, *ref));
    }
  }
  const double s = seconds_since(t0);
  return {worst <= 10.0 && self_dev == 0.0 && s < 120.0,
          fmt("mean deviation %.2f frames (worst fixture %.2f), self %.1f, %.1f s", total / 20, worst, self_dev, s)};
}

struct ScenarioRun {
  LatencyCurve curve;
  LatencySummary summary;
  double onset_ms = 0.0;
  double convergence_from_onset_ms = INFINITY;
};

ScenarioRun run_scenario(const fs::path& dir, const std::string& name) {
  const auto m = cli::load_manifest(dir / ("manifest_" + name + ".json"));
  const auto r = cli::run_track(m, {});
  std::vector<std::pair<double, double>> pos;
  for (const auto& p : r.tracking_positions) pos.emplace_back(p.live_ms, p.position_ref_ms);
  const auto ref_beats = read_beats(*m.ref_beats);
  const auto live_beats = read_beats(*m.live_beats);
  ScenarioRun out;
  if (pos.empty()) return out;
  out.curve = latency_curve_from_positions(pos, invert(estimated_counterpart_map(ref_beats, live_beats)), live_beats);
  out.summary = out.curve.summary();
  out.onset_ms = live_beats.beats_ms.front();
  if (out.summary.convergence_time_ms) {
    out.convergence_from_onset_ms = out.curve.samples.front().t_ms + *out.summary.convergence_time_ms - out.onset_ms;
  }
  return out;
}

Outcome tempo_scenarios(const fs::path& fixtures) {
  bool ok = true;
  std::string detail;
  for (const std::string name : {"normal", "slow", "fast", "accelerando"}) {
    const auto r = run_scenario(fixtures, name);
    bool pass;
    if (name == "accelerando") {
      pass = !r.curve.samples.empty() && r.summary.average_deviation_ms < 700.0;
    } else {
      pass = r.convergence_from_onset_ms <= 8000.0 && r.summary.steady_state_average_deviation_ms <= 150.0;
    }
    ok = ok && pass;
    detail += fmt("%s%s avg %.1f steady %.1f conv %.0f ms; ", pass ? "" : "!", name.c_str(),
                  r.summary.average_deviation_ms, r.summary.steady_state_average_deviation_ms,
                  r.convergence_from_onset_ms);
  }
  return {ok, detail};
}

Outcome latency_exact() {
  const BeatAnnotation beats{{0.0, 500.0, 1000.0, 1500.0, 2000.0}};
  const TimeMap est({{-1024.0, -1024.0}, {2048.0, 2048.0}});
  const TimeMap lag({{0.0, -100.0}, {1024.0, 924.0}});
  const TimeMap lead({{0.0, 100.0}, {1024.0, 1124.0}});
  const auto a = latency_curve(lag, est, beats);
  const auto b = latency_curve(lead, est, beats);
  bool constant = a.average_deviation_ms == 100.0;
  for (const auto& s : a.samples) constant = constant && s.latency_ms == 100.0;
  bool flip = b.average_deviation_ms == a.average_deviation_ms && a.samples.size() == b.samples.size();
  for (std::size_t i = 0; flip && i < a.samples.size(); ++i) flip = b.samples[i].latency_ms == -a.samples[i].latency_ms;
  const auto mixed = latency_curve_from_positions({{0.0, -100.0}, {20.0, 120.0}, {40.0, -260.0}}, est, beats);
  const bool mix = mixed.samples.size() == 3 && std::abs(mixed.average_deviation_ms - 500.0 / 3.0) < 1e-9;
  return {constant && flip && mix, fmt("constant %.3f, flipped %.3f, mixed %.4f ms", a.average_deviation_ms,
                                       b.average_deviation_ms, mixed.average_deviation_ms)};
}

// First detection event, in live ms, or -1.
double detection_ms(const std::shared_ptr<const TrackerReference>& ref, const AudioClip& live) {
  const TrackerConfig cfg;
  StreamingFeatures sf(live.sample_rate);
  Tracker tracker(ref, cfg);
  const auto frames = frame(live);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto f = sf.push(frames.frame(i));
    tracker.push(LiveFrame{std::move(f.diff), std::move(f.low_res)});
    for (const auto& e : tracker.drain_events()) {
      if (e.type == TrackerEventType::Detection) return e.live_ms;
    }
  }
  return -1.0;
}

Outcome music_detector() {
  const auto silence = silence_clip(30000.0);
  const auto noise = noise_clip(30000.0, 0.01, 4242);
  int fired_ok = 0, false_alarms = 0;
  double worst = 0.0;
  for (std::uint32_t seed = 1; seed <= 10; ++seed) {
    const auto piece = make_duet_piece(seed, 6);
    const auto reh = render_notes(piece.piano, scenario_warp(piece, TempoScenario::Rehearsed, seed + 1, 500.0),
                                  Timbre::Piano);
    auto ref = std::make_shared<const TrackerReference>(
        prepare_reference(extract_recording_features(reh), TrackerConfig{}));
    RenderOptions ro;
    ro.noise_level = 1e-3;
    ro.noise_seed = seed + 20;
    const auto live = render_notes(piece.piano, scenario_warp(piece, TempoScenario::Normal, seed + 10, 1000.0),
                                   Timbre::Piano, ro);
    const double at = detection_ms(ref, live);
    const double delay = at - 1000.0;
    if (at >= 1000.0 && delay <= 1000.0) ++fired_ok;
    worst = std::max(worst, at < 0 ? INFINITY : std::abs(delay));
    if (detection_ms(ref, silence) >= 0) ++false_alarms;
    if (detection_ms(ref, noise) >= 0) ++false_alarms;
  }
  return {fired_ok == 10 && false_alarms == 0,
          fmt("%d/10 fired within 1 s (worst delay %.0f ms), %d false alarms on silence/noise", fired_ok, worst,
              false_alarms)};
}

// Random position streams with backward jumps over random overlapping notes.
Outcome scheduler_property() {
  std::mt19937 rng(99);
  int failures = 0;
  std::size_t emitted = 0;
  const int trials = 500;
  for (int trial = 0; trial < trials; ++trial) {
    MidiEventList list;
    std::uniform_real_distribution<double> onset(0.0, 20000.0), dur(20.0, 2000.0);
    std::uniform_int_distribution<int> pitch(60, 66), channel(0, 1);
    for (int i = 0; i < 60; ++i) {
      const double t = onset(rng);
      const auto p = static_cast<std::uint8_t>(pitch(rng));
      const auto c = static_cast<std::uint8_t>(channel(rng));
      list.events.push_back({t, MidiEventKind::NoteOn, p, 90, c, 0, 0});
      list.events.push_back({t + dur(rng), MidiEventKind::NoteOff, p, 0, c, 0, 0});
    }
    normalize_events(list);
    const MidiEventList piece = list;
    Scheduler s(std::move(list));
    std::vector<ScheduledEvent> out;
    s.set_sink([&](const ScheduledEvent& e) { out.push_back(e); });
    double pos = -100.0, wall = 0.0;
    std::uniform_real_distribution<double> fwd(0.0, 80.0), coin(0.0, 1.0), back(100.0, 5000.0);
    while (pos < 24000.0) {
      pos += coin(rng) < 0.01 ? -back(rng) : fwd(rng);
      wall += 20.0;
      s.advance(pos, wall);
    }
    s.flush(wall + 20.0);
    emitted += out.size();

    bool ok = true;
    std::vector<bool> on_seen(piece.size(), false);
    std::map<std::pair<int, int>, int> open;
    std::optional<std::size_t> last_index;
    for (const auto& e : out) {
      const auto key = std::make_pair(int{e.event.channel}, int{e.event.pitch});
      // partner of partner is the event's own index
      const std::size_t idx = piece.events[e.event.partner].partner;
      if (e.event.kind == MidiEventKind::NoteOn) {
        if (e.recovery || on_seen[idx]) ok = false;
        on_seen[idx] = true;
        ++open[key];
      } else {
        if (open[key] <= 0) ok = false;
        --open[key];
      }
      if (!e.recovery) {
        if (last_index && idx <= *last_index) ok = false;
        last_index = idx;
      }
    }
    for (const auto& [k, n] : open) ok = ok && n == 0;
    if (!ok) ++failures;
  }
  return {failures == 0, fmt("%d/%d random streams violated an invariant (%zu events emitted)", failures, trials,
                             emitted)};
}

Outcome loopback_broadcast() {
  UdpReceiver rx;
  StateMailbox mailbox;
  std::vector<double> arrivals;
  std::vector<std::string> payloads;
  std::atomic<bool> done{false};
  const auto t0 = Clock::now();
  std::thread listener([&] {
    while (!done) {
      if (auto p = rx.receive(std::chrono::milliseconds(50))) {
        arrivals.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
        payloads.push_back(std::move(*p));
      }
    }
  });
  std::jthread producer([&](std::stop_token st) {
    TrackerState s;
    s.phase = TrackerPhase::Tracking;
    s.confidence = 0.9;
    while (!st.stop_requested()) {
      s.position_ref_ms += 20.0;
      s.live_frame++;
      mailbox.publish(s);
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
  BroadcastOptions bo;
  bo.duration_ms = 10000.0;
  const auto stats = run_broadcaster(mailbox, UdpTarget{"127.0.0.1", rx.port()}, bo);
  producer.request_stop();
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  done = true;
  listener.join();

  std::vector<double> gaps;
  for (std::size_t i = 1; i < arrivals.size(); ++i) gaps.push_back(arrivals[i] - arrivals[i - 1]);
  const double p95 = gaps.empty() ? INFINITY : test::percentile(gaps, 95.0);
  const auto schema = test::load_packet_schema();
  bool seq_ok = true, schema_ok = true;
  long long prev = -1;
  for (const auto& p : payloads) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(p);
    } catch (const nlohmann::json::exception&) {
      schema_ok = false;
      continue;
    }
    schema_ok = schema_ok && test::schema_valid(schema, j);
    const long long seq = j.value("seq", -1LL);
    seq_ok = seq_ok && seq > prev;
    prev = seq;
  }
  return {p95 >= 15.0 && p95 <= 25.0 && seq_ok && schema_ok && payloads.size() >= 400,
          fmt("%zu packets (%llu sent), p95 inter-arrival %.2f ms, seq %s, schema %s", payloads.size(),
              static_cast<unsigned long long>(stats.sent), p95, seq_ok ? "ok" : "BAD", schema_ok ? "ok" : "BAD")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Two runs of the command-line tool over one manifest, compared byte for byte.
Outcome deterministic_logs(const fs::path& fixtures, const fs::path& scratch) {
  auto m = cli::load_manifest(fixtures / "manifest_normal.json");
  m.output_dir = scratch / "repeat_out";
  const fs::path manifest = scratch / "repeat.json";
  cli::write_manifest(manifest, m);
  const char* files[] = {"events.jsonl", "positions.jsonl", "scheduler.jsonl", "summary.json"};
  std::vector<std::string> first;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(m.output_dir);
    const std::string cmd = std::string(MTRACK_CLI_PATH) + " track \"" + manifest.string() +
                            "\" --as-fast-as-possible > \"" + (scratch / "repeat_stdout.txt").string() + "\"";
    if (const int rc = std::system(cmd.c_str()); rc != 0) return {false, fmt("track exited with %d", rc)};
    for (std::size_t i = 0; i < std::size(files); ++i) {
      const auto bytes = slurp(m.output_dir / files[i]);
      if (bytes.empty()) return {false, std::string(files[i]) + " is empty"};
      if (run == 0) {
        first.push_back(bytes);
      } else if (bytes != first[i]) {
        return {false, std::string(files[i]) + " differs between runs"};
      }
    }
  }
  std::size_t total = 0;
  for (const auto& f : first) total += f.size();
  return {true, fmt("4 logs identical across two runs (%zu bytes)", total)};
}

Outcome step_latency(const fs::path& scratch) {
  const auto piece = make_duet_piece(31, 150);  // 5 minutes at 120 BPM
  write_midi(scratch / "long.mid", to_smf(piece));
  encode_wav(scratch / "long_reh.wav",
             render_notes(piece.piano, scenario_warp(piece, TempoScenario::Rehearsed, 32, 500.0), Timbre::Piano));
  RenderOptions ro;
  ro.noise_level = 1e-3;
  encode_wav(scratch / "long_live.wav",
             render_notes(piece.piano, scenario_warp(piece, TempoScenario::Normal, 33, 1000.0), Timbre::Piano, ro));
  cli::RunManifest m;
  m.piece_id = "long";
  m.reference_midi = scratch / "long.mid";
  m.counterpart_track = 2;
  m.rehearsed_audio = scratch / "long_reh.wav";
  m.live_audio = scratch / "long_live.wav";
  m.output_dir = scratch / "long_out";
  const auto r = cli::run_track(m, {});
  if (r.step_ms.empty()) return {false, "tracker never started"};
  const double p99 = test::percentile(r.step_ms, 99.0);
  const double mx = *std::max_element(r.step_ms.begin(), r.step_ms.end());
  return {p99 < 20.0, fmt("%zu steps, %zu workers, p99 %.3f ms, max %.3f ms", r.step_ms.size(),
                          r.final_state.per_worker.size(), p99, mx)};
}

}  // namespace

// Optional arguments pick criteria by number; default runs all nine.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto selected = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  test::TempDir scratch("acceptance");
  const fs::path fixtures = scratch / "fixtures";
  bool fixtures_ok = false;
  if (selected(3) || selected(8)) {
    std::ostringstream out, err;
    cli::FixtureArgs fa;
    fa.out_dir = fixtures;
    fixtures_ok = cli::cmd_fixtures(fa, out, err) == cli::kOk;
    if (!fixtures_ok) std::fprintf(stderr, "fixture generation failed: %s\n", err.str().c_str());
  }

  int failed = 0, run = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& fn) {
    if (!selected(n)) return;
    ++run;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "dtw exhaustive oracle", dtw_oracle);
  report(2, "odtw fidelity", odtw_fidelity);
  report(3, "tempo scenarios", [&] { return fixtures_ok ? tempo_scenarios(fixtures) : Outcome{false, "no fixtures"}; });
  report(4, "latency curve exactness", latency_exact);
  report(5, "music detector", music_detector);
  report(6, "scheduler invariants", scheduler_property);
  report(7, "loopback broadcast", loopback_broadcast);
  report(8, "deterministic logs", [&] {
    return fixtures_ok ? deterministic_logs(fixtures, scratch.path()) : Outcome{false, "no fixtures"};
  });
  report(9, "tracker step latency", [&] { return step_latency(scratch.path()); });
  std::printf("%d of %d criteria failed\n", failed, run);
  return failed == 0 ? 0 : 1;
}
