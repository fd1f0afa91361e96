#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <thread>

#include "mtrack/audio_io.hpp"
#include "mtrack/dtw.hpp"
#include "mtrack/error.hpp"
#include "mtrack/features.hpp"
#include "mtrack/midi.hpp"
#include "mtrack/scheduler.hpp"
#include "mtrack/synth.hpp"
#include "mtrack/timemap.hpp"

namespace mtrack::cli {
namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text; }

std::string artifacts_line(const std::vector<fs::path>& paths, ojson extra = ojson::object()) {
  ojson j = std::move(extra);
  j["artifacts"] = ojson::array();
  for (const auto& p : paths) j["artifacts"].push_back(p.string());
  return j.dump();
}

// Runs fn and maps library failures to exit code 2.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
  } catch (const json::exception& e) {
    err << "error: bad JSON: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  }
  return kUsageOrIo;
}

TrackerConfig config_or_default(const std::optional<fs::path>& path) {
  return path ? load_tracker_config(*path) : TrackerConfig{};
}

RecordingFeatures features_for(const AudioClip& clip, const TrackerConfig& cfg) {
  return extract_recording_features(clip, cfg.frame_period_ms, cfg.window_ms, cfg.low_res_time_factor,
                                    cfg.low_res_band_factor);
}

}  // namespace

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open manifest " + path.string());
  const json j = json::parse(in);
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  auto required = [&](const char* key) {
    if (!j.contains(key)) throw Error(Errc::InvalidParam, std::string("manifest lacks '") + key + "'");
    return resolve(j.at(key).get<std::string>());
  };
  auto optional = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return resolve(j.at(key).get<std::string>());
  };
  RunManifest m;
  m.piece_id = j.value("piece_id", path.stem().string());
  m.reference_midi = required("reference_midi");
  m.counterpart_track = j.value("counterpart_track", -1);
  m.rehearsed_audio = required("rehearsed_audio");
  m.rehearsal_map = optional("rehearsal_map");
  m.live_audio = required("live_audio");
  m.tracker_config = optional("tracker_config");
  m.output_dir = required("output_dir");
  m.ref_beats = optional("ref_beats");
  m.live_beats = optional("live_beats");
  for (const fs::path& p : {m.reference_midi, m.rehearsed_audio, m.live_audio}) {
    if (!fs::exists(p)) throw Error(Errc::IoError, "manifest references missing file " + p.string());
  }
  return m;
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return fs::relative(p, base).generic_string(); };
  ojson j;
  j["piece_id"] = m.piece_id;
  j["reference_midi"] = rel(m.reference_midi);
  j["counterpart_track"] = m.counterpart_track;
  j["rehearsed_audio"] = rel(m.rehearsed_audio);
  if (m.rehearsal_map) j["rehearsal_map"] = rel(*m.rehearsal_map);
  j["live_audio"] = rel(m.live_audio);
  if (m.tracker_config) j["tracker_config"] = rel(*m.tracker_config);
  j["output_dir"] = rel(m.output_dir);
  if (m.ref_beats) j["ref_beats"] = rel(*m.ref_beats);
  if (m.live_beats) j["live_beats"] = rel(*m.live_beats);
  write_text(path, j.dump(2) + "\n");
}

TrackResult run_track(const RunManifest& m, const TrackOptions& options) {
  const TrackerConfig cfg = config_or_default(m.tracker_config);
  MidiEventList events = parse_midi(m.reference_midi);
  if (m.counterpart_track >= 0) events = select_track(events, static_cast<std::uint16_t>(m.counterpart_track));

  const AudioClip rehearsed = decode_wav(m.rehearsed_audio);
  auto reference = std::make_shared<const TrackerReference>(prepare_reference(features_for(rehearsed, cfg), cfg));
  const TimeMap rehearsal_map = m.rehearsal_map ? read_timemap_csv(*m.rehearsal_map)
                                                : TimeMap::identity(0.0, reference->duration_ms());

  const AudioClip live = decode_wav(m.live_audio);
  if (live.sample_rate != rehearsed.sample_rate) {
    throw Error(Errc::InvalidParam, "live and rehearsed sample rates differ");
  }
  const FrameStream frames = frame(live, cfg.frame_period_ms, cfg.window_ms);
  StreamingFeatures streaming(live.sample_rate, cfg.frame_period_ms, cfg.window_ms, cfg.low_res_time_factor,
                              cfg.low_res_band_factor);

  fs::create_directories(m.output_dir);
  TrackResult result;
  const fs::path events_path = m.output_dir / "events.jsonl";
  const fs::path positions_path = m.output_dir / "positions.jsonl";
  const fs::path scheduler_path = m.output_dir / "scheduler.jsonl";
  const fs::path summary_path = m.output_dir / "summary.json";
  auto events_out = open_out(events_path);
  auto positions_out = open_out(positions_path);
  auto scheduler_out = open_out(scheduler_path);
  std::optional<std::ofstream> midi_out;
  if (options.midi_out) midi_out = open_out(*options.midi_out);

  Scheduler scheduler(std::move(events));
  scheduler.set_sink([&](const ScheduledEvent& e) {
    scheduler_out << scheduled_event_json(e) << '\n';
    if (midi_out) {
      for (auto b : midi_bytes(e.event)) midi_out->put(static_cast<char>(b));
    }
  });

  StateMailbox mailbox;
  std::optional<std::jthread> broadcaster;
  if (options.udp_target) {
    BroadcastOptions bo;
    bo.period_ms = options.broadcast_period_ms;
    UdpSender probe(*options.udp_target);  // resolve now so setup errors surface here
    broadcaster.emplace([&, target = *options.udp_target, bo](std::stop_token st) {
      result.broadcast = run_broadcaster(mailbox, target, bo, st);
    });
  }

  Tracker tracker(reference, cfg);
  using Clock = std::chrono::steady_clock;
  const auto session_start = Clock::now();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double live_ms = static_cast<double>(i + 1) * cfg.frame_period_ms;
    if (options.simulate_realtime) {
      std::this_thread::sleep_until(session_start + std::chrono::duration_cast<Clock::duration>(
                                                        std::chrono::duration<double, std::milli>(live_ms)));
    }
    auto f = streaming.push(frames.frame(i));
    const bool was_tracking = tracker.tracking();
    const auto t0 = Clock::now();
    const TrackerState& state = tracker.push(LiveFrame{std::move(f.diff), std::move(f.low_res)});
    const double step = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (was_tracking) result.step_ms.push_back(step);
    if (!result.detected && tracker.tracking()) {
      result.detected = true;
      result.detected_at_ms = live_ms;
    }
    for (const auto& e : tracker.drain_events()) events_out << tracker_event_json(e) << '\n';

    const double wall = options.simulate_realtime
                            ? std::chrono::duration<double, std::milli>(Clock::now() - session_start).count()
                            : live_ms;
    const double ref_ms = rehearsal_map.lookup(state.position_ref_ms);
    if (state.phase == TrackerPhase::Tracking) {
      scheduler.advance(ref_ms, wall);
      result.tracking_positions.push_back({live_ms, state.position_ref_ms, ref_ms});
    }
    ojson line;
    line["live_ms"] = live_ms;
    line["phase"] = to_string(state.phase);
    line["trusted_worker"] = state.trusted_worker;
    line["position_rehearsed_ms"] = state.position_ref_ms;
    line["position_ref_ms"] = ref_ms;
    line["tempo_ratio"] = state.tempo_ratio;
    line["confidence"] = state.confidence;
    positions_out << line.dump() << '\n';
    if (broadcaster) mailbox.publish(state);
    result.frames = i + 1;
    if (!result.detected && options.detect_timeout_ms && live_ms >= *options.detect_timeout_ms) break;
  }
  scheduler.flush(static_cast<double>(result.frames) * cfg.frame_period_ms);
  if (broadcaster) {
    broadcaster->request_stop();
    broadcaster->join();
  }
  result.final_state = tracker.state();

  ojson summary;
  summary["piece_id"] = m.piece_id;
  summary["frames"] = result.frames;
  summary["detected"] = result.detected;
  summary["detected_at_ms"] = result.detected ? ojson(result.detected_at_ms) : ojson(nullptr);
  const auto& s = result.final_state;
  summary["phase"] = to_string(s.phase);
  summary["position_ref_ms"] = s.position_ref_ms;
  summary["tempo_ratio"] = s.tempo_ratio;
  summary["confidence"] = s.confidence;
  summary["trusted_worker"] = s.trusted_worker;
  summary["respawns"] = s.respawns;
  summary["switches"] = s.switches;
  summary["workers"] = ojson::array();
  for (const auto& w : s.per_worker) {
    summary["workers"].push_back({{"id", w.id},
                                  {"start_frame", w.start_frame},
                                  {"current_ref_frame", w.current_ref_frame},
                                  {"normalized_cost", w.normalized_cost},
                                  {"tempo_ratio", w.tempo_ratio}});
  }
  if (options.udp_target) summary["broadcast"] = {{"sent", result.broadcast.sent}, {"send_errors", result.broadcast.send_errors}};
  write_text(summary_path, summary.dump(2) + "\n");

  result.artifacts = {events_path, positions_path, scheduler_path, summary_path};
  if (options.midi_out) result.artifacts.push_back(*options.midi_out);
  return result;
}

int cmd_align(const fs::path& rehearsed, const fs::path& reference, const fs::path& out_csv, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&]() -> int {
    const TrackerConfig cfg;
    const auto a = features_for(decode_wav(rehearsed), cfg);
    const auto b = features_for(decode_wav(reference), cfg);
    const WarpPath path = dtw_align(a.diff, b.diff);
    write_timemap_csv(out_csv, from_warp_path(path, a.diff.frame_period_ms(), b.diff.frame_period_ms()));
    ojson extra;
    extra["cost"] = path.cost;
    extra["path_length"] = path.pairs.size();
    out << artifacts_line({out_csv}, extra) << '\n';
    return kOk;
  });
}

int cmd_detect(const fs::path& rehearsed, const std::optional<fs::path>& live, const std::optional<fs::path>& config,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const TrackerConfig cfg = config_or_default(config);
    const auto clip = decode_wav(rehearsed);
    auto ref = std::make_shared<const TrackerReference>(prepare_reference(features_for(clip, cfg), cfg));
    ojson j;
    j["threshold"] = ref->cost_threshold;
    j["music_start_ms"] = static_cast<double>(ref->music_start) * cfg.frame_period_ms;
    j["prefix_frames"] = ref->detector_prefix.rows();
    int code = kOk;
    if (live) {
      const AudioClip l = decode_wav(*live);
      const FrameStream frames = frame(l, cfg.frame_period_ms, cfg.window_ms);
      StreamingFeatures streaming(l.sample_rate, cfg.frame_period_ms, cfg.window_ms, cfg.low_res_time_factor,
                                  cfg.low_res_band_factor);
      Tracker tracker(ref, cfg);
      std::optional<double> at;
      for (std::size_t i = 0; i < frames.size() && !at; ++i) {
        auto f = streaming.push(frames.frame(i));
        tracker.push(LiveFrame{std::move(f.diff), std::move(f.low_res)});
        if (tracker.tracking()) at = static_cast<double>(i + 1) * cfg.frame_period_ms;
      }
      j["detected"] = at.has_value();
      j["detected_at_ms"] = at ? ojson(*at) : ojson(nullptr);
      if (!at) {
        err << "no music detected\n";
        code = kQualityFailure;
      }
    }
    out << j.dump() << '\n';
    return code;
  });
}

int cmd_track(const fs::path& manifest, const TrackOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const TrackResult r = run_track(load_manifest(manifest), options);
    ojson extra;
    extra["detected"] = r.detected;
    out << artifacts_line(r.artifacts, extra) << '\n';
    if (!r.detected) {
      err << "no music detected\n";
      return static_cast<int>(kQualityFailure);
    }
    return static_cast<int>(kOk);
  });
}

std::vector<std::pair<double, double>> read_tracking_positions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<std::pair<double, double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("phase") != "tracking") continue;
    out.emplace_back(j.at("live_ms").get<double>(), j.at("position_ref_ms").get<double>());
  }
  return out;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    LatencyCurve curve;
    if (a.chroma_live || a.chroma_estimated) {
      if (!a.chroma_live || !a.chroma_estimated) {
        throw Error(Errc::InvalidParam, "audio evaluation needs both --chroma-live and --chroma-estimated");
      }
      std::optional<BeatAnnotation> tempo;
      if (a.live_beats) tempo = read_beats(*a.live_beats);
      curve = chroma_dtw_latency(decode_wav(*a.chroma_live), decode_wav(*a.chroma_estimated), tempo);
    } else {
      if (!a.ref_beats || !a.live_beats) throw Error(Errc::InvalidParam, "--ref-beats and --live-beats are required");
      if (!a.positions == !a.actual_map) throw Error(Errc::InvalidParam, "give exactly one of --positions, --actual-map");
      const BeatAnnotation ref = read_beats(*a.ref_beats);
      const BeatAnnotation live = read_beats(*a.live_beats);
      const TimeMap estimated = invert(estimated_counterpart_map(ref, live));
      if (a.positions) {
        const auto pos = read_tracking_positions(*a.positions);
        if (pos.empty()) throw Error(Errc::EmptyInput, "no tracking-phase positions in " + a.positions->string());
        curve = latency_curve_from_positions(pos, estimated, live);
      } else {
        curve = latency_curve(read_timemap_csv(*a.actual_map), estimated, live);
      }
    }
    fs::create_directories(a.out_dir);
    const fs::path csv = a.out_dir / "latency.csv";
    const fs::path summary = a.out_dir / "summary.json";
    write_latency_csv(csv, curve);
    const LatencySummary s = curve.summary();
    write_text(summary, latency_summary_json(s) + "\n");
    ojson extra;
    extra["average_deviation_ms"] = s.average_deviation_ms;
    out << artifacts_line({csv, summary}, extra) << '\n';
    if (a.max_average_ms && s.average_deviation_ms > *a.max_average_ms) {
      err << "average deviation " << s.average_deviation_ms << " ms exceeds " << *a.max_average_ms << " ms\n";
      return kQualityFailure;
    }
    return kOk;
  });
}

int cmd_fixtures(const FixtureArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    fs::create_directories(a.out_dir);
    std::vector<fs::path> written;
    auto add = [&](const fs::path& p) {
      written.push_back(p);
      return p;
    };
    const DuetPiece piece = make_duet_piece(a.seed, a.bars);
    const fs::path midi = add(a.out_dir / "reference.mid");
    write_midi(midi, to_smf(piece));

    const TimeMap identity = TimeMap::identity(0.0, piece.length_ms());
    encode_wav(add(a.out_dir / "reference.wav"), render_notes(piece.piano, identity, Timbre::Piano));
    const TimeMap rehearsed_warp = scenario_warp(piece, TempoScenario::Rehearsed, a.seed + 1, 500.0);
    const fs::path rehearsed = add(a.out_dir / "rehearsed.wav");
    encode_wav(rehearsed, render_notes(piece.piano, rehearsed_warp, Timbre::Piano));
    write_timemap_csv(add(a.out_dir / "rehearsal_map_truth.csv"), invert(rehearsed_warp));
    const fs::path map = a.out_dir / "rehearsal_map.csv";
    if (a.align_rehearsal) {
      std::ostringstream sink;
      if (const int rc = cmd_align(rehearsed, a.out_dir / "reference.wav", map, sink, err); rc != kOk) return rc;
    } else {
      write_timemap_csv(map, invert(rehearsed_warp));
    }
    add(map);
    const fs::path config = add(a.out_dir / "tracker.conf");
    write_text(config, format_tracker_config(TrackerConfig{}));
    const fs::path ref_beats = add(a.out_dir / "ref_beats.txt");
    write_beats(ref_beats, piece.beats());

    auto manifest_for = [&](const std::string& name, const fs::path& live, std::optional<fs::path> live_beats) {
      RunManifest m;
      m.piece_id = name;
      m.reference_midi = midi;
      m.counterpart_track = 2;
      m.rehearsed_audio = rehearsed;
      m.rehearsal_map = map;
      m.live_audio = live;
      m.tracker_config = config;
      m.output_dir = a.out_dir / "runs" / name;
      if (live_beats) {
        m.ref_beats = ref_beats;
        m.live_beats = live_beats;
      }
      write_manifest(add(a.out_dir / ("manifest_" + name + ".json")), m);
    };

    std::uint32_t k = 0;
    for (auto sc : {TempoScenario::Normal, TempoScenario::Slow, TempoScenario::Fast, TempoScenario::Accelerando}) {
      const std::string name = to_string(sc);
      const TimeMap warp = scenario_warp(piece, sc, a.seed + 10 + k, 1000.0);
      RenderOptions ro;
      ro.noise_level = 1e-3;
      ro.noise_seed = a.seed + 20 + k++;
      const fs::path live = add(a.out_dir / ("live_" + name + ".wav"));
      encode_wav(live, render_notes(piece.piano, warp, Timbre::Piano, ro));
      BeatAnnotation live_beats;
      for (double b : piece.beats().beats_ms) live_beats.beats_ms.push_back(warp.lookup(b));
      const fs::path beats = add(a.out_dir / ("live_" + name + "_beats.txt"));
      write_beats(beats, live_beats);
      manifest_for(name, live, beats);
    }
    const fs::path silence = add(a.out_dir / "silence.wav");
    encode_wav(silence, silence_clip(30000.0));
    manifest_for("silence", silence, std::nullopt);
    const fs::path noise = add(a.out_dir / "noise.wav");
    encode_wav(noise, noise_clip(30000.0, 0.01, a.seed + 99));
    manifest_for("noise", noise, std::nullopt);

    out << artifacts_line(written) << '\n';
    return kOk;
  });
}

}  // namespace mtrack::cli
