#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "mtrack/error.hpp"

namespace fs = std::filesystem;
using namespace mtrack::cli;

namespace {

template <typename T>
std::optional<T> opt(const CLI::Option* o, const T& v) {
  return o->count() ? std::optional<T>(v) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mtrack: real-time music tracker, scheduler and evaluation suite"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 tracking-quality failure (no music detected, deviation gate exceeded), "
      "2 usage or I/O error.");

  fs::path a_rehearsed, a_reference, a_out;
  auto* align = app.add_subcommand("align", "Offline DTW of a rehearsed recording against the reference recording");
  align->add_option("rehearsed", a_rehearsed, "Rehearsed WAV")->required();
  align->add_option("reference", a_reference, "Reference WAV")->required();
  align->add_option("-o,--out", a_out, "Time map CSV (rehearsed ms -> reference ms)")->required();

  fs::path d_rehearsed, d_live, d_config;
  auto* detect = app.add_subcommand("detect", "Calibrate the music detector; optionally run it over a live file");
  detect->add_option("rehearsed", d_rehearsed, "Rehearsed WAV")->required();
  auto* d_live_opt = detect->add_option("--live", d_live, "Live WAV to scan for the music onset");
  auto* d_config_opt = detect->add_option("--config", d_config, "Tracker config file");

  fs::path t_manifest;
  TrackOptions topt;
  std::string t_udp;
  fs::path t_midi;
  double t_timeout = 0.0;
  auto* track = app.add_subcommand("track", "Run detector, tracker, scheduler and broadcaster over a manifest");
  track->add_option("manifest", t_manifest, "Run manifest (JSON)")->required();
  auto* rt = track->add_flag("--simulate-realtime", topt.simulate_realtime, "Pace file input at wall-clock speed");
  track->add_flag("--as-fast-as-possible", "Process file input without pacing (default)")->excludes(rt);
  auto* udp_opt = track->add_option("--udp-target", t_udp, "Send position packets to host:port");
  track->add_option("--period-ms", topt.broadcast_period_ms, "Broadcast period")->check(CLI::PositiveNumber);
  auto* midi_opt = track->add_option("--midi-out", t_midi, "Write raw MIDI bytes of scheduled events");
  auto* timeout_opt = track->add_option("--detect-timeout-ms", t_timeout, "Stop if no music is detected by then");

  EvaluateArgs eargs;
  fs::path e_positions, e_map, e_ref_beats, e_live_beats, e_chroma_live, e_chroma_est;
  double e_max = 0.0;
  auto* evaluate = app.add_subcommand("evaluate", "Latency curve and average deviation");
  auto* e_pos_opt = evaluate->add_option("--positions", e_positions, "positions.jsonl from track");
  auto* e_map_opt = evaluate->add_option("--actual-map", e_map, "Actual live -> reference time map CSV");
  auto* e_rb_opt = evaluate->add_option("--ref-beats", e_ref_beats, "Reference beat times (ms per line)");
  auto* e_lb_opt = evaluate->add_option("--live-beats", e_live_beats, "Live beat times (ms per line)");
  auto* e_cl_opt = evaluate->add_option("--chroma-live", e_chroma_live, "Produced counterpart audio");
  auto* e_ce_opt = evaluate->add_option("--chroma-estimated", e_chroma_est, "Expected counterpart audio");
  auto* e_max_opt = evaluate->add_option("--max-average-ms", e_max, "Exit 1 when the average deviation exceeds this");
  evaluate->add_option("-o,--out", eargs.out_dir, "Output directory")->required();

  FixtureArgs fargs;
  auto* fixtures = app.add_subcommand("fixtures", "Generate the synthetic duet fixture set");
  fixtures->add_option("-o,--out", fargs.out_dir, "Output directory")->required();
  fixtures->add_option("--seed", fargs.seed, "Piece seed");
  fixtures->add_option("--bars", fargs.bars, "Piece length in 4/4 bars")->check(CLI::PositiveNumber);
  fixtures->add_flag("!--no-align", fargs.align_rehearsal, "Use the ground-truth rehearsal map instead of DTW");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageOrIo;
  }

  if (*align) return cmd_align(a_rehearsed, a_reference, a_out, std::cout, std::cerr);
  if (*detect) return cmd_detect(d_rehearsed, opt(d_live_opt, d_live), opt(d_config_opt, d_config), std::cout, std::cerr);
  if (*track) {
    try {
      if (udp_opt->count()) topt.udp_target = mtrack::parse_udp_target(t_udp);
    } catch (const mtrack::Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsageOrIo;
    }
    topt.midi_out = opt(midi_opt, t_midi);
    topt.detect_timeout_ms = opt(timeout_opt, t_timeout);
    return cmd_track(t_manifest, topt, std::cout, std::cerr);
  }
  if (*evaluate) {
    eargs.positions = opt(e_pos_opt, e_positions);
    eargs.actual_map = opt(e_map_opt, e_map);
    eargs.ref_beats = opt(e_rb_opt, e_ref_beats);
    eargs.live_beats = opt(e_lb_opt, e_live_beats);
    eargs.chroma_live = opt(e_cl_opt, e_chroma_live);
    eargs.chroma_estimated = opt(e_ce_opt, e_chroma_est);
    eargs.max_average_ms = opt(e_max_opt, e_max);
    return cmd_evaluate(eargs, std::cout, std::cerr);
  }
  if (*fixtures) return cmd_fixtures(fargs, std::cout, std::cerr);
  return kUsageOrIo;
}
