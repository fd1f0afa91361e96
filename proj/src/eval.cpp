#include "mtrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "mtrack/dtw.hpp"
#include "mtrack/error.hpp"
#include "mtrack/features.hpp"

namespace mtrack {
namespace {

// Piecewise-linear through the knots, extending the end segments.
double extrapolating_lookup(const std::vector<double>& from, const std::vector<double>& to, double t) {
  std::size_t i = static_cast<std::size_t>(std::upper_bound(from.begin(), from.end(), t) - from.begin());
  i = std::clamp<std::size_t>(i, 1, from.size() - 1);
  const double x0 = from[i - 1], x1 = from[i];
  const double y0 = to[i - 1], y1 = to[i];
  return y0 + (t - x0) * (y1 - y0) / (x1 - x0);
}

LatencyCurve finish(std::vector<LatencySample> samples) {
  LatencyCurve curve;
  curve.samples = std::move(samples);
  double sum = 0.0;
  for (const auto& s : curve.samples) sum += std::abs(s.latency_ms);
  curve.average_deviation_ms = curve.samples.empty() ? 0.0 : sum / static_cast<double>(curve.samples.size());
  return curve;
}

LatencySample make_sample(double t, double latency, const BeatAnnotation& tempo) {
  const double bpm = tempo.bpm_at(t);
  const double sixteenth = 60000.0 / bpm / 4.0;
  return {t, latency, latency / sixteenth, bpm};
}

std::vector<double> grid(double begin, double end) {
  if (!(end >= begin)) throw Error(Errc::DomainMismatch, "latency maps have disjoint live domains");
  std::vector<double> out;
  for (std::size_t k = 0;; ++k) {
    const double t = begin + kLatencySampleMs * static_cast<double>(k);
    if (t > end + 1e-9) break;
    out.push_back(t);
  }
  return out;
}

}  // namespace

void BeatAnnotation::validate() const {
  if (beats_ms.size() < 2) throw Error(Errc::InvalidParam, "beat annotation needs at least two beats");
  for (std::size_t i = 1; i < beats_ms.size(); ++i) {
    if (!(beats_ms[i] > beats_ms[i - 1])) throw Error(Errc::InvalidParam, "beat times must be strictly increasing");
  }
}

double BeatAnnotation::bpm_at(double t_ms) const {
  std::size_t i = static_cast<std::size_t>(std::upper_bound(beats_ms.begin(), beats_ms.end(), t_ms) - beats_ms.begin());
  i = std::clamp<std::size_t>(i, 1, beats_ms.size() - 1);
  return 60000.0 / (beats_ms[i] - beats_ms[i - 1]);
}

BeatAnnotation read_beats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  BeatAnnotation b;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      b.beats_ms.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw Error(Errc::MalformedFile, "bad beat line '" + line + "' in " + path.string());
    }
  }
  b.validate();
  return b;
}

void write_beats(const std::filesystem::path& path, const BeatAnnotation& beats) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << std::setprecision(12);
  for (double t : beats.beats_ms) out << t << '\n';
}

LatencySummary LatencyCurve::summary(double settle_ms, double tolerance_beats) const {
  LatencySummary s;
  s.average_deviation_ms = average_deviation_ms;
  for (const auto& x : samples) s.max_abs_latency_ms = std::max(s.max_abs_latency_ms, std::abs(x.latency_ms));
  if (samples.empty()) return s;

  auto within = [&](const LatencySample& x) {
    return std::abs(x.latency_ms) <= tolerance_beats * 60000.0 / x.tempo_bpm;
  };
  // Scan backwards tracking how far the current good run extends.
  const double t_last = samples.back().t_ms;
  std::size_t converged = samples.size();
  double run_end = -1.0;
  for (std::size_t i = samples.size(); i-- > 0;) {
    if (!within(samples[i])) {
      run_end = -1.0;
      continue;
    }
    if (run_end < 0.0) run_end = samples[i].t_ms;
    const bool to_end = run_end == t_last;
    if (run_end - samples[i].t_ms >= settle_ms - 1e-9 || (to_end && i == 0)) converged = i;
  }
  std::size_t from = 0;
  if (converged < samples.size()) {
    s.convergence_time_ms = samples[converged].t_ms - samples.front().t_ms;
    from = converged;
  }
  double sum = 0.0;
  for (std::size_t i = from; i < samples.size(); ++i) sum += std::abs(samples[i].latency_ms);
  s.steady_state_average_deviation_ms = sum / static_cast<double>(samples.size() - from);
  return s;
}

MidiEventList warp_midi_to_beats(const MidiEventList& events, const BeatAnnotation& ref_beats,
                                 const BeatAnnotation& live_beats) {
  if (ref_beats.beats_ms.size() != live_beats.beats_ms.size()) {
    throw Error(Errc::BeatCountMismatch, "reference and live annotations differ in beat count");
  }
  ref_beats.validate();
  live_beats.validate();
  MidiEventList out = events;
  for (auto& e : out.events) e.t_ref_ms = extrapolating_lookup(ref_beats.beats_ms, live_beats.beats_ms, e.t_ref_ms);
  return out;
}

TimeMap estimated_counterpart_map(const BeatAnnotation& ref_beats, const BeatAnnotation& live_beats) {
  if (ref_beats.beats_ms.size() != live_beats.beats_ms.size()) {
    throw Error(Errc::BeatCountMismatch, "reference and live annotations differ in beat count");
  }
  ref_beats.validate();
  live_beats.validate();
  std::vector<Knot> knots;
  for (std::size_t i = 0; i < ref_beats.beats_ms.size(); ++i) {
    knots.push_back({ref_beats.beats_ms[i], live_beats.beats_ms[i]});
  }
  return TimeMap(std::move(knots));
}

LatencyCurve latency_curve(const TimeMap& actual, const TimeMap& estimated, const BeatAnnotation& tempo) {
  tempo.validate();
  const TimeMap back = invert(estimated);
  std::vector<LatencySample> samples;
  for (double t : grid(std::max(actual.source_begin(), estimated.source_begin()),
                       std::min(actual.source_end(), estimated.source_end()))) {
    samples.push_back(make_sample(t, t - back.lookup(actual.lookup(t)), tempo));
  }
  return finish(std::move(samples));
}

LatencyCurve latency_curve_from_positions(const std::vector<std::pair<double, double>>& actual,
                                          const TimeMap& estimated, const BeatAnnotation& tempo) {
  tempo.validate();
  if (actual.empty()) throw Error(Errc::EmptyInput, "no actual positions");
  const TimeMap back = invert(estimated);
  const double begin = std::max(actual.front().first, estimated.source_begin());
  const double end = std::min(actual.back().first, estimated.source_end());
  std::vector<LatencySample> samples;
  std::size_t k = 0;
  for (double t : grid(begin, end)) {
    // Latest reported position at or before t (sample-and-hold).
    while (k + 1 < actual.size() && actual[k + 1].first <= t + 1e-9) ++k;
    samples.push_back(make_sample(t, t - back.lookup(actual[k].second), tempo));
  }
  return finish(std::move(samples));
}

LatencyCurve chroma_dtw_latency(const AudioClip& live, const AudioClip& estimated,
                                const std::optional<BeatAnnotation>& tempo) {
  if (live.samples.empty() || estimated.samples.empty()) throw Error(Errc::EmptyInput, "empty clip");
  const FeatureSequence est = chroma(frame(estimated));
  const FeatureSequence act = chroma(frame(live));
  const double period = est.frame_period_ms();
  // p indexes the estimated clip, q the live one: the map gives, for each
  // estimated instant, when the live clip plays the same content.
  const TimeMap map = from_warp_path(dtw_align(est, act), period, act.frame_period_ms());
  const BeatAnnotation beats = tempo ? *tempo : BeatAnnotation{{0.0, 500.0}};
  beats.validate();
  std::vector<LatencySample> samples;
  for (double t : grid(map.source_begin(), map.source_end())) {
    samples.push_back(make_sample(t, map.lookup(t) - t, beats));
  }
  return finish(std::move(samples));
}

void write_latency_csv(const std::filesystem::path& path, const LatencyCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "t_ms,latency_ms,latency_sixteenths,tempo_bpm\n" << std::setprecision(10);
  for (const auto& s : curve.samples) {
    out << s.t_ms << ',' << s.latency_ms << ',' << s.latency_sixteenths << ',' << s.tempo_bpm << '\n';
  }
}

std::string latency_summary_json(const LatencySummary& s) {
  nlohmann::ordered_json j;
  j["average_deviation_ms"] = s.average_deviation_ms;
  j["max_abs_latency_ms"] = s.max_abs_latency_ms;
  j["convergence_time_ms"] = s.convergence_time_ms ? nlohmann::ordered_json(*s.convergence_time_ms) : nullptr;
  j["steady_state_average_deviation_ms"] = s.steady_state_average_deviation_ms;
  return j.dump();
}

}  // namespace mtrack
