#include "mtrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

// std::mt19937 output is fixed by the standard; the distributions are not,
// so draws are derived by hand.
class Rng {
 public:
  explicit Rng(std::uint32_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 8) * (1.0 / 16777216.0); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int index(int n) { return std::min(n - 1, static_cast<int>(uniform() * n)); }
  double gaussian() {
    const double u1 = std::max(uniform(), 1e-12);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937 gen_;
};

double hz(int pitch) { return 440.0 * std::pow(2.0, (pitch - 69) / 12.0); }

// Diatonic triads of C major as semitone offsets from C.
constexpr int kTriads[6][3] = {{0, 4, 7}, {2, 5, 9}, {4, 7, 11}, {5, 9, 12}, {7, 11, 14}, {9, 12, 16}};

struct Voice {
  double start_s;
  double end_s;  // note off
  double freq;
  double amp;
};

void synth_voice(std::vector<float>& out, int sr, const Voice& v, Timbre timbre) {
  const double release = timbre == Timbre::Violin ? 0.10 : timbre == Timbre::Piano ? 0.06 : 0.03;
  const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(v.start_s * sr)));
  const auto last = std::min(out.size(), static_cast<std::size_t>(std::ceil((v.end_s + release) * sr)));
  const double two_pi = 2.0 * std::numbers::pi;
  const double tau = std::clamp(0.6 * std::sqrt(261.6 / v.freq), 0.15, 1.2);
  for (std::size_t n = first; n < last; ++n) {
    const double t = static_cast<double>(n) / sr - v.start_s;
    if (t < 0.0) continue;
    double rel = 1.0;
    const double after = static_cast<double>(n) / sr - v.end_s;
    if (after > 0.0) rel = std::max(0.0, 1.0 - after / release);
    double s = 0.0;
    switch (timbre) {
      case Timbre::Piano: {
        const double env = std::min(t / 0.005, 1.0) * std::exp(-t / tau);
        for (int k = 1; k <= 6; ++k) {
          if (v.freq * k > 0.45 * sr) break;
          s += std::exp(-0.5 * (k - 1) * t) / std::pow(k, 1.2) * std::sin(two_pi * v.freq * k * t);
        }
        s *= env;
        break;
      }
      case Timbre::Violin: {
        const double env = std::min(t / 0.08, 1.0);
        const double phase = two_pi * v.freq * t + v.freq * 0.003 / 5.5 * (1.0 - std::cos(two_pi * 5.5 * t));
        for (int k = 1; k <= 8; ++k) {
          if (v.freq * k > 0.45 * sr) break;
          s += std::sin(phase * k) / k;
        }
        s *= 0.6 * env;
        break;
      }
      case Timbre::Sine: {
        const double env = std::min(t / 0.01, 1.0) * std::exp(-t / 1.0);
        s = env * std::sin(two_pi * v.freq * t);
        break;
      }
    }
    out[n] += static_cast<float>(v.amp * rel * s);
  }
}

}  // namespace

BeatAnnotation DuetPiece::beats() const {
  BeatAnnotation b;
  const int n = beats_per_bar * bars;
  for (int i = 0; i <= n; ++i) b.beats_ms.push_back(i * beat_ms());
  return b;
}

DuetPiece make_duet_piece(std::uint32_t seed, int bars, double bpm) {
  if (bars < 1 || !(bpm > 0.0)) throw Error(Errc::InvalidParam, "piece needs bars >= 1 and bpm > 0");
  Rng rng(seed);
  DuetPiece piece;
  piece.bpm = bpm;
  piece.bars = bars;
  const double beat = piece.beat_ms();
  const double eighth = beat / 2.0;
  int previous = -1;
  for (int bar = 0; bar < bars; ++bar) {
    for (int half = 0; half < 2; ++half) {
      int chord = rng.index(6);
      if (chord == previous) chord = (chord + 1 + rng.index(5)) % 6;
      previous = chord;
      const auto& tri = kTriads[chord];
      const double t0 = (bar * piece.beats_per_bar + half * 2) * beat;
      // Left hand: root held for the half bar.
      piece.piano.push_back({t0, 2 * beat - 20.0, 36 + tri[0] + 12 * rng.index(2), 80 + rng.index(15)});
      // Right hand: four eighths drawn from the chord tones, with an
      // occasional quarter note.
      for (int k = 0; k < 4; ++k) {
        const bool quarter = k % 2 == 0 && rng.uniform() < 0.25;
        const int tone = tri[rng.index(3)] + 60 + 12 * rng.index(2);
        piece.piano.push_back({t0 + k * eighth, (quarter ? 2 : 1) * eighth - 10.0, tone, 70 + rng.index(30)});
        if (quarter) ++k;
      }
      // Violin: a half note or two quarters on chord tones above the piano.
      if (rng.uniform() < 0.5) {
        piece.violin.push_back({t0, 2 * beat - 30.0, 72 + tri[rng.index(3)], 85});
      } else {
        piece.violin.push_back({t0, beat - 30.0, 72 + tri[rng.index(3)], 85});
        piece.violin.push_back({t0 + beat, beat - 30.0, 74 + tri[rng.index(3)], 85});
      }
    }
  }
  return piece;
}

SmfSong to_smf(const DuetPiece& piece) {
  SmfSong song;
  song.tempos.push_back({0, piece.bpm});
  const double ticks_per_ms = song.ppq / piece.beat_ms();
  auto convert = [&](const std::vector<Note>& notes, std::uint8_t channel) {
    std::vector<SmfNote> out;
    for (const auto& n : notes) {
      out.push_back({static_cast<std::uint32_t>(std::lround(n.onset_ms * ticks_per_ms)),
                     static_cast<std::uint32_t>(std::lround(n.duration_ms * ticks_per_ms)),
                     static_cast<std::uint8_t>(n.pitch), static_cast<std::uint8_t>(n.velocity), channel});
    }
    return out;
  };
  song.tracks.push_back(convert(piece.piano, 0));
  song.tracks.push_back(convert(piece.violin, 1));
  return song;
}

AudioClip render_notes(const std::vector<Note>& notes, const TimeMap& warp, Timbre timbre,
                       const RenderOptions& options) {
  if (options.sample_rate <= 0) throw Error(Errc::InvalidParam, "sample rate must be positive");
  std::vector<Voice> voices;
  double end_s = 0.0;
  for (const auto& n : notes) {
    const double on = warp.lookup(n.onset_ms) / 1000.0;
    const double off = std::max(on + 0.02, warp.lookup(n.onset_ms + n.duration_ms) / 1000.0);
    voices.push_back({on, off, hz(n.pitch), options.gain * n.velocity / 127.0});
    end_s = std::max(end_s, off);
  }
  AudioClip clip;
  clip.sample_rate = options.sample_rate;
  clip.samples.assign(static_cast<std::size_t>(std::ceil((end_s + options.tail_ms / 1000.0) * options.sample_rate)),
                      0.0f);
  for (const auto& v : voices) synth_voice(clip.samples, options.sample_rate, v, timbre);
  if (options.noise_level > 0.0) {
    Rng rng(options.noise_seed);
    for (auto& s : clip.samples) s += static_cast<float>(options.noise_level * rng.gaussian());
  }
  return clip;
}

const char* to_string(TempoScenario s) noexcept {
  switch (s) {
    case TempoScenario::Rehearsed: return "rehearsed";
    case TempoScenario::Normal: return "normal";
    case TempoScenario::Slow: return "slow";
    case TempoScenario::Fast: return "fast";
    case TempoScenario::Accelerando: return "accelerando";
  }
  return "?";
}

TempoScenario parse_tempo_scenario(const std::string& name) {
  for (auto s : {TempoScenario::Rehearsed, TempoScenario::Normal, TempoScenario::Slow, TempoScenario::Fast,
                 TempoScenario::Accelerando}) {
    if (name == to_string(s)) return s;
  }
  throw Error(Errc::InvalidParam, "unknown tempo scenario '" + name + "'");
}

TimeMap scenario_warp(const DuetPiece& piece, TempoScenario scenario, std::uint32_t seed, double lead_ms) {
  Rng rng(seed);
  const int n = piece.beats_per_bar * piece.bars;
  const double ph1 = rng.uniform(0.0, 6.3), ph2 = rng.uniform(0.0, 6.3);
  double depth = 0.03;
  std::vector<Knot> knots;
  double t = lead_ms;
  for (int i = 0; i <= n; ++i) {
    knots.push_back({i * piece.beat_ms(), t});
    if (i == n) break;
    double bpm = 120.0;
    switch (scenario) {
      case TempoScenario::Rehearsed: bpm = 120.0; depth = 0.04; break;
      case TempoScenario::Normal: bpm = 120.0; break;
      case TempoScenario::Slow: bpm = 100.0; break;
      case TempoScenario::Fast: bpm = 150.0; break;
      case TempoScenario::Accelerando: bpm = 80.0 + 80.0 * i / std::max(1, n - 1); depth = 0.01; break;
    }
    // Slow phrase-level swell plus a little per-beat jitter.
    const double rubato = depth * (0.7 * std::sin(2 * std::numbers::pi * i / 16.0 + ph1) +
                                   0.3 * std::sin(2 * std::numbers::pi * i / 7.0 + ph2)) +
                          0.005 * rng.uniform(-1.0, 1.0);
    t += 60000.0 / bpm * (1.0 + rubato);
  }
  return TimeMap(std::move(knots));
}

TimeMap piecewise_tempo_warp(double ref_duration_ms, const std::vector<double>& ratios, double lead_ms) {
  if (ratios.empty() || !(ref_duration_ms > 0.0)) throw Error(Errc::InvalidParam, "need ratios and a duration");
  std::vector<Knot> knots{{0.0, lead_ms}};
  const double seg = ref_duration_ms / static_cast<double>(ratios.size());
  double t = lead_ms;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    if (!(ratios[k] > 0.0)) throw Error(Errc::InvalidParam, "tempo ratios must be positive");
    t += seg / ratios[k];
    knots.push_back({seg * static_cast<double>(k + 1), t});
  }
  return TimeMap(std::move(knots));
}

std::vector<Note> chord_sequence(std::uint32_t seed, double duration_ms) {
  Rng rng(seed);
  std::vector<Note> notes;
  double t = 0.0;
  while (t < duration_ms) {
    const double len = std::min(rng.uniform(250.0, 1000.0), duration_ms - t);
    if (len < 100.0) break;
    const int root = 48 + rng.index(24);
    const auto& tri = kTriads[rng.index(6)];
    for (int k = 0; k < 3; ++k) notes.push_back({t, len, root + tri[k] - tri[0], 90});
    t += len;
  }
  return notes;
}

AudioClip silence_clip(double duration_ms, int sample_rate) {
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(static_cast<std::size_t>(std::lround(duration_ms * sample_rate / 1000.0)), 0.0f);
  return clip;
}

AudioClip noise_clip(double duration_ms, double rms, std::uint32_t seed, int sample_rate) {
  AudioClip clip = silence_clip(duration_ms, sample_rate);
  Rng rng(seed);
  for (auto& s : clip.samples) s = static_cast<float>(rms * rng.gaussian());
  return clip;
}

AudioClip time_stretch(const AudioClip& clip, double factor) {
  if (!(factor > 0.0)) throw Error(Errc::InvalidParam, "stretch factor must be positive");
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  if (clip.samples.empty()) return out;
  const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(clip.samples.size() - 1) * factor)) + 1;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / factor;
    const auto k = std::min(static_cast<std::size_t>(x), clip.samples.size() - 1);
    const double frac = x - static_cast<double>(k);
    const float a = clip.samples[k];
    const float b = k + 1 < clip.samples.size() ? clip.samples[k + 1] : a;
    out.samples[i] = static_cast<float>(a + frac * (b - a));
  }
  return out;
}

}  // namespace mtrack
