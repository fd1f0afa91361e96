#include "mtrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "mtrack/dtw.hpp"
#include "mtrack/error.hpp"

namespace mtrack {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double row_norm(std::span<const float> r) {
  double acc = 0.0;
  for (float v : r) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::InvalidParam, "config key '" + key + "' expects a number, got '" + value + "'");
  }
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const double v = parse_number(key, value);
  if (v < 0 || std::floor(v) != v) throw Error(Errc::InvalidParam, "config key '" + key + "' expects a count");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error(Errc::InvalidParam, "config key '" + key + "' expects true/false");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrackerConfig::validate() const {
  if (!(frame_period_ms > 0.0)) throw Error(Errc::InvalidParam, "frame_period_ms must be positive");
  if (window_ms < frame_period_ms) throw Error(Errc::InvalidParam, "window_ms must be >= frame_period_ms");
  if (!(detector_window_ms > 0.0)) throw Error(Errc::InvalidParam, "detector_window_ms must be positive");
  if (!(rough_window_ms > 0.0)) throw Error(Errc::InvalidParam, "rough_window_ms must be positive");
  if (n_workers < 2 || n_workers > 4) throw Error(Errc::InvalidParam, "n_workers must be between 2 and 4");
  if (rough_top_k < 1) throw Error(Errc::InvalidParam, "rough_top_k must be >= 1");
  if (!(divergence_factor > 1.0)) throw Error(Errc::InvalidParam, "divergence_factor must exceed 1");
  if (!(nms_radius_ms > 0.0) || !(respawn_interval_ms > 0.0) || warmup_ms < 0.0 || min_switch_interval_ms < 0.0 ||
      !(stall_ms > 0.0)) {
    throw Error(Errc::InvalidParam, "intervals must be positive");
  }
  if (low_res_time_factor < 1 || low_res_band_factor < 1) throw Error(Errc::InvalidParam, "low-res factors must be >= 1");
  odtw.validate();
}

std::size_t TrackerConfig::frames(double ms) const {
  return static_cast<std::size_t>(std::lround(ms / frame_period_ms));
}

TrackerConfig parse_tracker_config(const std::string& text) {
  TrackerConfig cfg;
  using Setter = std::function<void(TrackerConfig&, const std::string&, const std::string&)>;
  auto num = [](double TrackerConfig::*field) -> Setter {
    return [field](TrackerConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number(k, v); };
  };
  auto count = [](std::size_t TrackerConfig::*field) -> Setter {
    return [field](TrackerConfig& c, const std::string& k, const std::string& v) { c.*field = parse_count(k, v); };
  };
  const std::map<std::string, Setter> setters = {
      {"frame_period_ms", num(&TrackerConfig::frame_period_ms)},
      {"window_ms", num(&TrackerConfig::window_ms)},
      {"detector_window_ms", num(&TrackerConfig::detector_window_ms)},
      {"detector_cost_threshold", num(&TrackerConfig::detector_cost_threshold)},
      {"rough_window_ms", num(&TrackerConfig::rough_window_ms)},
      {"rough_top_k", count(&TrackerConfig::rough_top_k)},
      {"n_workers", count(&TrackerConfig::n_workers)},
      {"search_depth", [](TrackerConfig& c, const std::string& k, const std::string& v) { c.odtw.search_depth = parse_count(k, v); }},
      {"max_run_count", [](TrackerConfig& c, const std::string& k, const std::string& v) { c.odtw.max_run_count = parse_count(k, v); }},
      {"tempo_window_ms", [](TrackerConfig& c, const std::string& k, const std::string& v) { c.odtw.tempo_window_ms = parse_number(k, v); }},
      {"low_res_time_factor", [](TrackerConfig& c, const std::string& k, const std::string& v) { c.low_res_time_factor = static_cast<int>(parse_count(k, v)); }},
      {"low_res_band_factor", [](TrackerConfig& c, const std::string& k, const std::string& v) { c.low_res_band_factor = static_cast<int>(parse_count(k, v)); }},
      {"nms_radius_ms", num(&TrackerConfig::nms_radius_ms)},
      {"divergence_factor", num(&TrackerConfig::divergence_factor)},
      {"respawn_interval_ms", num(&TrackerConfig::respawn_interval_ms)},
      {"warmup_ms", num(&TrackerConfig::warmup_ms)},
      {"min_switch_interval_ms", num(&TrackerConfig::min_switch_interval_ms)},
      {"stall_ms", num(&TrackerConfig::stall_ms)},
      {"parallel", [](TrackerConfig& c, const std::string& k, const std::string& v) { c.parallel = parse_bool(k, v); }},
  };

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::InvalidParam, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(Errc::InvalidParam, "unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

TrackerConfig load_tracker_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_tracker_config(ss.str());
}

std::string format_tracker_config(const TrackerConfig& c) {
  std::ostringstream out;
  out << "frame_period_ms = " << c.frame_period_ms << '\n'
      << "window_ms = " << c.window_ms << '\n'
      << "detector_window_ms = " << c.detector_window_ms << '\n'
      << "detector_cost_threshold = " << c.detector_cost_threshold << '\n'
      << "rough_window_ms = " << c.rough_window_ms << '\n'
      << "rough_top_k = " << c.rough_top_k << '\n'
      << "n_workers = " << c.n_workers << '\n'
      << "search_depth = " << c.odtw.search_depth << '\n'
      << "max_run_count = " << c.odtw.max_run_count << '\n'
      << "tempo_window_ms = " << c.odtw.tempo_window_ms << '\n'
      << "low_res_time_factor = " << c.low_res_time_factor << '\n'
      << "low_res_band_factor = " << c.low_res_band_factor << '\n'
      << "nms_radius_ms = " << c.nms_radius_ms << '\n'
      << "divergence_factor = " << c.divergence_factor << '\n'
      << "respawn_interval_ms = " << c.respawn_interval_ms << '\n'
      << "warmup_ms = " << c.warmup_ms << '\n'
      << "min_switch_interval_ms = " << c.min_switch_interval_ms << '\n'
      << "stall_ms = " << c.stall_ms << '\n'
      << "parallel = " << (c.parallel ? "true" : "false") << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Detector and rough position estimator

double calibrate_detector_threshold(const FeatureSequence& ref_prefix) {
  if (ref_prefix.empty()) throw Error(Errc::EmptyInput, "empty detector prefix");
  FeatureSequence silence(ref_prefix.kind(), ref_prefix.frame_period_ms(), ref_prefix.dim());
  const std::vector<float> zeros(ref_prefix.dim(), 0.0f);
  for (std::size_t i = 0; i < ref_prefix.rows(); ++i) silence.append_row(zeros);
  return 0.9 * dtw_cost(silence, ref_prefix);
}

bool detect_music(const FeatureSequence& live_prefix, const FeatureSequence& ref_prefix, double threshold) {
  if (live_prefix.empty() || ref_prefix.empty()) return false;
  return dtw_cost(live_prefix, ref_prefix) < threshold;
}

TrackerReference prepare_reference(const RecordingFeatures& rehearsed, const TrackerConfig& cfg) {
  cfg.validate();
  if (rehearsed.diff.empty()) throw Error(Errc::EmptyInput, "rehearsed recording has no frames");
  TrackerReference ref;
  ref.diff = std::make_shared<const FeatureSequence>(rehearsed.diff);
  ref.low_res = std::make_shared<const FeatureSequence>(rehearsed.low_res);

  const auto& d = *ref.diff;
  double peak = 0.0;
  for (std::size_t t = 0; t < d.rows(); ++t) peak = std::max(peak, row_norm(d.row(t)));
  // Onsets sit far above numerical noise; anything below 1% of the
  // strongest onset is treated as silence.
  ref.silence_level = 0.01 * peak;
  double sum = 0.0;
  std::size_t n = 0;
  ref.music_start = d.rows();
  for (std::size_t t = 0; t < d.rows(); ++t) {
    const double norm = row_norm(d.row(t));
    if (norm > ref.silence_level) {
      if (ref.music_start == d.rows()) ref.music_start = t;
      sum += norm;
      ++n;
    }
  }
  if (ref.music_start == d.rows()) throw Error(Errc::EmptyInput, "rehearsed recording is silent");
  ref.feature_scale = n > 0 ? sum / static_cast<double>(n) : 1.0;

  const std::size_t w = std::max<std::size_t>(1, cfg.frames(cfg.detector_window_ms));
  ref.detector_prefix = d.slice(ref.music_start, ref.music_start + w);
  ref.cost_threshold = cfg.detector_cost_threshold > 0.0 ? cfg.detector_cost_threshold
                                                          : calibrate_detector_threshold(ref.detector_prefix);
  return ref;
}

std::vector<std::size_t> rough_positions(const FeatureSequence& live_tail, const FeatureSequence& ref,
                                         std::size_t top_k, std::size_t nms_radius, std::size_t required_rows) {
  if (live_tail.rows() < std::max<std::size_t>(required_rows, 1)) {
    throw Error(Errc::InsufficientHistory, "live history shorter than the rough-estimator window");
  }
  if (live_tail.dim() != ref.dim()) throw Error(Errc::DimensionMismatch, "live and reference dims differ");
  const std::size_t L = live_tail.rows();
  if (ref.rows() < L || top_k == 0) return {};

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(ref.rows() - L + 1);
  for (std::size_t e = L - 1; e < ref.rows(); ++e) {
    double score = 0.0;
    for (std::size_t i = 0; i < L; ++i) score += pairwise_distance(live_tail.row(i), ref.row(e + 1 - L + i));
    scored.emplace_back(score, e + 1);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<std::size_t> picked;
  for (const auto& [score, pos] : scored) {
    const bool suppressed = std::any_of(picked.begin(), picked.end(), [&](std::size_t p) {
      return (p > pos ? p - pos : pos - p) <= nms_radius;
    });
    if (suppressed) continue;
    picked.push_back(pos);
    if (picked.size() == top_k) break;
  }
  return picked;
}

// ---------------------------------------------------------------------------
// Tracker

const char* to_string(TrackerPhase phase) noexcept {
  return phase == TrackerPhase::Tracking ? "tracking" : "waiting";
}

std::string tracker_event_json(const TrackerEvent& e) {
  static const char* names[] = {"detection", "spawn", "respawn", "switch"};
  nlohmann::ordered_json j;
  j["live_ms"] = e.live_ms;
  j["event"] = names[static_cast<int>(e.type)];
  j["worker"] = e.worker;
  if (e.type == TrackerEventType::Switch) j["previous_worker"] = e.previous_worker;
  j["ref_frame"] = e.ref_frame;
  j["cost"] = std::isfinite(e.cost) ? e.cost : -1.0;
  return j.dump();
}

struct Tracker::Worker {
  int id;
  std::unique_ptr<OnlineDtw> odtw;
  std::size_t spawned_at;  // tracker live frame count at spawn
  TrackedPoint last;
  std::size_t last_move;  // live frame when the position last changed
  std::size_t prev_ref = 0;
};

// Runs one task per index on persistent threads and waits for all of them.
class Tracker::StepPool {
 public:
  explicit StepPool(std::size_t threads) {
    for (std::size_t i = 0; i < threads; ++i) {
      threads_.emplace_back([this, i](std::stop_token st) { loop(st, i); });
    }
  }
  ~StepPool() {
    {
      std::lock_guard lock(mutex_);
      for (auto& t : threads_) t.request_stop();
    }
    wake_.notify_all();
  }

  void run(std::size_t n, const std::function<void(std::size_t)>& task) {
    std::unique_lock lock(mutex_);
    task_ = &task;
    n_ = n;
    pending_ = threads_.size();
    ++generation_;
    wake_.notify_all();
    done_.wait(lock, [&] { return pending_ == 0; });
    task_ = nullptr;
  }

 private:
  void loop(std::stop_token st, std::size_t index) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* task;
      std::size_t n;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return st.stop_requested() || generation_ != seen; });
        if (st.stop_requested()) return;
        seen = generation_;
        task = task_;
        n = n_;
      }
      for (std::size_t i = index; i < n; i += threads_.size()) (*task)(i);
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::mutex mutex_;
  std::condition_variable wake_, done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t n_ = 0;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  std::vector<std::jthread> threads_;
};

Tracker::Tracker(std::shared_ptr<const TrackerReference> reference, TrackerConfig cfg)
    : ref_(std::move(reference)), cfg_(cfg) {
  cfg_.validate();
  if (!ref_ || !ref_->diff || ref_->diff->empty()) throw Error(Errc::EmptyInput, "tracker needs a reference");
  detector_frames_ = std::max<std::size_t>(1, ref_->detector_prefix.rows());
  warmup_frames_ = cfg_.frames(cfg_.warmup_ms);
  respawn_frames_ = std::max<std::size_t>(1, cfg_.frames(cfg_.respawn_interval_ms));
  switch_frames_ = cfg_.frames(cfg_.min_switch_interval_ms);
  stall_frames_ = std::max<std::size_t>(1, cfg_.frames(cfg_.stall_ms));
  const double low_res_period = cfg_.frame_period_ms * cfg_.low_res_time_factor;
  rough_rows_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg_.rough_window_ms / low_res_period)));
  nms_frames_ = std::max<std::size_t>(1, cfg_.frames(cfg_.nms_radius_ms));
  workers_.resize(cfg_.n_workers);
  if (cfg_.parallel) pool_ = std::make_unique<StepPool>(cfg_.n_workers);
}

Tracker::~Tracker() = default;

double Tracker::live_ms() const { return static_cast<double>(state_.live_frame) * cfg_.frame_period_ms; }

std::vector<TrackerEvent> Tracker::drain_events() { return std::exchange(events_, {}); }

void Tracker::spawn(std::size_t slot, std::size_t ref_frame, bool respawn, std::span<const std::vector<float>> replay) {
  ref_frame = std::clamp<std::size_t>(ref_frame, 1, ref_->diff->rows());
  auto w = std::make_unique<Worker>();
  w->id = next_worker_id_++;
  w->odtw = std::make_unique<OnlineDtw>(ref_->diff, cfg_.odtw, ref_frame);
  w->spawned_at = state_.live_frame > replay.size() ? state_.live_frame - replay.size() : 0;
  w->last.ref_frame = ref_frame;
  for (const auto& f : replay) w->last = w->odtw->step(f);
  w->last_move = state_.live_frame;
  w->prev_ref = w->last.ref_frame;
  events_.push_back({respawn ? TrackerEventType::Respawn : TrackerEventType::Spawn, live_ms(), w->id, -1, ref_frame,
                     w->last.normalized_cost});
  if (respawn) ++state_.respawns;
  workers_[slot] = std::move(w);
}

void Tracker::begin_tracking(const std::vector<std::size_t>& seeds) {
  if (seeds.empty()) throw Error(Errc::InvalidParam, "need at least one seed");
  if (seeds.size() > workers_.size()) throw Error(Errc::InvalidParam, "more seeds than workers");
  for (std::size_t i = 0; i < seeds.size(); ++i) spawn(i, seeds[i], false);
  tracking_ = true;
  tracking_since_ = state_.live_frame;
  last_switch_ = state_.live_frame;
  trusted_ = workers_[0]->id;
  publish();
}

const TrackerState& Tracker::push(const LiveFrame& frame) {
  if (frame.diff.size() != ref_->diff->dim()) throw Error(Errc::DimensionMismatch, "live frame dim");
  ++state_.live_frame;
  if (frame.low_res) {
    recent_low_res_.push_back(*frame.low_res);
    last_low_res_frame_ = state_.live_frame;
    while (recent_low_res_.size() > rough_rows_) recent_low_res_.pop_front();
  }

  if (!tracking_) {
    recent_diff_.push_back(frame.diff);
    while (recent_diff_.size() > detector_frames_) recent_diff_.pop_front();
    if (recent_diff_.size() == detector_frames_) {
      FeatureSequence window(FeatureKind::RectifiedSpectralDiff, cfg_.frame_period_ms, frame.diff.size());
      for (const auto& r : recent_diff_) window.append_row(r);
      const double cost = dtw_cost(window, ref_->detector_prefix);
      if (cost < ref_->cost_threshold) {
        // Replay from the first audible frame of the window so the worker's
        // fixed origin lines up with the start of the music.
        std::size_t first = 0;
        while (first < recent_diff_.size() && row_norm(recent_diff_[first]) <= ref_->silence_level) ++first;
        std::vector<std::vector<float>> replay(recent_diff_.begin() + static_cast<std::ptrdiff_t>(first),
                                               recent_diff_.end());
        events_.push_back({TrackerEventType::Detection, live_ms(), -1, -1, ref_->music_start + 1, cost});
        spawn(0, ref_->music_start + 1, false, replay);
        tracking_ = true;
        tracking_since_ = state_.live_frame;
        last_switch_ = state_.live_frame;
        trusted_ = workers_[0]->id;
        recent_diff_.clear();
        publish();
      }
    }
    return state_;
  }

  tracking_step(frame.diff);
  return state_;
}

void Tracker::tracking_step(const std::vector<float>& diff) {
  std::vector<Worker*> active;
  for (auto& w : workers_) {
    if (w) active.push_back(w.get());
  }
  auto step_one = [&](std::size_t i) { active[i]->last = active[i]->odtw->step(diff); };
  if (pool_) {
    pool_->run(active.size(), step_one);
  } else {
    for (std::size_t i = 0; i < active.size(); ++i) step_one(i);
  }
  for (Worker* w : active) {
    if (w->last.ref_frame != w->prev_ref) {
      w->prev_ref = w->last.ref_frame;
      w->last_move = state_.live_frame;
    }
  }

  if ((state_.live_frame - tracking_since_) % respawn_frames_ == 0) maintain_workers();
  decide();
  publish();
}

std::vector<std::size_t> Tracker::candidate_positions() {
  const auto& low = *ref_->low_res;
  const auto tf = static_cast<std::size_t>(cfg_.low_res_time_factor);
  if (low.empty() || recent_low_res_.size() < rough_rows_) {
    // Not enough history: the only hypothesis is the current output.
    return {};
  }
  FeatureSequence tail(FeatureKind::LowResSpectrum, low.frame_period_ms(), low.dim());
  for (const auto& r : recent_low_res_) tail.append_row(r);
  const std::size_t nms_low = std::max<std::size_t>(1, nms_frames_ / tf);
  const auto ends = rough_positions(tail, low, cfg_.rough_top_k, nms_low, rough_rows_);
  std::vector<std::size_t> out;
  const std::size_t since = state_.live_frame - last_low_res_frame_;
  for (std::size_t e : ends) out.push_back(std::min(e * tf + since, ref_->diff->rows()));
  return out;
}

void Tracker::maintain_workers() {
  const Worker* trusted = nullptr;
  for (const auto& w : workers_) {
    if (w && w->id == trusted_) trusted = w.get();
  }
  const double floor = 0.05 * ref_->feature_scale;
  const double limit = trusted ? cfg_.divergence_factor * std::max(trusted->last.normalized_cost, floor) : kInf;

  std::vector<std::size_t> replace;
  for (std::size_t s = 0; s < workers_.size(); ++s) {
    const auto& w = workers_[s];
    if (!w) {
      replace.push_back(s);
      continue;
    }
    if (w->id == trusted_) continue;
    const bool mature = state_.live_frame - w->spawned_at >= warmup_frames_;
    const bool diverged = mature && w->last.normalized_cost > limit;
    const bool stalled = state_.live_frame - w->last_move >= stall_frames_;
    if (diverged || stalled) replace.push_back(s);
  }
  if (replace.empty()) return;

  std::vector<std::size_t> candidates;
  try {
    candidates = candidate_positions();
  } catch (const Error& e) {
    if (e.code() != Errc::InsufficientHistory) throw;
  }
  for (std::size_t slot : replace) {
    const bool was_empty = !workers_[slot];
    for (std::size_t c : candidates) {
      const bool near_existing = std::any_of(workers_.begin(), workers_.end(), [&](const auto& w) {
        if (!w) return false;
        const std::size_t r = w->last.ref_frame;
        return (r > c ? r - c : c - r) <= nms_frames_;
      });
      if (near_existing) continue;
      if (!was_empty) workers_[slot].reset();
      spawn(slot, c, !was_empty);
      break;
    }
  }
}

void Tracker::decide() {
  const Worker* best = nullptr;
  const Worker* current = nullptr;
  bool any_mature = false;
  for (const auto& w : workers_) {
    if (w && state_.live_frame - w->spawned_at >= warmup_frames_) any_mature = true;
  }
  for (const auto& w : workers_) {
    if (!w) continue;
    if (w->id == trusted_) current = w.get();
    const bool eligible = !any_mature || state_.live_frame - w->spawned_at >= warmup_frames_;
    if (eligible && (best == nullptr || w->last.normalized_cost < best->last.normalized_cost)) best = w.get();
  }
  if (best == nullptr) return;
  if (current == nullptr) {
    trusted_ = best->id;
    last_switch_ = state_.live_frame;
    return;
  }
  if (best != current && best->last.normalized_cost < current->last.normalized_cost &&
      state_.live_frame - last_switch_ >= switch_frames_) {
    events_.push_back({TrackerEventType::Switch, live_ms(), best->id, current->id, best->last.ref_frame,
                       best->last.normalized_cost});
    ++state_.switches;
    trusted_ = best->id;
    last_switch_ = state_.live_frame;
  }
}

void Tracker::publish() {
  state_.per_worker.clear();
  const Worker* trusted = nullptr;
  for (const auto& w : workers_) {
    if (!w) continue;
    state_.per_worker.push_back(
        {w->id, w->odtw->start_ref_frame(), w->last.ref_frame, w->last.normalized_cost, w->last.tempo_ratio});
    if (w->id == trusted_) trusted = w.get();
  }
  if (!tracking_ || trusted == nullptr) return;
  state_.trusted_worker = trusted_;
  state_.phase = state_.live_frame - tracking_since_ >= warmup_frames_ ? TrackerPhase::Tracking : TrackerPhase::Waiting;
  state_.position_ref_ms = static_cast<double>(trusted->last.ref_frame) * cfg_.frame_period_ms;
  state_.tempo_ratio = trusted->last.tempo_ratio;
  const double norm = trusted->last.normalized_cost;
  state_.confidence = std::isfinite(norm) ? std::exp(-norm / ref_->feature_scale) : 0.0;
}

}  // namespace mtrack
