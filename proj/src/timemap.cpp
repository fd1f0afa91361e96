#include "mtrack/timemap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

// Collapses equal source times to the mean target.
std::vector<Knot> collapse_by_source(const std::vector<Knot>& sorted) {
  std::vector<Knot> out;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < sorted.size() && sorted[j].source_ms == sorted[i].source_ms) sum += sorted[j++].target_ms;
    out.push_back({sorted[i].source_ms, sum / static_cast<double>(j - i)});
    i = j;
  }
  return out;
}

}  // namespace

TimeMap::TimeMap(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw Error(Errc::EmptyPath, "time map needs at least one knot");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].source_ms > knots_[i - 1].source_ms)) {
      throw Error(Errc::InvalidParam, "knot sources must be strictly increasing");
    }
    if (knots_[i].target_ms < knots_[i - 1].target_ms) {
      throw Error(Errc::InvalidParam, "knot targets must be non-decreasing");
    }
  }
}

TimeMap TimeMap::identity(double start_ms, double end_ms) {
  if (!(end_ms > start_ms)) return TimeMap({{start_ms, start_ms}});
  return TimeMap({{start_ms, start_ms}, {end_ms, end_ms}});
}

double TimeMap::lookup(double source_ms) const {
  if (knots_.empty()) throw Error(Errc::EmptyPath, "lookup on empty time map");
  if (source_ms <= knots_.front().source_ms) return knots_.front().target_ms;
  if (source_ms >= knots_.back().source_ms) return knots_.back().target_ms;
  const auto hi = std::upper_bound(knots_.begin(), knots_.end(), source_ms,
                                   [](double s, const Knot& k) { return s < k.source_ms; });
  const auto lo = hi - 1;
  const double w = (source_ms - lo->source_ms) / (hi->source_ms - lo->source_ms);
  return lo->target_ms + w * (hi->target_ms - lo->target_ms);
}

TimeMap from_warp_path(const WarpPath& path, double src_period_ms, double tgt_period_ms) {
  if (path.pairs.empty()) throw Error(Errc::EmptyPath, "empty warp path");
  std::vector<Knot> raw;
  raw.reserve(path.pairs.size());
  for (const auto& pq : path.pairs) {
    raw.push_back({static_cast<double>(pq.p) * src_period_ms, static_cast<double>(pq.q) * tgt_period_ms});
  }
  std::stable_sort(raw.begin(), raw.end(), [](const Knot& a, const Knot& b) { return a.source_ms < b.source_ms; });
  auto knots = collapse_by_source(raw);
  // Mean collapse keeps targets non-decreasing for monotone paths; enforce it
  // for hand-built ones.
  for (std::size_t i = 1; i < knots.size(); ++i) {
    knots[i].target_ms = std::max(knots[i].target_ms, knots[i - 1].target_ms);
  }
  return TimeMap(std::move(knots));
}

TimeMap compose(const TimeMap& a, const TimeMap& b, double tolerance_ms) {
  if (a.empty() || b.empty()) throw Error(Errc::EmptyPath, "compose on empty map");
  if (a.target_begin() < b.source_begin() - tolerance_ms || a.target_end() > b.source_end() + tolerance_ms) {
    throw Error(Errc::DomainMismatch, "second map does not cover the first map's target range");
  }
  std::vector<double> sources;
  sources.reserve(a.knots().size() + b.knots().size());
  for (const auto& k : a.knots()) sources.push_back(k.source_ms);

  // Pull b's knots back through a on strictly increasing segments of a.
  const auto& ak = a.knots();
  for (const auto& kb : b.knots()) {
    for (std::size_t i = 1; i < ak.size(); ++i) {
      const double t0 = ak[i - 1].target_ms, t1 = ak[i].target_ms;
      if (t1 > t0 && kb.source_ms > t0 && kb.source_ms < t1) {
        const double w = (kb.source_ms - t0) / (t1 - t0);
        sources.push_back(ak[i - 1].source_ms + w * (ak[i].source_ms - ak[i - 1].source_ms));
        break;
      }
    }
  }
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

  std::vector<Knot> knots;
  knots.reserve(sources.size());
  for (double s : sources) {
    double v = b.lookup(a.lookup(s));
    if (!knots.empty()) v = std::max(v, knots.back().target_ms);
    knots.push_back({s, v});
  }
  return TimeMap(std::move(knots));
}

TimeMap invert(const TimeMap& map) {
  if (map.empty()) throw Error(Errc::EmptyPath, "invert on empty map");
  const auto& k = map.knots();
  std::vector<Knot> out;
  std::size_t i = 0;
  while (i < k.size()) {
    std::size_t j = i;
    while (j + 1 < k.size() && k[j + 1].target_ms == k[i].target_ms) ++j;
    out.push_back({k[i].target_ms, 0.5 * (k[i].source_ms + k[j].source_ms)});
    i = j + 1;
  }
  return TimeMap(std::move(out));
}

void write_timemap_csv(const std::filesystem::path& path, const TimeMap& map) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "t_source_ms,t_target_ms\n" << std::setprecision(12);
  for (const auto& k : map.knots()) out << k.source_ms << ',' << k.target_ms << '\n';
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

TimeMap read_timemap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("t_source_ms,t_target_ms", 0) != 0) {
    throw Error(Errc::MalformedFile, "missing time map header in " + path.string());
  }
  std::vector<Knot> knots;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Knot k;
    char comma = 0;
    if (!(row >> k.source_ms >> comma >> k.target_ms) || comma != ',') {
      throw Error(Errc::MalformedFile, "bad time map row: " + line);
    }
    knots.push_back(k);
  }
  return TimeMap(std::move(knots));
}

}  // namespace mtrack
