#pragma once

#include <filesystem>
#include <vector>

#include "mtrack/dtw.hpp"

namespace mtrack {

struct Knot {
  double source_ms = 0.0;
  double target_ms = 0.0;
  bool operator==(const Knot&) const = default;
};

/// Monotone piecewise-linear mapping between two timelines. Knots are
/// strictly increasing in source and non-decreasing in target; lookups
/// outside the knot range clamp to the end knots.
class TimeMap {
 public:
  TimeMap() = default;
  /// Validates ordering; throws InvalidParam on violation, EmptyPath if empty.
  explicit TimeMap(std::vector<Knot> knots);

  static TimeMap identity(double start_ms, double end_ms);

  double lookup(double source_ms) const;
  const std::vector<Knot>& knots() const { return knots_; }
  bool empty() const { return knots_.empty(); }
  double source_begin() const { return knots_.front().source_ms; }
  double source_end() const { return knots_.back().source_ms; }
  double target_begin() const { return knots_.front().target_ms; }
  double target_end() const { return knots_.back().target_ms; }

 private:
  std::vector<Knot> knots_;
};

/// Path pair (p, q) becomes knot (p * src_period, q * tgt_period): frame k of
/// a sequence sits at k periods. Runs sharing one source time collapse to the
/// mean of their targets.
TimeMap from_warp_path(const WarpPath& path, double src_period_ms, double tgt_period_ms);

/// a: A->B, b: B->C. Throws DomainMismatch when a's target range leaves b's
/// source domain by more than tolerance_ms.
TimeMap compose(const TimeMap& a, const TimeMap& b, double tolerance_ms = 0.0);

/// Swaps coordinates. Target plateaus become a single knot at the midpoint of
/// the plateau's source span.
TimeMap invert(const TimeMap& map);

void write_timemap_csv(const std::filesystem::path& path, const TimeMap& map);
TimeMap read_timemap_csv(const std::filesystem::path& path);

}  // namespace mtrack
