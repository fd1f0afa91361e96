#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <vector>

#include "mtrack/dtw.hpp"
#include "mtrack/features.hpp"

namespace mtrack {

struct OdtwConfig {
  // Band extent per axis, in frames (10 s at 20 ms).
  std::size_t search_depth = 500;
  // Consecutive increments in one direction before the other axis is forced.
  std::size_t max_run_count = 3;
  // Span of the local tempo estimate.
  double tempo_window_ms = 3000.0;

  void validate() const;
};

struct TrackedPoint {
  std::size_t live_frame = 0;  // 1-based, counted from this worker's start
  std::size_t ref_frame = 0;   // 1-based absolute reference frame
  double cumulative_cost = 0.0;
  // cumulative cost / path length, length counted as live frames plus
  // reference frames spanned from the worker's origin
  double normalized_cost = 0.0;
  double tempo_ratio = 1.0;      // live tempo relative to the reference
};

enum class StepDirection : std::uint8_t { None, Row, Column, Both };

/// Incremental alignment of a live feature stream against a fixed reference.
/// Rows are live frames, columns reference frames. Each live frame adds one
/// row of at most search_depth cells; the path decision then adds zero or more
/// reference columns of at most search_depth cells each.
class OnlineDtw {
 public:
  OnlineDtw(std::shared_ptr<const FeatureSequence> reference, OdtwConfig cfg,
            std::size_t start_ref_frame = 1);

  TrackedPoint step(std::span<const float> live_frame);

  IndexPair current_pair() const { return {live_count_, ref_pos_}; }
  std::size_t start_ref_frame() const { return start_; }
  std::size_t live_frames() const { return live_count_; }
  std::size_t cells_evaluated() const { return cells_total_; }
  // Largest number of cells computed by a single row or column increment.
  std::size_t max_cells_per_increment() const { return max_cells_increment_; }
  const TrackedPoint& last_point() const { return last_; }
  const std::vector<StepDirection>& decisions() const { return decisions_; }
  const OdtwConfig& config() const { return cfg_; }

 private:
  struct Cell {
    double cost;
  };
  struct Row {
    std::size_t col_lo;  // 1-based column of cells[0]
    std::vector<Cell> cells;
    std::vector<float> features;
    std::size_t col_hi() const { return col_lo + cells.size() - 1; }
  };

  const Cell* cell(std::size_t r, std::size_t k) const;
  Cell evaluate(std::size_t r, std::size_t k, std::span<const float> live) const;
  void add_row(std::span<const float> live);
  void add_column();
  double normalized(std::size_t r, std::size_t k, const Cell& c) const;
  StepDirection decide() const;
  void record(StepDirection dir);
  double tempo_ratio() const;

  std::shared_ptr<const FeatureSequence> ref_;
  OdtwConfig cfg_;
  std::size_t start_;
  std::size_t live_count_ = 0;
  std::size_t ref_pos_;
  std::size_t first_row_ = 1;
  std::deque<Row> rows_;
  StepDirection pending_ = StepDirection::None;
  StepDirection previous_ = StepDirection::None;
  std::size_t run_count_ = 0;
  std::size_t cells_total_ = 0;
  std::size_t max_cells_increment_ = 0;
  std::size_t tempo_window_frames_;
  std::deque<std::size_t> ref_history_;
  std::vector<StepDirection> decisions_;
  TrackedPoint last_;
};

/// Mean |online ref frame - offline ref frame| over the online points, in
/// frames. Offline pairs are (live p, reference q); where the offline path
/// holds several q for one p, their mean is used.
double odtw_path_deviation(std::span<const TrackedPoint> online, const WarpPath& offline);

}  // namespace mtrack
