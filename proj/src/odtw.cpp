#include "mtrack/odtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinTempo = 0.25;
constexpr double kMaxTempo = 4.0;

}  // namespace

void OdtwConfig::validate() const {
  if (search_depth < 2) throw Error(Errc::InvalidParam, "search depth must be >= 2");
  if (max_run_count < 1) throw Error(Errc::InvalidParam, "max run count must be >= 1");
  if (!(tempo_window_ms > 0.0)) throw Error(Errc::InvalidParam, "tempo window must be positive");
}

OnlineDtw::OnlineDtw(std::shared_ptr<const FeatureSequence> reference, OdtwConfig cfg,
                     std::size_t start_ref_frame)
    : ref_(std::move(reference)), cfg_(cfg), start_(start_ref_frame), ref_pos_(start_ref_frame) {
  cfg_.validate();
  if (!ref_ || ref_->empty()) throw Error(Errc::EmptyInput, "empty reference");
  if (start_ref_frame < 1 || start_ref_frame > ref_->rows()) {
    throw Error(Errc::OutOfBounds, "start frame " + std::to_string(start_ref_frame) +
                                       " outside reference of " + std::to_string(ref_->rows()));
  }
  const double period = ref_->frame_period_ms() > 0.0 ? ref_->frame_period_ms() : 20.0;
  tempo_window_frames_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg_.tempo_window_ms / period)));
  last_.ref_frame = start_;
}

const OnlineDtw::Cell* OnlineDtw::cell(std::size_t r, std::size_t k) const {
  if (r < first_row_ || r > live_count_ || k < 1) return nullptr;
  const Row& row = rows_[r - first_row_];
  if (row.cells.empty() || k < row.col_lo || k > row.col_hi()) return nullptr;
  return &row.cells[k - row.col_lo];
}

OnlineDtw::Cell OnlineDtw::evaluate(std::size_t r, std::size_t k, std::span<const float> live) const {
  const double d = pairwise_distance(live, ref_->row(k - 1));
  if (r == 1 && k == start_) return {d};
  // Same tie-break order as the offline recursion.
  const Cell* best = nullptr;
  for (const Cell* c : {cell(r - 1, k - 1), cell(r - 1, k), cell(r, k - 1)}) {
    if (c != nullptr && (best == nullptr || c->cost < best->cost)) best = c;
  }
  if (best == nullptr) return {kInf};
  return {d + best->cost};
}

void OnlineDtw::add_row(std::span<const float> live) {
  ++live_count_;
  const std::size_t r = live_count_;
  const std::size_t depth = cfg_.search_depth;
  const std::size_t lo = (r == 1) ? start_ : std::max(start_, ref_pos_ + 1 > depth ? ref_pos_ + 1 - depth : 1);

  rows_.push_back(Row{lo, {}, std::vector<float>(live.begin(), live.end())});
  Row& row = rows_.back();
  row.cells.reserve(ref_pos_ - lo + 1);
  for (std::size_t k = lo; k <= ref_pos_; ++k) row.cells.push_back(evaluate(r, k, row.features));

  const std::size_t n = ref_pos_ - lo + 1;
  cells_total_ += n;
  max_cells_increment_ = std::max(max_cells_increment_, n);

  // Rows older than the band are never read again.
  while (first_row_ + depth <= r) {
    rows_.pop_front();
    ++first_row_;
  }
}

void OnlineDtw::add_column() {
  ++ref_pos_;
  const std::size_t k = ref_pos_;
  const std::size_t depth = cfg_.search_depth;
  const std::size_t lo = std::max(first_row_, live_count_ + 1 > depth ? live_count_ + 1 - depth : 1);
  std::size_t n = 0;
  for (std::size_t r = lo; r <= live_count_; ++r) {
    Row& row = rows_[r - first_row_];
    const Cell c = evaluate(r, k, row.features);
    if (row.cells.empty()) row.col_lo = k;
    row.cells.push_back(c);
    ++n;
  }
  cells_total_ += n;
  max_cells_increment_ = std::max(max_cells_increment_, n);
}

double OnlineDtw::normalized(std::size_t r, std::size_t k, const Cell& c) const {
  return c.cost / static_cast<double>(r + k + 1 - start_);
}

StepDirection OnlineDtw::decide() const {
  const bool at_end = ref_pos_ >= ref_->rows();
  auto constrain = [&](StepDirection d) {
    if (at_end && d != StepDirection::Row) return StepDirection::Row;
    return d;
  };

  if (run_count_ >= cfg_.max_run_count) {
    if (previous_ == StepDirection::Row) return constrain(StepDirection::Column);
    if (previous_ == StepDirection::Column) return StepDirection::Row;
  }

  const std::size_t t = live_count_;
  const std::size_t j = ref_pos_;
  const Cell* corner = cell(t, j);
  double best = corner ? normalized(t, j, *corner) : kInf;
  std::size_t best_r = t, best_k = j;

  // Newest row, within the band.
  const Row& row = rows_.back();
  const std::size_t depth = cfg_.search_depth;
  const std::size_t k_lo = std::max(row.col_lo, j + 1 > depth ? j + 1 - depth : 1);
  for (std::size_t k = k_lo; k < j && !row.cells.empty(); ++k) {
    const Cell& c = row.cells[k - row.col_lo];
    const double v = normalized(t, k, c);
    if (v < best) {
      best = v;
      best_r = t;
      best_k = k;
    }
  }
  // Newest column.
  const std::size_t r_lo = std::max(first_row_, t + 1 > depth ? t + 1 - depth : 1);
  for (std::size_t r = r_lo; r < t; ++r) {
    const Cell* c = cell(r, j);
    if (c == nullptr) continue;
    const double v = normalized(r, j, *c);
    if (v < best) {
      best = v;
      best_r = r;
      best_k = j;
    }
  }

  if (best_r < t) return constrain(StepDirection::Column);
  if (best_k < j) return StepDirection::Row;
  return constrain(StepDirection::Both);
}

void OnlineDtw::record(StepDirection dir) {
  run_count_ = (dir == previous_) ? run_count_ + 1 : 1;
  previous_ = dir;
  decisions_.push_back(dir);
}

double OnlineDtw::tempo_ratio() const {
  if (ref_history_.size() < 2) return 1.0;
  const double d_live = static_cast<double>(ref_history_.size() - 1);
  const double d_ref = static_cast<double>(ref_history_.back()) - static_cast<double>(ref_history_.front());
  return std::clamp(d_ref / d_live, kMinTempo, kMaxTempo);
}

TrackedPoint OnlineDtw::step(std::span<const float> live_frame) {
  if (live_frame.size() != ref_->dim()) throw Error(Errc::DimensionMismatch, "live frame dim");

  add_row(live_frame);
  if (pending_ == StepDirection::Both && ref_pos_ < ref_->rows()) add_column();

  for (;;) {
    const StepDirection dir = decide();
    record(dir);
    if (dir == StepDirection::Column) {
      add_column();
      continue;
    }
    pending_ = dir;
    break;
  }

  ref_history_.push_back(ref_pos_);
  if (ref_history_.size() > tempo_window_frames_ + 1) ref_history_.pop_front();

  const Cell* c = cell(live_count_, ref_pos_);
  last_.live_frame = live_count_;
  last_.ref_frame = ref_pos_;
  last_.cumulative_cost = c ? c->cost : kInf;
  last_.normalized_cost = c ? normalized(live_count_, ref_pos_, *c) : kInf;
  last_.tempo_ratio = tempo_ratio();
  return last_;
}

double odtw_path_deviation(std::span<const TrackedPoint> online, const WarpPath& offline) {
  if (online.empty()) throw Error(Errc::RangeMismatch, "no online points");
  if (offline.pairs.empty()) throw Error(Errc::RangeMismatch, "empty offline path");
  std::size_t P = 0;
  for (const auto& pq : offline.pairs) P = std::max(P, pq.p);
  std::vector<double> sum(P + 1, 0.0);
  std::vector<std::size_t> count(P + 1, 0);
  for (const auto& pq : offline.pairs) {
    sum[pq.p] += static_cast<double>(pq.q);
    ++count[pq.p];
  }
  double acc = 0.0;
  for (const auto& pt : online) {
    if (pt.live_frame < 1 || pt.live_frame > P || count[pt.live_frame] == 0) {
      throw Error(Errc::RangeMismatch, "online live frame " + std::to_string(pt.live_frame) +
                                           " not covered by offline path");
    }
    const double q = sum[pt.live_frame] / static_cast<double>(count[pt.live_frame]);
    acc += std::abs(static_cast<double>(pt.ref_frame) - q);
  }
  return acc / static_cast<double>(online.size());
}

}  // namespace mtrack
