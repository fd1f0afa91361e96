#include <doctest.h>

#include <cmath>
#include <random>

#include "mtrack/error.hpp"
#include "mtrack/odtw.hpp"
#include "support.hpp"

using namespace mtrack;

namespace {

// Random sparse onset-like rows, distinct from one another.
std::shared_ptr<const FeatureSequence> random_reference(std::size_t rows, std::size_t dim, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  auto seq = std::make_shared<FeatureSequence>(FeatureKind::RectifiedSpectralDiff, 20.0, dim);
  std::vector<float> row(dim);
  for (std::size_t t = 0; t < rows; ++t) {
    for (auto& v : row) v = u(rng) < 0.3f ? u(rng) : 0.0f;
    row[t % dim] += 0.5f;
    seq->append_row(row);
  }
  return seq;
}

}  // namespace

TEST_CASE("config validation") {
  auto ref = random_reference(10, 4, 1);
  CHECK_THROWS_AS(OnlineDtw(ref, OdtwConfig{1, 3, 3000.0}), Error);
  CHECK_THROWS_AS(OnlineDtw(ref, OdtwConfig{10, 0, 3000.0}), Error);
  try {
    OnlineDtw(ref, OdtwConfig{}, 11);
    FAIL("expected OutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfBounds);
  }
  CHECK_THROWS_AS(OnlineDtw(ref, OdtwConfig{}, 0), Error);
}

TEST_CASE("first step sits at the origin") {
  auto ref = random_reference(1000, 8, 2);
  OnlineDtw a(ref, {});
  CHECK(a.step(ref->row(0)).ref_frame == 1);
  CHECK(a.current_pair() == IndexPair{1, 1});

  OnlineDtw b(ref, {}, 500);
  const auto p = b.step(ref->row(499));
  CHECK(p.ref_frame == 500);
  CHECK(p.live_frame == 1);
  CHECK(b.start_ref_frame() == 500);
  for (std::size_t i = 500; i < 600; ++i) b.step(ref->row(i));
  CHECK(b.last_point().ref_frame == 600);
}

TEST_CASE("self alignment is exactly diagonal with zero cost") {
  auto ref = random_reference(400, 12, 3);
  OnlineDtw o(ref, {});
  for (std::size_t t = 0; t < ref->rows(); ++t) {
    const auto p = o.step(ref->row(t));
    CHECK(p.ref_frame == t + 1);
    CHECK(p.cumulative_cost <= 1e-9);
  }
  CHECK(o.last_point().tempo_ratio == doctest::Approx(1.0));
}

TEST_CASE("doubled live stream tracks at half speed") {
  const std::size_t N = 600;
  auto ref = random_reference(N, 12, 4);
  OdtwConfig cfg;
  OnlineDtw o(ref, cfg);
  FeatureSequence live(FeatureKind::RectifiedSpectralDiff, 20.0, ref->dim());
  for (std::size_t t = 0; t < N / 2; ++t) {
    live.append_row(ref->row(t));
    live.append_row(ref->row(t));
  }
  std::vector<TrackedPoint> pts;
  std::size_t prev = 0;
  for (std::size_t t = 0; t < live.rows(); ++t) {
    pts.push_back(o.step(live.row(t)));
    CHECK(pts.back().ref_frame >= prev);
    prev = pts.back().ref_frame;
  }
  const std::size_t T = live.rows();
  CHECK(prev + cfg.search_depth >= T / 2);
  CHECK(prev <= T / 2 + cfg.search_depth);
  CHECK(o.last_point().tempo_ratio == doctest::Approx(0.5).epsilon(0.1));

  // Compare with the offline path over the same live frames.
  const auto offline = dtw_align(live, ref->slice(0, N / 2));
  CHECK(odtw_path_deviation(pts, offline) <= 2.0);
}

TEST_CASE("band and run length limits") {
  auto ref = random_reference(800, 10, 5);
  OdtwConfig cfg;
  cfg.search_depth = 50;
  cfg.max_run_count = 3;
  OnlineDtw o(ref, cfg);
  // Unrelated live material forces lots of direction changes.
  auto other = random_reference(600, 10, 99);
  for (std::size_t t = 0; t < other->rows(); ++t) o.step(other->row(t));
  CHECK(o.max_cells_per_increment() <= cfg.search_depth);
  CHECK(o.cells_evaluated() <= 2 * cfg.search_depth * (o.live_frames() + o.current_pair().q));

  std::size_t run = 0;
  StepDirection prev = StepDirection::None;
  for (auto d : o.decisions()) {
    run = (d == prev) ? run + 1 : 1;
    prev = d;
    if (d == StepDirection::Row || d == StepDirection::Column) CHECK(run <= cfg.max_run_count + 1);
  }
  // The decision right after a full run never repeats that direction.
  const auto& ds = o.decisions();
  for (std::size_t i = cfg.max_run_count; i < ds.size(); ++i) {
    bool full = true;
    for (std::size_t j = i - cfg.max_run_count; j < i; ++j) full = full && ds[j] == ds[i - 1];
    if (full && (ds[i - 1] == StepDirection::Column)) CHECK(ds[i] != StepDirection::Column);
  }
}

TEST_CASE("dimension mismatch") {
  auto ref = random_reference(10, 4, 6);
  OnlineDtw o(ref, {});
  const std::vector<float> bad(3, 0.0f);
  CHECK_THROWS_AS(o.step(bad), Error);
}

TEST_CASE("path deviation") {
  WarpPath off{{{1, 1}, {2, 2}, {3, 3}, {4, 4}}, 0.0};
  std::vector<TrackedPoint> same, late;
  for (std::size_t i = 1; i <= 4; ++i) {
    same.push_back({i, i, 0, 0, 1});
    late.push_back({i, i + 2, 0, 0, 1});
  }
  CHECK(odtw_path_deviation(same, off) == 0.0);
  CHECK(odtw_path_deviation(late, off) == 2.0);
  WarpPath plateau{{{1, 1}, {1, 2}, {1, 3}, {2, 4}}, 0.0};
  std::vector<TrackedPoint> two{{1, 2, 0, 0, 1}, {2, 4, 0, 0, 1}};
  CHECK(odtw_path_deviation(two, plateau) == 0.0);
  std::vector<TrackedPoint> too_long{{5, 5, 0, 0, 1}};
  CHECK_THROWS_AS(odtw_path_deviation(too_long, off), Error);
  CHECK_THROWS_AS(odtw_path_deviation(std::vector<TrackedPoint>{}, off), Error);
}
