#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mtrack/features.hpp"

namespace mtrack {

/// 1-based index pair: p indexes the first sequence, q the second.
struct IndexPair {
  std::size_t p = 1;
  std::size_t q = 1;
  bool operator==(const IndexPair&) const = default;
};

struct WarpPath {
  std::vector<IndexPair> pairs;
  double cost = 0.0;
};

/// Euclidean distance; throws DimensionMismatch on unequal lengths.
double pairwise_distance(std::span<const float> x, std::span<const float> y);

/// Exact DTW with unweighted steps (1,0), (0,1), (1,1). Among equal-cost
/// paths, the one taking the diagonal earliest wins: walking from (1, 1), ties
/// prefer the diagonal step, then (p+1, q), then (p, q+1).
WarpPath dtw_align(const FeatureSequence& x, const FeatureSequence& y);

/// Same recursion, cost only, O(min(P, Q)) memory. Bit-identical to
/// dtw_align(x, y).cost.
double dtw_cost(const FeatureSequence& x, const FeatureSequence& y);

/// True when the path starts at (1,1), ends at (P,Q) and every step is one of
/// the three admissible moves.
bool is_valid_offline_path(const WarpPath& path, std::size_t P, std::size_t Q);

void write_warp_path_csv(const std::filesystem::path& path, const WarpPath& warp);
WarpPath read_warp_path_csv(const std::filesystem::path& path);

}  // namespace mtrack
