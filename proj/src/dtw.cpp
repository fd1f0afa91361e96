#include "mtrack/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "mtrack/error.hpp"

namespace mtrack {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Successor codes, 2 bits per cell.
enum Step : std::uint8_t { kEnd = 0, kDiagonal = 1, kVertical = 2, kHorizontal = 3 };

class StepGrid {
 public:
  StepGrid(std::size_t rows, std::size_t cols) : cols_(cols), bits_((rows * cols + 3) / 4, 0) {}

  void set(std::size_t r, std::size_t c, Step s) {
    const std::size_t i = r * cols_ + c;
    bits_[i / 4] = static_cast<std::uint8_t>(bits_[i / 4] | (s << (2 * (i % 4))));
  }
  Step get(std::size_t r, std::size_t c) const {
    const std::size_t i = r * cols_ + c;
    return static_cast<Step>((bits_[i / 4] >> (2 * (i % 4))) & 0x3);
  }

 private:
  std::size_t cols_;
  std::vector<std::uint8_t> bits_;
};

void check_inputs(const FeatureSequence& x, const FeatureSequence& y) {
  if (x.empty() || y.empty()) throw Error(Errc::EmptyInput, "DTW needs two non-empty sequences");
  if (x.dim() != y.dim()) throw Error(Errc::DimensionMismatch, "feature dimensions differ");
  if (x.kind() != y.kind()) throw Error(Errc::DimensionMismatch, "feature kinds differ");
}

// Best next step and its cost-to-go, ties in the order diagonal, vertical,
// horizontal.
inline std::pair<Step, double> best_step(double diag, double vert, double horiz) {
  Step s = kDiagonal;
  double best = diag;
  if (vert < best) {
    s = kVertical;
    best = vert;
  }
  if (horiz < best) {
    s = kHorizontal;
    best = horiz;
  }
  return {s, best};
}

}  // namespace

double pairwise_distance(std::span<const float> x, std::span<const float> y) {
  if (x.size() != y.size()) throw Error(Errc::DimensionMismatch, "vector lengths differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Both functions run the recursion from (P, Q) back to (1, 1), accumulating
// cost-to-go, so the path can be traced forward from (1, 1) and the tie rule
// applies in playing order.
WarpPath dtw_align(const FeatureSequence& x, const FeatureSequence& y) {
  check_inputs(x, y);
  const std::size_t P = x.rows();
  const std::size_t Q = y.rows();

  StepGrid steps(P, Q);
  std::vector<double> next(Q, kInf), cur(Q, kInf);
  for (std::size_t p = P; p-- > 0;) {
    for (std::size_t q = Q; q-- > 0;) {
      const double d = pairwise_distance(x.row(p), y.row(q));
      if (p == P - 1 && q == Q - 1) {
        cur[q] = d;
        steps.set(p, q, kEnd);
        continue;
      }
      const double diag = (p + 1 < P && q + 1 < Q) ? next[q + 1] : kInf;
      const double vert = p + 1 < P ? next[q] : kInf;
      const double horiz = q + 1 < Q ? cur[q + 1] : kInf;
      const auto [step, best] = best_step(diag, vert, horiz);
      cur[q] = d + best;
      steps.set(p, q, step);
    }
    std::swap(next, cur);
  }

  WarpPath path;
  path.cost = next[0];
  std::size_t p = 0, q = 0;
  path.pairs.push_back({1, 1});
  while (p != P - 1 || q != Q - 1) {
    switch (steps.get(p, q)) {
      case kDiagonal: ++p; ++q; break;
      case kVertical: ++p; break;
      case kHorizontal: ++q; break;
      case kEnd: p = P - 1; q = Q - 1; break;
    }
    path.pairs.push_back({p + 1, q + 1});
  }
  return path;
}

double dtw_cost(const FeatureSequence& x, const FeatureSequence& y) {
  check_inputs(x, y);
  // Iterate over the longer sequence and keep rolling rows over the shorter
  // one. The recursion is symmetric in value, so the result is unchanged.
  const bool swap = y.rows() > x.rows();
  const FeatureSequence& outer = swap ? y : x;
  const FeatureSequence& inner = swap ? x : y;
  const std::size_t M = outer.rows();
  const std::size_t N = inner.rows();

  std::vector<double> next(N, kInf), cur(N, kInf);
  for (std::size_t i = M; i-- > 0;) {
    for (std::size_t j = N; j-- > 0;) {
      const double d = pairwise_distance(outer.row(i), inner.row(j));
      if (i == M - 1 && j == N - 1) {
        cur[j] = d;
        continue;
      }
      const double diag = (i + 1 < M && j + 1 < N) ? next[j + 1] : kInf;
      const double a = i + 1 < M ? next[j] : kInf;
      const double b = j + 1 < N ? cur[j + 1] : kInf;
      cur[j] = d + std::min({diag, a, b});
    }
    std::swap(next, cur);
  }
  return next[0];
}

bool is_valid_offline_path(const WarpPath& path, std::size_t P, std::size_t Q) {
  if (path.pairs.empty()) return false;
  if (path.pairs.front() != IndexPair{1, 1}) return false;
  if (path.pairs.back() != IndexPair{P, Q}) return false;
  for (std::size_t k = 1; k < path.pairs.size(); ++k) {
    const auto dp = path.pairs[k].p - path.pairs[k - 1].p;
    const auto dq = path.pairs[k].q - path.pairs[k - 1].q;
    if (path.pairs[k].p < path.pairs[k - 1].p || path.pairs[k].q < path.pairs[k - 1].q) return false;
    if (dp > 1 || dq > 1 || (dp == 0 && dq == 0)) return false;
  }
  return true;
}

void write_warp_path_csv(const std::filesystem::path& path, const WarpPath& warp) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "p,q\n";
  for (const auto& pq : warp.pairs) out << pq.p << ',' << pq.q << '\n';
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

WarpPath read_warp_path_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("p,q", 0) != 0) {
    throw Error(Errc::MalformedFile, "missing p,q header in " + path.string());
  }
  WarpPath warp;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    IndexPair pq;
    char comma = 0;
    if (!(row >> pq.p >> comma >> pq.q) || comma != ',') {
      throw Error(Errc::MalformedFile, "bad warp path row: " + line);
    }
    warp.pairs.push_back(pq);
  }
  return warp;
}

}  // namespace mtrack
