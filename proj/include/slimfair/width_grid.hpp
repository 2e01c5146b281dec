#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "slimfair/errors.hpp"

namespace slimfair {

/// Discrete set of width fractions at which normalization statistics are kept
/// and per-bucket accuracy is measured. The last bucket is always the full
/// model (1.0).
class WidthGrid {
 public:
  WidthGrid() : WidthGrid(0.25, 0.05) {}

  /// Buckets p_min, p_min + step, ... up to 1.0 (1.0 always included).
  WidthGrid(double p_min, double step) : p_min_(p_min) {
    if (!(p_min > 0.0) || p_min > 1.0) throw RangeError("WidthGrid: p_min must lie in (0, 1]");
    if (!(step > 0.0)) throw RangeError("WidthGrid: bucket step must be positive");
    for (std::size_t k = 0;; ++k) {
      // Multiply instead of accumulate so buckets are exact decimal roundings.
      double b = p_min + static_cast<double>(k) * step;
      b = std::round(b * 1e9) / 1e9;
      if (b >= 1.0 - 1e-9) break;
      buckets_.push_back(b);
    }
    buckets_.push_back(1.0);
  }

  explicit WidthGrid(std::vector<double> buckets) : buckets_(std::move(buckets)) {
    if (buckets_.empty()) throw RangeError("WidthGrid: no buckets");
    for (std::size_t i = 1; i < buckets_.size(); ++i) {
      if (!(buckets_[i] > buckets_[i - 1])) throw RangeError("WidthGrid: buckets must be strictly ascending");
    }
    if (buckets_.back() != 1.0) throw RangeError("WidthGrid: last bucket must be 1.0");
    if (!(buckets_.front() > 0.0)) throw RangeError("WidthGrid: buckets must be positive");
    p_min_ = buckets_.front();
  }

  double p_min() const { return p_min_; }
  double p_max() const { return 1.0; }
  const std::vector<double>& buckets() const { return buckets_; }
  std::size_t size() const { return buckets_.size(); }

  bool contains(double p) const { return p >= p_min_ - 1e-12 && p <= 1.0 + 1e-12; }

  void check(double p) const {
    if (!contains(p)) {
      throw RangeError("width " + std::to_string(p) + " outside [" + std::to_string(p_min_) + ", 1]");
    }
  }

  /// Nearest bucket; ties resolve toward the smaller bucket.
  std::size_t nearest_index(double p) const {
    std::size_t best = 0;
    double best_dist = std::abs(buckets_[0] - p);
    for (std::size_t i = 1; i < buckets_.size(); ++i) {
      double d = std::abs(buckets_[i] - p);
      if (d < best_dist - 1e-12) {
        best = i;
        best_dist = d;
      }
    }
    return best;
  }

  double nearest(double p) const { return buckets_[nearest_index(p)]; }

 private:
  double p_min_ = 0.25;
  std::vector<double> buckets_;
};

/// Number of units kept when slicing a dimension of size n at width p.
/// The small epsilon keeps e.g. 0.3 * 10 from rounding up to 4.
inline std::size_t sliced_units(double p, std::size_t n) {
  auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
  if (k < 1) k = 1;
  if (k > n) k = n;
  return k;
}

}  // namespace slimfair
