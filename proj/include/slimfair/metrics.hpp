#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "slimfair/errors.hpp"

namespace slimfair {

/// Mean per-class recall over the classes present in `labels`.
inline double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw ArgumentError("balanced_accuracy: empty input");
  if (predictions.size() != labels.size()) throw ArgumentError("balanced_accuracy: length mismatch");
  std::vector<std::size_t> hits(classes, 0);
  std::vector<std::size_t> totals(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ArgumentError("balanced_accuracy: label out of range");
    ++totals[static_cast<std::size_t>(y)];
    if (predictions[i] == y) ++hits[static_cast<std::size_t>(y)];
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] == 0) continue;
    sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    ++present;
  }
  return sum / static_cast<double>(present);
}

/// Sample Pearson correlation; nullopt when either input has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw ArgumentError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Fractional ranks (ties share the average rank), 1-based.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("spearman: length mismatch");
  auto rx = ranks(x);
  auto ry = ranks(y);
  return pearson(rx, ry);
}

struct GainStats {
  double mcg = 0.0;     // mean collaboration gain
  double cgs = 0.0;     // population standard deviation of gains
  double spread = 0.0;  // max - min gain
  std::vector<double> gains;
};

inline GainStats gain_stats(std::span<const double> accuracies, std::span<const double> contributions) {
  if (accuracies.size() != contributions.size()) throw ArgumentError("gain_stats: length mismatch");
  if (accuracies.empty()) throw ArgumentError("gain_stats: empty input");
  GainStats s;
  s.gains.resize(accuracies.size());
  for (std::size_t i = 0; i < accuracies.size(); ++i) s.gains[i] = accuracies[i] - contributions[i];
  const double n = static_cast<double>(s.gains.size());
  s.mcg = std::accumulate(s.gains.begin(), s.gains.end(), 0.0) / n;
  double var = 0.0;
  for (double g : s.gains) var += (g - s.mcg) * (g - s.mcg);
  s.cgs = std::sqrt(var / n);
  auto [lo, hi] = std::minmax_element(s.gains.begin(), s.gains.end());
  s.spread = *hi - *lo;
  return s;
}

struct MetricReport {
  std::optional<double> pearson;
  double mcg = 0.0;
  double cgs = 0.0;
  double gain_spread = 0.0;
  double ir_rate = 0.0;
  std::vector<double> gains;
};

/// Fairness summary of final accuracies against contributions.
inline MetricReport make_report(std::span<const double> accuracies, std::span<const double> contributions) {
  MetricReport r;
  auto gs = gain_stats(accuracies, contributions);
  r.mcg = gs.mcg;
  r.cgs = gs.cgs;
  r.gain_spread = gs.spread;
  r.gains = gs.gains;
  if (accuracies.size() >= 2) r.pearson = pearson(accuracies, contributions);
  const auto nonneg = std::count_if(gs.gains.begin(), gs.gains.end(), [](double g) { return g >= 0.0; });
  r.ir_rate = static_cast<double>(nonneg) / static_cast<double>(gs.gains.size());
  return r;
}

}  // namespace slimfair
