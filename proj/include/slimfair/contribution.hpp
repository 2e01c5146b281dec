#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slimfair/errors.hpp"
#include "slimfair/slimnet.hpp"
#include "slimfair/training.hpp"

namespace slimfair {

using Vector = std::vector<double>;

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline Vector mean_vector(std::span<const Vector> vs) {
  if (vs.empty()) throw ShapeError("mean_vector: no inputs");
  Vector out(vs.front().size(), 0.0);
  for (const auto& v : vs) {
    if (v.size() != out.size()) throw ShapeError("mean_vector: length mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  }
  for (auto& x : out) x /= static_cast<double>(vs.size());
  return out;
}

/// Cosine-gradient contribution: cos(delta_i, aggregate) per client.
inline Vector cgsv(std::span<const Vector> deltas, std::span<const double> aggregate) {
  Vector scores;
  scores.reserve(deltas.size());
  for (const auto& d : deltas) scores.push_back(cosine(d, aggregate));
  return scores;
}

/// CGSV restricted to the coordinates of the model's last `last_m` layers.
inline Vector shapfed_lite(std::span<const Vector> deltas, std::span<const double> aggregate,
                           const SlimmableModel& layout, std::size_t last_m) {
  const auto& layers = layout.layers();
  if (last_m < 1 || last_m > layers.size()) {
    throw ConfigError("shapfed_lite: last_m must lie in [1, " + std::to_string(layers.size()) + "]");
  }
  const std::size_t begin = layers[layers.size() - last_m].weight_offset;
  const std::size_t end = layout.param_count();
  if (aggregate.size() != end) throw ShapeError("shapfed_lite: aggregate does not match model layout");
  std::vector<Vector> cut;
  cut.reserve(deltas.size());
  for (const auto& d : deltas) {
    if (d.size() != end) throw ShapeError("shapfed_lite: delta does not match model layout");
    cut.emplace_back(d.begin() + static_cast<std::ptrdiff_t>(begin), d.end());
  }
  return cgsv(cut, aggregate.subspan(begin));
}

/// r_i = 0.5 (1 + i/N) for clients i = 1..N.
inline Vector participation_rate_contribution(std::size_t n) {
  if (n < 1) throw ArgumentError("participation_rate_contribution: N must be >= 1");
  Vector r(n);
  for (std::size_t i = 1; i <= n; ++i) r[i - 1] = 0.5 * (1.0 + static_cast<double>(i) / static_cast<double>(n));
  return r;
}

/// Momentum update c_t = gamma c_{t-1} + (1 - gamma) fresh; round 0 takes
/// the fresh score as is.
inline double update_contribution(double prev, double fresh, double gamma, std::size_t round) {
  if (round == 0) return fresh;
  return gamma * prev + (1.0 - gamma) * fresh;
}

inline Vector update_contributions(std::span<const double> prev, std::span<const double> fresh, double gamma,
                                   std::size_t round) {
  if (round > 0 && prev.size() != fresh.size()) throw ShapeError("update_contributions: length mismatch");
  Vector out(fresh.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    out[i] = update_contribution(round == 0 ? 0.0 : prev[i], fresh[i], gamma, round);
  }
  return out;
}

using WidthMap = std::function<double(double normalized, double p_min, double p_max)>;

inline double default_width_map(double x, double p_min, double p_max) { return std::max(p_min, x * p_max); }

/// Maps contributions to widths via nu(c_i / max_k c_k). Negative scores are
/// clamped to zero first.
inline Vector reward_widths(std::span<const double> c, double p_min, double p_max,
                            const WidthMap& nu = default_width_map) {
  if (c.empty()) throw DegenerateError("reward_widths: no contributions");
  Vector clamped(c.begin(), c.end());
  for (auto& v : clamped) {
    if (!std::isfinite(v)) throw NumericError("reward_widths: non-finite contribution");
    v = std::max(v, 0.0);
  }
  const double top = *std::max_element(clamped.begin(), clamped.end());
  if (!(top > 0.0)) throw DegenerateError("reward_widths: all contributions are zero");
  Vector w(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) w[i] = nu(clamped[i] / top, p_min, p_max);
  return w;
}

/// reward_widths followed by snapping to the nearest grid bucket.
inline Vector reward_widths_on_grid(std::span<const double> c, const WidthGrid& grid,
                                    const WidthMap& nu = default_width_map) {
  auto w = reward_widths(c, grid.p_min(), grid.p_max(), nu);
  for (auto& x : w) x = grid.nearest(std::clamp(x, grid.p_min(), grid.p_max()));
  return w;
}

struct StandaloneOptions {
  std::size_t iterations = 200;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = kDefaultBatchSize;
};

/// Balanced test accuracy of a fresh full-width model trained only on
/// `shard`. The initial weights come from `init` so paired runs can share them.
inline double standalone_accuracy(const Dataset& shard, const Dataset& test, const SlimmableModel& init,
                                  const StandaloneOptions& opt, Rng& rng) {
  if (shard.size() == 0) throw ConfigError("standalone_accuracy: empty shard");
  SlimmableModel model = init;
  Sgd sgd(opt.lr, opt.momentum);
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    auto batch = sample_batch(shard, opt.batch_size, rng);
    auto lg = backward(model, batch.features, batch.labels, 1.0, Mode::Train);
    sgd.step(model, lg.gradient);
  }
  return evaluate(model, test, 1.0).accuracy;
}

}  // namespace slimfair
