#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "slimfair/slimnet.hpp"
#include "slimfair/training.hpp"

namespace slimfair::testing {

inline Architecture mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes, bool norm = false) {
  Architecture a;
  a.input_dim = in;
  a.hidden = std::move(hidden);
  a.classes = classes;
  a.switchable_norm = norm;
  return a;
}

inline Batch random_batch(std::size_t n, std::size_t dim, std::size_t classes, Rng& rng) {
  Batch b{Tensor2(n, dim), std::vector<int>(n)};
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& x : b.features.data) x = g(rng);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  for (auto& y : b.labels) y = lab(rng);
  return b;
}

// Central differences against backward(), on `samples` random coordinates
// of the p-slice. Loss is taken in the same mode as the analytic gradient.
inline double max_gradient_error(SlimmableModel model, const Batch& b, double p, std::size_t samples, Rng& rng,
                                 Mode mode = Mode::Eval, double h = 1e-5) {
  auto analytic = backward(model, b.features, b.labels, p, mode).gradient.values;
  const auto slice = model.slice_view(p);
  std::uniform_int_distribution<std::size_t> pick(0, slice.size() - 1);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t j = slice[pick(rng)];
    const double keep = model.params()[j];
    model.params()[j] = keep + h;
    const double up = loss(model, b.features, b.labels, p, mode);
    model.params()[j] = keep - h;
    const double down = loss(model, b.features, b.labels, p, mode);
    model.params()[j] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[j];
    const double err = std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace slimfair::testing
