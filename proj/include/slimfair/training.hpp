#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "slimfair/metrics.hpp"
#include "slimfair/partition.hpp"
#include "slimfair/slimnet.hpp"

namespace slimfair {

inline constexpr std::size_t kDefaultBatchSize = 128;

struct Batch {
  Tensor2 features;
  std::vector<int> labels;
};

/// The whole shard when it fits in one batch, otherwise a seeded sample of
/// batch_size rows without replacement.
inline Batch sample_batch(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  if (ds.size() <= batch_size) return {ds.features, ds.labels};
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: only the first batch_size positions are needed.
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch_size);
  std::sort(idx.begin(), idx.end());
  auto sub = subset(ds, idx);
  return {std::move(sub.features), std::move(sub.labels)};
}

struct Evaluation {
  double accuracy = 0.0;  // balanced
  double loss = 0.0;
};

inline Evaluation evaluate(const SlimmableModel& model, const Dataset& ds, double p) {
  Evaluation e;
  auto preds = predict(model, ds.features, p);
  e.accuracy = balanced_accuracy(preds, ds.labels, ds.classes);
  e.loss = loss(model, ds.features, ds.labels, p, Mode::Eval);
  return e;
}

/// Balanced test accuracy at every grid bucket, ascending by width.
inline std::vector<double> bucket_profile(const SlimmableModel& model, const Dataset& test) {
  std::vector<double> acc;
  acc.reserve(model.grid().size());
  for (double b : model.grid().buckets()) acc.push_back(evaluate(model, test, b).accuracy);
  return acc;
}

}  // namespace slimfair
