#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slimfair/contribution.hpp"
#include "slimfair/errors.hpp"
#include "slimfair/partition.hpp"
#include "slimfair/rng.hpp"
#include "slimfair/slimnet.hpp"
#include "slimfair/training.hpp"

namespace slimfair {

struct ClientState {
  std::size_t id = 0;
  Dataset shard;
  double contribution = 0.0;
  double max_width = 1.0;
  double participation = 1.0;  // per-round probability of taking part
  Rng rng;
  Rng participation_rng;
};

/// Clients with per-client streams fanned out from one master seed.
inline std::vector<ClientState> make_clients(const Dataset& train, const Shards& shards, std::uint64_t seed) {
  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    ClientState c;
    c.id = i;
    c.shard = subset(train, shards[i]);
    c.rng = derive_rng(seed, Stream::ClientTrain, i);
    c.participation_rng = derive_rng(seed, Stream::Participation, i);
    clients.push_back(std::move(c));
  }
  return clients;
}

struct LocalTrainOptions {
  std::size_t iterations = 5;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = kDefaultBatchSize;
};

struct LocalUpdate {
  SlimmableModel model;
  double width = 1.0;  // the client's maximum width this round
  std::vector<double> sampled_widths;
};

/// Local iterations: each draws p ~ U[p_min, max_width], then takes one SGD
/// step at max_width followed by one at p on the same minibatch.
inline LocalUpdate local_train(ClientState& client, const SlimmableModel& snapshot, const LocalTrainOptions& opt) {
  if (client.shard.size() == 0) throw ConfigError("local_train: client " + std::to_string(client.id) + " has no data");
  const auto& grid = snapshot.grid();
  grid.check(client.max_width);
  LocalUpdate up{snapshot, client.max_width, {}};
  Sgd sgd(opt.lr, opt.momentum);
  std::uniform_real_distribution<double> width_dist(grid.p_min(), client.max_width);
  for (std::size_t k = 0; k < opt.iterations; ++k) {
    auto batch = sample_batch(client.shard, opt.batch_size, client.rng);
    const double p = width_dist(client.rng);
    up.sampled_widths.push_back(p);
    auto full = backward(up.model, batch.features, batch.labels, client.max_width, Mode::Train);
    sgd.step(up.model, full.gradient);
    auto sub = backward(up.model, batch.features, batch.labels, p, Mode::Train);
    sgd.step(up.model, sub.gradient);
  }
  return up;
}

namespace detail {

// Recursive halving keeps rounding error O(log n) and the result a fixed
// function of the value order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 2) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

// Mean as v0 + sum(v - v0) / n: exact when every value is equal.
inline double stable_mean(std::span<double> v) {
  const double first = v.front();
  for (auto& x : v) x -= first;
  return first + pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace detail

/// Coordinate-wise mean of full-width updates (parameters and norm buffers).
inline SlimmableModel aggregate_mean(std::span<const SlimmableModel> updates) {
  if (updates.empty()) throw ShapeError("aggregate_mean: no updates");
  SlimmableModel out = updates.front();
  for (const auto& u : updates) {
    if (!u.same_shape(out)) throw ShapeError("aggregate_mean: update dimension mismatch");
  }
  std::vector<double> buf(updates.size());
  for (std::size_t j = 0; j < out.params().size(); ++j) {
    for (std::size_t i = 0; i < updates.size(); ++i) buf[i] = updates[i].params()[j];
    out.params()[j] = detail::stable_mean(buf);
  }
  for (std::size_t j = 0; j < out.buffers().size(); ++j) {
    for (std::size_t i = 0; i < updates.size(); ++i) buf[i] = updates[i].buffers()[j];
    out.buffers()[j] = detail::stable_mean(buf);
  }
  return out;
}

struct MaskedUpdate {
  const SlimmableModel* model = nullptr;
  double width = 1.0;
};

/// Each coordinate becomes the mean over the clients whose width-slice covers
/// it; uncovered coordinates keep the previous global value. An update that
/// changed anything outside its own slice is rejected.
inline SlimmableModel masked_average(std::span<const MaskedUpdate> updates, const SlimmableModel& previous) {
  SlimmableModel out = previous;
  std::vector<std::vector<std::uint8_t>> pmask, bmask;
  for (const auto& u : updates) {
    if (u.model == nullptr || !u.model->same_shape(previous)) throw ShapeError("masked_average: update shape mismatch");
    if (!previous.grid().contains(u.width)) throw ShapeError("masked_average: width outside grid range");
    pmask.push_back(previous.slice_mask(u.width));
    bmask.push_back(previous.buffer_mask(u.width));
  }

  auto reduce = [&](auto&& get, std::vector<double>& target, const std::vector<double>& prev,
                    const std::vector<std::vector<std::uint8_t>>& masks) {
    std::vector<double> buf;
    buf.reserve(updates.size());
    for (std::size_t j = 0; j < target.size(); ++j) {
      buf.clear();
      for (std::size_t i = 0; i < updates.size(); ++i) {
        const double v = get(*updates[i].model)[j];
        if (masks[i][j]) {
          buf.push_back(v);
        } else if (v != prev[j]) {
          throw ShapeError("masked_average: client update touches coordinates outside its width slice");
        }
      }
      if (!buf.empty()) target[j] = detail::stable_mean(buf);
    }
  };
  reduce([](const SlimmableModel& m) -> const std::vector<double>& { return m.params(); }, out.params(),
         previous.params(), pmask);
  reduce([](const SlimmableModel& m) -> const std::vector<double>& { return m.buffers(); }, out.buffers(),
         previous.buffers(), bmask);
  return out;
}

struct RoundRecord {
  std::size_t round = 0;
  std::uint64_t seed = 0;
  double loss = 0.0;  // full-width test loss
  std::vector<double> buckets;
  std::vector<double> accuracy;  // balanced test accuracy per bucket
  std::vector<double> contributions;
  std::vector<double> widths;
  std::vector<std::size_t> participants;
};

struct FedOptions {
  std::size_t rounds = 30;
  LocalTrainOptions local;
  std::vector<double> lr_milestones{0.5, 0.75};  // fractions of `rounds`
  double lr_decay = 0.1;
  std::uint64_t seed = 0;
};

inline double learning_rate_at(const FedOptions& opt, std::size_t round) {
  double lr = opt.local.lr;
  for (double m : opt.lr_milestones) {
    if (static_cast<double>(round) >= m * static_cast<double>(opt.rounds)) lr *= opt.lr_decay;
  }
  return lr;
}

struct FedResult {
  SlimmableModel model;
  std::vector<RoundRecord> records;
};

using RecordSink = std::function<void(const RoundRecord&)>;

namespace detail {

inline RoundRecord evaluate_round(const SlimmableModel& model, const Dataset& test, std::size_t round,
                                  std::uint64_t seed) {
  RoundRecord rec;
  rec.round = round;
  rec.seed = seed;
  rec.buckets = model.grid().buckets();
  rec.accuracy = bucket_profile(model, test);
  rec.loss = evaluate(model, test, 1.0).loss;
  return rec;
}

inline bool participates(ClientState& c) {
  if (c.participation >= 1.0) return true;
  return uniform01(c.participation_rng) < c.participation;
}

}  // namespace detail

/// Post-training-reward federated optimization: every round broadcasts the
/// full model, runs dual-width local training on each participating client
/// and averages the returned full models.
inline FedResult run_alg1(std::vector<ClientState>& clients, SlimmableModel model, const FedOptions& opt,
                          const Dataset& test, const RecordSink& sink = {}) {
  if (opt.rounds < 1) throw ConfigError("run_alg1: need at least one round");
  if (clients.empty()) throw ConfigError("run_alg1: no clients");
  FedResult res;
  for (std::size_t t = 0; t < opt.rounds; ++t) {
    LocalTrainOptions local = opt.local;
    local.lr = learning_rate_at(opt, t);
    std::vector<SlimmableModel> updates;
    std::vector<std::size_t> who;
    for (auto& c : clients) {
      c.max_width = model.grid().p_max();
      if (!detail::participates(c)) continue;
      updates.push_back(local_train(c, model, local).model);
      who.push_back(c.id);
    }
    if (!updates.empty()) model = aggregate_mean(updates);
    auto rec = detail::evaluate_round(model, test, t, opt.seed);
    rec.participants = std::move(who);
    for (const auto& c : clients) {
      rec.contributions.push_back(c.contribution);
      rec.widths.push_back(c.max_width);
    }
    if (sink) sink(rec);
    res.records.push_back(std::move(rec));
  }
  res.model = std::move(model);
  return res;
}

/// Contribution assessment over parameter deltas restricted to the common
/// p_min slice (zeros elsewhere).
using ContributionFn =
    std::function<Vector(std::span<const Vector> deltas, std::span<const double> aggregate, const SlimmableModel& layout)>;

inline ContributionFn cgsv_method() {
  return [](std::span<const Vector> deltas, std::span<const double> aggregate, const SlimmableModel&) {
    return cgsv(deltas, aggregate);
  };
}

inline ContributionFn shapfed_method(std::size_t last_m) {
  return [last_m](std::span<const Vector> deltas, std::span<const double> aggregate, const SlimmableModel& layout) {
    return shapfed_lite(deltas, aggregate, layout, last_m);
  };
}

struct Alg2Options {
  double gamma = 0.5;
  ContributionFn assess = cgsv_method();
  WidthMap nu = default_width_map;
};

struct Alg2Result {
  FedResult fed;
  std::vector<double> contributions;
  std::vector<double> widths;  // assigned after the last round
};

/// Training-time rewards: clients train p_max^(i)-submodels, the server scores
/// their p_min-slice deltas, smooths the scores with momentum, maps them to
/// widths and merges updates with masked averaging.
inline Alg2Result run_alg2(std::vector<ClientState>& clients, SlimmableModel model, const FedOptions& opt,
                           const Alg2Options& alg, const Dataset& test, const RecordSink& sink = {}) {
  if (opt.rounds < 1) throw ConfigError("run_alg2: need at least one round");
  if (clients.empty()) throw ConfigError("run_alg2: no clients");
  if (alg.gamma < 0.0 || alg.gamma > 1.0) throw ConfigError("run_alg2: gamma must lie in [0, 1]");
  const auto& grid = model.grid();
  for (auto& c : clients) c.max_width = grid.p_max();
  const auto common = model.slice_mask(grid.p_min());
  Alg2Result out;
  std::vector<double> contrib(clients.size(), 0.0);

  for (std::size_t t = 0; t < opt.rounds; ++t) {
    LocalTrainOptions local = opt.local;
    local.lr = learning_rate_at(opt, t);
    std::vector<LocalUpdate> updates;
    updates.reserve(clients.size());
    for (auto& c : clients) updates.push_back(local_train(c, model, local));

    std::vector<Vector> deltas;
    deltas.reserve(updates.size());
    for (const auto& u : updates) {
      Vector d(model.param_count(), 0.0);
      for (std::size_t j = 0; j < d.size(); ++j) {
        if (common[j]) d[j] = model.params()[j] - u.model.params()[j];
      }
      deltas.push_back(std::move(d));
    }
    const Vector aggregate = mean_vector(deltas);
    const Vector fresh = alg.assess(deltas, aggregate, model);
    contrib = update_contributions(contrib, fresh, alg.gamma, t);

    std::vector<MaskedUpdate> masked;
    for (const auto& u : updates) masked.push_back({&u.model, u.width});
    model = masked_average(masked, model);

    const bool any_positive = std::any_of(contrib.begin(), contrib.end(), [](double v) { return v > 0.0; });
    if (any_positive) {
      auto widths = reward_widths_on_grid(contrib, grid, alg.nu);
      for (std::size_t i = 0; i < clients.size(); ++i) clients[i].max_width = widths[i];
    }
    for (std::size_t i = 0; i < clients.size(); ++i) clients[i].contribution = contrib[i];

    auto rec = detail::evaluate_round(model, test, t, opt.seed);
    for (const auto& c : clients) {
      rec.contributions.push_back(c.contribution);
      rec.widths.push_back(c.max_width);
      rec.participants.push_back(c.id);
    }
    if (sink) sink(rec);
    out.fed.records.push_back(std::move(rec));
  }
  out.contributions = contrib;
  for (const auto& c : clients) out.widths.push_back(c.max_width);
  out.fed.model = std::move(model);
  return out;
}

}  // namespace slimfair
