#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "slimfair/anneal.hpp"
#include "slimfair/errors.hpp"
#include "slimfair/rng.hpp"
#include "slimfair/width_grid.hpp"

namespace slimfair {

inline constexpr double kDefaultEpsilon = 1e-3;

/// Post-training allocation instance: ascending contributions and an
/// ascending menu of achievable accuracies.
struct AllocationProblem {
  std::vector<double> contributions;
  std::vector<double> menu;
  double epsilon = kDefaultEpsilon;

  void validate() const {
    if (contributions.empty()) throw ArgumentError("allocation: no clients");
    if (menu.empty()) throw ArgumentError("allocation: empty menu");
    if (!(epsilon > 0.0)) throw ArgumentError("allocation: epsilon must be positive");
    if (!std::is_sorted(contributions.begin(), contributions.end())) {
      throw ArgumentError("allocation: contributions must be ascending");
    }
    for (std::size_t i = 1; i < menu.size(); ++i) {
      if (!(menu[i] > menu[i - 1])) throw ArgumentError("allocation: menu must be strictly ascending");
    }
  }

  double lowest() const { return menu.front(); }
  double highest() const { return menu.back(); }

  /// Some allocation is individually rational iff the best model beats the
  /// top contributor.
  bool feasible() const { return highest() >= contributions.back(); }

  /// True when the lowest menu level exceeds c_1 + (u - c_N): the
  /// constant-gain allocation is then unreachable and low contributors are
  /// over-rewarded.
  bool feasibility_warning() const {
    return lowest() > contributions.front() + (highest() - contributions.back()) + 1e-12;
  }
};

/// One menu index per client.
struct Allocation {
  std::vector<std::size_t> index;

  std::vector<double> accuracies(const AllocationProblem& pb) const {
    std::vector<double> a(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) a[i] = pb.menu.at(index[i]);
    return a;
  }

  std::vector<double> gains(const AllocationProblem& pb) const {
    auto a = accuracies(pb);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= pb.contributions[i];
    return a;
  }

  bool operator==(const Allocation&) const = default;
};

/// -mean(u) / (var(u) + eps) on gains u = a - c, population variance.
inline double cost_of_gains(std::span<const double> gains, double epsilon) {
  const double n = static_cast<double>(gains.size());
  double mean = 0.0;
  for (double g : gains) mean += g;
  mean /= n;
  double var = 0.0;
  for (double g : gains) var += (g - mean) * (g - mean);
  var /= n;
  return -mean / (var + epsilon);
}

inline double cost(const Allocation& alloc, const AllocationProblem& pb) {
  auto g = alloc.gains(pb);
  return cost_of_gains(g, pb.epsilon);
}

inline bool is_ir(std::span<const double> gains) {
  return std::all_of(gains.begin(), gains.end(), [](double g) { return g >= 0.0; });
}

inline bool is_ir(const Allocation& alloc, const AllocationProblem& pb) {
  auto g = alloc.gains(pb);
  return is_ir(g);
}

struct AnnealSchedule {
  double k0 = 2.0;
  std::size_t steps = 0;  // 0 selects 50 * N * |menu|
  std::uint64_t seed = 0;

  std::size_t budget(const AllocationProblem& pb) const {
    return steps > 0 ? steps : 50 * pb.contributions.size() * pb.menu.size();
  }
};

/// Simulated-annealing allocation. Proposals pick one client uniformly and
/// move its menu index by +-1 (probability 0.8) or to a uniform index;
/// proposals that break individual rationality are rejected. Returns the
/// best allocation visited, after a greedy single-move polish.
///
/// The chain runs on log(-cost). With eps = 1e-3 raw costs reach the
/// hundreds, so under T_k = 1/log(k + k0) no uphill move is ever accepted and
/// the chain freezes in the first single-move local minimum. The log keeps
/// the minimizer (cost < 0 whenever some gain is positive).
inline Allocation anneal(const AllocationProblem& pb, const AnnealSchedule& schedule) {
  pb.validate();
  if (!pb.feasible()) throw FeasibilityError("allocation: no menu level reaches the top contribution");
  const std::size_t n = pb.contributions.size();
  const std::size_t m = pb.menu.size();
  Rng rng = derive_rng(schedule.seed, Stream::Anneal);

  std::vector<double> gains(n);
  auto state_cost = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t i = 0; i < n; ++i) gains[i] = pb.menu[idx[i]] - pb.contributions[i];
    return cost_of_gains(gains, pb.epsilon);
  };
  auto energy = [&](const std::vector<std::size_t>& idx) {
    const double c = state_cost(idx);
    return c < 0.0 ? -std::log(-c) : std::numeric_limits<double>::infinity();
  };

  auto propose = [&](const std::vector<std::size_t>& idx, Rng& r) -> std::optional<std::vector<std::size_t>> {
    const std::size_t client = std::uniform_int_distribution<std::size_t>(0, n - 1)(r);
    std::size_t next;
    if (uniform01(r) < 0.8) {
      const bool up = uniform01(r) < 0.5;
      if (up) {
        if (idx[client] + 1 >= m) return std::nullopt;
        next = idx[client] + 1;
      } else {
        if (idx[client] == 0) return std::nullopt;
        next = idx[client] - 1;
      }
    } else {
      next = std::uniform_int_distribution<std::size_t>(0, m - 1)(r);
    }
    if (pb.menu[next] < pb.contributions[client]) return std::nullopt;
    auto out = idx;
    out[client] = next;
    return out;
  };

  std::vector<std::size_t> start(n, m - 1);
  auto res = simulated_annealing(std::move(start), energy, propose, schedule.budget(pb), schedule.k0, rng);

  // Steepest descent over single-client moves; ties keep the incumbent.
  auto best = std::move(res.best);
  double best_cost = state_cost(best);
  while (true) {
    std::vector<std::size_t> step;
    double step_cost = best_cost;
    for (std::size_t i = 0; i < n; ++i) {
      auto cand = best;
      for (std::size_t k = 0; k < m; ++k) {
        if (k == best[i] || pb.menu[k] < pb.contributions[i]) continue;
        cand[i] = k;
        const double c = state_cost(cand);
        if (c < step_cost) {
          step_cost = c;
          step = cand;
        }
      }
    }
    if (step.empty()) break;
    best = std::move(step);
    best_cost = step_cost;
  }
  return Allocation{std::move(best)};
}

inline constexpr std::uint64_t kBruteForceLimit = 10'000'000;

/// Exact minimizer over all individually rational allocations; ties go to the
/// lexicographically smallest index vector.
inline Allocation brute_force(const AllocationProblem& pb) {
  pb.validate();
  const std::size_t n = pb.contributions.size();
  const std::size_t m = pb.menu.size();
  std::uint64_t states = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (states > kBruteForceLimit / m) throw CapacityError("brute_force: state space exceeds 1e7");
    states *= m;
  }
  if (!pb.feasible()) throw FeasibilityError("allocation: no menu level reaches the top contribution");

  // Per-client lowest admissible index; enumerating only admissible levels
  // keeps lexicographic order.
  std::vector<std::size_t> lo(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = static_cast<std::size_t>(std::lower_bound(pb.menu.begin(), pb.menu.end(), pb.contributions[i]) -
                                     pb.menu.begin());
  }
  std::vector<std::size_t> idx = lo;
  std::vector<double> gains(n);
  std::vector<std::size_t> best;
  double best_cost = 0.0;
  while (true) {
    for (std::size_t i = 0; i < n; ++i) gains[i] = pb.menu[idx[i]] - pb.contributions[i];
    const double c = cost_of_gains(gains, pb.epsilon);
    if (best.empty() || c < best_cost) {
      best = idx;
      best_cost = c;
    }
    std::size_t pos = n;
    while (pos > 0) {
      --pos;
      if (++idx[pos] < m) break;
      idx[pos] = lo[pos];
      if (pos == 0) return Allocation{best};
    }
  }
}

/// Sorts contributions, solves, and returns menu indices in the caller's
/// original client order.
inline std::vector<std::size_t> allocate_unsorted(std::span<const double> contributions, std::vector<double> menu,
                                                  double epsilon, const AnnealSchedule& schedule,
                                                  bool* warning = nullptr) {
  std::vector<std::size_t> order(contributions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return contributions[a] < contributions[b]; });
  AllocationProblem pb;
  pb.menu = std::move(menu);
  pb.epsilon = epsilon;
  for (auto i : order) pb.contributions.push_back(contributions[i]);
  pb.validate();
  if (warning) *warning = pb.feasibility_warning();
  auto alloc = anneal(pb, schedule);
  std::vector<std::size_t> out(contributions.size());
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = alloc.index[k];
  return out;
}

/// Width/accuracy pairs measured per grid bucket.
struct WidthProfile {
  std::vector<double> widths;
  std::vector<double> accuracies;
};

/// Menu levels a profile can deliver exactly: the running-maximum records of
/// accuracy in ascending width order (each paired with the first width that
/// reaches it).
inline WidthProfile menu_from_profile(const WidthProfile& profile) {
  if (profile.widths.empty() || profile.widths.size() != profile.accuracies.size()) {
    throw ConfigError("menu_from_profile: empty or ragged profile");
  }
  WidthProfile menu;
  for (std::size_t i = 0; i < profile.widths.size(); ++i) {
    if (menu.accuracies.empty() || profile.accuracies[i] > menu.accuracies.back()) {
      menu.widths.push_back(profile.widths[i]);
      menu.accuracies.push_back(profile.accuracies[i]);
    }
  }
  return menu;
}

/// Smallest bucket whose measured accuracy reaches each target, else the
/// widest bucket.
inline std::vector<double> accuracy_to_width(std::span<const double> targets, const WidthProfile& profile) {
  if (profile.widths.empty() || profile.widths.size() != profile.accuracies.size()) {
    throw ConfigError("accuracy_to_width: empty or ragged profile");
  }
  std::vector<double> out;
  out.reserve(targets.size());
  for (double t : targets) {
    double w = profile.widths.back();
    for (std::size_t i = 0; i < profile.widths.size(); ++i) {
      if (profile.accuracies[i] >= t) {
        w = profile.widths[i];
        break;
      }
    }
    out.push_back(w);
  }
  return out;
}

/// Allocates widths directly: contributions are normalized by their maximum
/// and the grid buckets serve as the menu.
inline std::vector<double> width_as_reward(std::span<const double> contributions, const WidthGrid& grid,
                                          double epsilon, const AnnealSchedule& schedule) {
  if (contributions.empty()) throw DegenerateError("width_as_reward: no contributions");
  const double top = *std::max_element(contributions.begin(), contributions.end());
  if (!(top > 0.0)) throw DegenerateError("width_as_reward: all contributions are zero");
  std::vector<double> normalized(contributions.begin(), contributions.end());
  for (auto& c : normalized) c /= top;
  auto idx = allocate_unsorted(normalized, grid.buckets(), epsilon, schedule);
  std::vector<double> widths(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) widths[i] = grid.buckets()[idx[i]];
  return widths;
}

// ---------------------------------------------------------------------------
// CSV output

struct AllocationRow {
  std::size_t client_id = 0;
  double contribution = 0.0;
  double accuracy = 0.0;
  double width = 1.0;
  double gain = 0.0;
};

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_allocation_csv(std::ostream& out, std::span<const AllocationRow> rows) {
  out << "client_id,contribution,accuracy,width,gain\n";
  for (const auto& r : rows) {
    out << r.client_id << ',' << format_double(r.contribution) << ',' << format_double(r.accuracy) << ','
        << format_double(r.width) << ',' << format_double(r.gain) << '\n';
  }
}

}  // namespace slimfair
