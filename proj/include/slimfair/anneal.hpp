#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>

#include "slimfair/errors.hpp"
#include "slimfair/rng.hpp"

namespace slimfair {

/// Logarithmic cooling T_k = 1 / log(k + k0), k >= 1, k0 > 1.
inline double log_temperature(std::size_t k, double k0) { return 1.0 / std::log(static_cast<double>(k) + k0); }

template <typename State>
struct AnnealResult {
  State best;
  double best_cost = 0.0;
  State final_state;
  double final_cost = 0.0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;  // constraint rejections plus Metropolis refusals
};

/// Metropolis chain on a discrete state space with logarithmic cooling.
/// `propose(state, rng)` returns a candidate or nullopt when the candidate
/// violates a hard constraint; such proposals are never accepted. Returns the
/// best state visited alongside the final chain state.
template <typename State, typename CostFn, typename ProposeFn>
AnnealResult<State> simulated_annealing(State initial, CostFn&& cost, ProposeFn&& propose, std::size_t steps, double k0,
                                        Rng& rng) {
  if (!(k0 > 1.0)) throw RangeError("simulated_annealing: k0 must exceed 1");
  if (steps < 1) throw RangeError("simulated_annealing: step budget must be >= 1");
  AnnealResult<State> res;
  double current_cost = cost(initial);
  res.best = initial;
  res.best_cost = current_cost;
  State current = std::move(initial);

  for (std::size_t k = 1; k <= steps; ++k) {
    std::optional<State> candidate = propose(current, rng);
    if (!candidate) {
      ++res.rejected;
      continue;
    }
    const double next_cost = cost(*candidate);
    bool accept = next_cost <= current_cost;
    if (!accept) {
      const double t = log_temperature(k, k0);
      accept = uniform01(rng) < std::exp(-(next_cost - current_cost) / t);
    }
    if (!accept) {
      ++res.rejected;
      continue;
    }
    ++res.accepted;
    current = std::move(*candidate);
    current_cost = next_cost;
    if (current_cost < res.best_cost) {
      res.best = current;
      res.best_cost = current_cost;
    }
  }
  res.final_state = std::move(current);
  res.final_cost = current_cost;
  return res;
}

}  // namespace slimfair
