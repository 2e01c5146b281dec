// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "slimfair/experiment.hpp"
#include "support.hpp"

using namespace slimfair;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    o.pass = false;
    o.detail += " (over time budget)";
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ULP distance for the formula checks; literal decimals like 0.6 are not
// always reachable by the IEEE evaluation of the formula itself.
bool ulp_equal(double a, double b, int ulps = 4) {
  if (a == b) return true;
  return std::abs(a - b) <= ulps * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
}

// Desk-scale data shared by the pipeline criteria.
json desk_data() { return {{"samples", 5000}, {"dim", 5}, {"classes", 4}, {"spread", 0.1}, {"modes_per_class", 10}}; }

ExperimentConfig dirichlet_pipeline(std::uint64_t seed) {
  json j = {{"mode", "post_training"}, {"clients", 5}, {"rounds", 80}, {"local_iters", 5}, {"lr", 0.1},
            {"lr_milestones", json::array()}, {"partition", {{"kind", "dirichlet"}, {"alpha", 0.5}}},
            {"data", desk_data()}, {"seed", seed}};
  return config_from_json(j);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome gradient_check() {
  Rng rng = derive_rng(2024, Stream::Init);
  SlimmableModel m(slimfair::testing::mlp(6, {16, 16}, 4), WidthGrid(0.25, 0.05), rng);
  Rng drng = derive_rng(2024, Stream::Data);
  auto b = slimfair::testing::random_batch(32, 6, 4, drng);
  double worst = 0.0;
  for (double p : {0.25, 0.5, 1.0}) worst = std::max(worst, slimfair::testing::max_gradient_error(m, b, p, 200, drng));
  return {worst < 1e-4, "max rel err " + fmt("%.2e", worst) + " < 1e-4"};
}

Outcome annealer_vs_oracle() {
  int exact = 0;
  bool props = true;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng = derive_rng(inst, Stream::Anneal, 7);
    AllocationProblem pb;
    for (int i = 0; i < 4; ++i) pb.contributions.push_back(0.1 + 0.6 * uniform01(rng));
    std::sort(pb.contributions.begin(), pb.contributions.end());
    // six distinct levels, the top one above every contribution
    while (pb.menu.size() < 6) {
      pb.menu.clear();
      for (int k = 0; k < 5; ++k) pb.menu.push_back(0.2 + 0.6 * uniform01(rng));
      pb.menu.push_back(0.85 + 0.1 * uniform01(rng));
      std::sort(pb.menu.begin(), pb.menu.end());
      pb.menu.erase(std::unique(pb.menu.begin(), pb.menu.end()), pb.menu.end());
    }
    AnnealSchedule s;
    s.steps = 20000;
    s.seed = inst;
    auto a = anneal(pb, s);
    auto oracle = brute_force(pb);
    if (cost(a, pb) == cost(oracle, pb)) ++exact;
    props = props && is_ir(a, pb) && a.index.back() == pb.menu.size() - 1;
  }
  return {exact >= 19 && props,
          std::to_string(exact) + "/20 exact (need 19), IR + top-gets-u " + (props ? "all" : "violated")};
}

Outcome perfect_correlation() {
  Rng rng = derive_rng(11, Stream::Anneal, 3);
  AllocationProblem pb;
  for (int i = 0; i < 5; ++i) pb.contributions.push_back(0.3 + 0.4 * uniform01(rng));
  std::sort(pb.contributions.begin(), pb.contributions.end());
  const double u = 0.9;
  const double lo = pb.contributions.front() + (u - pb.contributions.back());
  for (int k = 0; k <= 100; ++k) pb.menu.push_back(lo + (u - lo) * k / 100.0);
  pb.menu.back() = u;
  AnnealSchedule s;
  s.seed = 11;
  auto a = anneal(pb, s);
  const double rho = *pearson(a.accuracies(pb), pb.contributions);
  return {rho >= 0.999, "pearson " + fmt("%.5f", rho) + " >= 0.999"};
}

Outcome width_monotonicity() {
  json j = {{"clients", 5}, {"rounds", 30}, {"local_iters", 5}, {"lr", 0.1}, {"lr_milestones", json::array()},
            {"partition", {{"kind", "homogeneous"}}}, {"data", desk_data()}, {"seed", 1}};
  auto c = config_from_json(j);
  auto p = detail::prepare(c);
  auto fed = run_alg1(p.clients, p.init, detail::fed_options(c), p.test);
  auto acc = bucket_profile(fed.model, p.test);
  const auto& w = fed.model.grid().buckets();
  const double rho = spearman(w, acc).value_or(0.0);
  const double gap = acc.back() - acc.front();
  return {rho >= 0.9 && gap >= 0.05,
          "spearman " + fmt("%.3f", rho) + " >= 0.9, acc(1.0)-acc(p_min) " + fmt("%.3f", gap) + " >= 0.05"};
}

Outcome end_to_end() {
  double rho = 0.0, cgs = 0.0, mcg = 0.0;
  bool ir = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto res = execute(dirichlet_pipeline(seed));
    rho += res.report->pearson.value_or(0.0) / 5.0;
    cgs += res.report->cgs / 5.0;
    mcg += res.report->mcg / 5.0;
    ir = ir && res.report->ir_rate == 1.0;
  }
  return {rho >= 0.9 && ir && cgs <= 0.05 && mcg > 0.0,
          "mean pearson " + fmt("%.3f", rho) + " >= 0.9, ir " + (ir ? "1.0" : "<1") + ", mean cgs " +
              fmt("%.4f", cgs) + " <= 0.05, mean mcg " + fmt("%.4f", mcg) + " > 0"};
}

Outcome training_time_rewards() {
  int hits = 0;
  double rho = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    json j = {{"mode", "training_time"}, {"clients", 5}, {"rounds", 30}, {"lr", 0.1},
              {"lr_milestones", json::array()}, {"noisy_clients", {2}}, {"partition", {{"kind", "homogeneous"}}},
              {"data", desk_data()}, {"seed", seed}};
    auto res = execute(config_from_json(j));
    bool lowest = true;
    for (const auto& row : res.allocation) {
      if (row.client_id == 2) continue;
      lowest = lowest && res.allocation[2].width < row.width && res.allocation[2].accuracy < row.accuracy;
    }
    hits += lowest ? 1 : 0;
    rho += res.report->pearson.value_or(0.0) / 5.0;
  }
  return {hits >= 4 && rho >= 0.8,
          "noisy client strictly lowest in " + std::to_string(hits) + "/5 (need 4), mean pearson " +
              fmt("%.3f", rho) + " >= 0.8"};
}

Outcome masked_reduction() {
  Rng rng = derive_rng(77, Stream::Init);
  SlimmableModel base(slimfair::testing::mlp(5, {12, 9}, 3, true), WidthGrid(0.25, 0.05), rng);
  std::vector<SlimmableModel> models;
  for (int i = 0; i < 100; ++i) {
    SlimmableModel m(base.architecture(), base.grid(), rng);
    for (auto& v : m.buffers()) v = 2.0 * uniform01(rng);
    models.push_back(std::move(m));
  }
  std::vector<MaskedUpdate> ups;
  for (const auto& m : models) ups.push_back({&m, 1.0});
  auto masked = masked_average(ups, base);
  auto plain = aggregate_mean(models);
  const bool same = masked.params() == plain.params() && masked.buffers() == plain.buffers();
  return {same, same ? "bitwise equal over 100 models" : "mismatch"};
}

Outcome formulas() {
  std::vector<std::string> bad;
  if (!ulp_equal(update_contribution(0.4, 0.8, 0.5, 1), 0.6)) bad.push_back("momentum");
  std::vector<double> c{0.2, 0.4};
  if (reward_widths(c, 0.25, 1.0) != std::vector<double>{0.5, 1.0}) bad.push_back("width map");
  std::vector<double> low{0.1, 1.0};
  if (reward_widths(low, 0.25, 1.0)[0] != 0.25) bad.push_back("width floor");
  std::vector<double> top{0.7, 0.7};
  if (reward_widths(top, 0.25, 1.0) != std::vector<double>{1.0, 1.0}) bad.push_back("width ceiling");
  AllocationProblem pb{{0.2, 0.4}, {0.5, 0.7}, 0.01};
  if (!ulp_equal(cost(Allocation{{0, 1}}, pb), -30.0)) bad.push_back("cost -30");
  AllocationProblem pb2{{0.0, 0.0}, {0.0, 1.0}, 1.0};
  if (!ulp_equal(cost(Allocation{{1, 0}}, pb2), -0.4)) bad.push_back("cost -0.4");
  auto r = participation_rate_contribution(50);
  if (r.front() != 0.51 || r.back() != 1.0) bad.push_back("participation");
  std::string detail = bad.empty() ? "momentum, width map, cost, participation" : "failed:";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty(), detail};
}

Outcome determinism() {
  const auto a = fs::temp_directory_path() / "slimfair_accept_a";
  const auto b = fs::temp_directory_path() / "slimfair_accept_b";
  fs::remove_all(a);
  fs::remove_all(b);
  auto c = dirichlet_pipeline(1);
  c.output_dir = a.string();
  run(c);
  c.output_dir = b.string();
  run(c);
  const bool jsonl = !slurp(a / "rounds.jsonl").empty() && slurp(a / "rounds.jsonl") == slurp(b / "rounds.jsonl");
  const bool csv = slurp(a / "allocation.csv") == slurp(b / "allocation.csv");
  fs::remove_all(a);
  fs::remove_all(b);
  return {jsonl && csv, std::string("jsonl ") + (jsonl ? "identical" : "differs") + ", csv " +
                            (csv ? "identical" : "differs")};
}

}  // namespace

int main() {
  criterion(1, "gradient correctness", 10.0, gradient_check);
  criterion(2, "annealer matches brute force", 30.0, annealer_vs_oracle);
  criterion(3, "perfect-correlation limit", 0.0, perfect_correlation);
  criterion(4, "width-accuracy monotonicity", 120.0, width_monotonicity);
  criterion(5, "end-to-end incentivization", 600.0, end_to_end);
  criterion(6, "training-time rewards", 0.0, training_time_rewards);
  criterion(7, "masked averaging reduction", 0.0, masked_reduction);
  criterion(8, "formula checks", 0.0, formulas);
  criterion(9, "determinism", 0.0, determinism);
  std::printf("%s: %d failure(s)\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
