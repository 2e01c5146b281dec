#include <gtest/gtest.h>

#include <sstream>

#include "slimfair/allocator.hpp"
#include "slimfair/metrics.hpp"

using namespace slimfair;

namespace {

AllocationProblem problem(std::vector<double> c, std::vector<double> menu, double eps = kDefaultEpsilon) {
  AllocationProblem pb;
  pb.contributions = std::move(c);
  pb.menu = std::move(menu);
  pb.epsilon = eps;
  return pb;
}

std::vector<double> evenly(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace

TEST(Cost, ConstantGains) {
  auto pb = problem({0.2, 0.4}, {0.5, 0.7}, 0.01);
  Allocation a{{0, 1}};
  EXPECT_NEAR(cost(a, pb), -30.0, 1e-12);
}

TEST(Cost, UnequalGains) {
  auto pb = problem({0.0, 0.0}, {0.0, 1.0}, 1.0);
  EXPECT_DOUBLE_EQ(cost(Allocation{{1, 0}}, pb), -0.4);
}

TEST(Cost, ShiftingAllAccuraciesUpLowersCost) {
  const std::vector<double> g{0.1, 0.3, 0.2};
  std::vector<double> shifted = g;
  for (auto& x : shifted) x += 0.05;
  EXPECT_LT(cost_of_gains(shifted, 1e-3), cost_of_gains(g, 1e-3));
}

TEST(Ir, Boundaries) {
  EXPECT_TRUE(is_ir(std::vector<double>{0.0, 0.0}));
  EXPECT_TRUE(is_ir(std::vector<double>{0.1, 0.1}));
  EXPECT_FALSE(is_ir(std::vector<double>{0.1, -1e-12}));
}

TEST(BruteForce, SingleClientTakesTop) {
  auto pb = problem({0.5}, {0.6, 0.9});
  EXPECT_EQ(brute_force(pb).index, (std::vector<std::size_t>{1}));
}

TEST(BruteForce, TwoClientsHandEnumerated) {
  auto pb = problem({0.3, 0.6}, {0.6, 0.7, 1.0});
  auto a = brute_force(pb);
  EXPECT_EQ(a.index, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(cost(a, pb), -400.0, 1e-9);
}

TEST(BruteForce, FourClientsEvenMenu) {
  auto pb = problem({0.1, 0.2, 0.3, 0.4}, evenly(0.4, 1.0, 6));
  auto a = brute_force(pb);
  EXPECT_EQ(a.index, (std::vector<std::size_t>{2, 3, 4, 5}));
  EXPECT_NEAR(cost(a, pb), -380.0, 1e-9);
}

TEST(BruteForce, CapacityAndFeasibility) {
  auto big = problem(std::vector<double>(8, 0.1), evenly(0.2, 1.0, 10));
  EXPECT_THROW(brute_force(big), CapacityError);
  auto infeasible = problem({0.2, 0.95}, {0.5, 0.9});
  EXPECT_THROW(brute_force(infeasible), FeasibilityError);
  EXPECT_THROW(anneal(infeasible, {}), FeasibilityError);
}

TEST(Problem, ValidatesOrdering) {
  EXPECT_THROW(problem({0.4, 0.2}, {0.5, 1.0}).validate(), ArgumentError);
  EXPECT_THROW(problem({0.2}, {0.5, 0.5}).validate(), ArgumentError);
  EXPECT_THROW(problem({}, {0.5}).validate(), ArgumentError);
}

TEST(Problem, FeasibilityWarning) {
  EXPECT_TRUE(problem({0.1, 0.5}, {0.7, 0.8}).feasibility_warning());
  EXPECT_FALSE(problem({0.1, 0.5}, {0.3, 0.8}).feasibility_warning());
}

TEST(Anneal, SingletonMenu) {
  auto pb = problem({0.1, 0.3}, {0.8});
  auto a = anneal(pb, {});
  EXPECT_EQ(a.index, (std::vector<std::size_t>{0, 0}));
}

TEST(Anneal, MatchesBruteForceOnEvenMenu) {
  auto pb = problem({0.1, 0.2, 0.3, 0.4}, evenly(0.4, 1.0, 6));
  AnnealSchedule s;
  s.steps = 20000;
  s.seed = 3;
  EXPECT_EQ(cost(anneal(pb, s), pb), cost(brute_force(pb), pb));
}

TEST(Anneal, SameSeedSameResult) {
  auto pb = problem({0.15, 0.2, 0.33, 0.5, 0.61}, evenly(0.55, 0.9, 12));
  AnnealSchedule s;
  s.seed = 42;
  EXPECT_EQ(anneal(pb, s), anneal(pb, s));
}

TEST(Anneal, TopContributorGetsBestModel) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = derive_rng(seed, Stream::Anneal, 99);
    std::vector<double> c(5);
    for (auto& x : c) x = 0.2 + 0.5 * uniform01(rng);
    std::sort(c.begin(), c.end());
    auto pb = problem(c, evenly(0.3, 0.95, 8));
    AnnealSchedule s;
    s.seed = seed;
    auto a = anneal(pb, s);
    EXPECT_EQ(a.index.back(), pb.menu.size() - 1);
    EXPECT_TRUE(is_ir(a, pb));
  }
}

TEST(Anneal, FineMenuTracksConstantShift) {
  // Menu floor l = c_1 + (u - c_N) so the constant-gain allocation exists.
  const std::vector<double> c{0.31, 0.4, 0.52, 0.58, 0.66};
  const double u = 0.9;
  const double lo = c.front() + (u - c.back());
  auto pb = problem(c, evenly(lo, u, 101));
  AnnealSchedule s;
  s.seed = 5;
  auto a = anneal(pb, s);
  auto acc = a.accuracies(pb);
  EXPECT_EQ(acc.back(), u);
  EXPECT_TRUE(std::is_sorted(acc.begin(), acc.end()));
  EXPECT_GE(*pearson(acc, c), 0.999);
}

TEST(AllocateUnsorted, RestoresClientOrder) {
  std::vector<double> c{0.5, 0.1, 0.3};
  std::vector<double> menu{0.5, 0.6, 0.7, 0.8, 0.9};
  auto idx = allocate_unsorted(c, menu, kDefaultEpsilon, {});
  EXPECT_EQ(idx[0], 4u);
  EXPECT_LE(idx[1], idx[2]);
  EXPECT_LE(idx[2], idx[0]);
}

TEST(Profile, MenuKeepsRunningMaxRecords) {
  WidthProfile p{{0.25, 0.5, 0.75, 1.0}, {0.6, 0.58, 0.7, 0.7}};
  auto m = menu_from_profile(p);
  EXPECT_EQ(m.widths, (std::vector<double>{0.25, 0.75}));
  EXPECT_EQ(m.accuracies, (std::vector<double>{0.6, 0.7}));
}

TEST(Profile, AccuracyToWidth) {
  WidthProfile p{{0.25, 0.5, 0.75, 1.0}, {0.6, 0.65, 0.7, 0.8}};
  std::vector<double> top{0.8};
  EXPECT_EQ(accuracy_to_width(top, p), (std::vector<double>{1.0}));
  std::vector<double> floor{0.1};
  EXPECT_EQ(accuracy_to_width(floor, p), (std::vector<double>{0.25}));
  EXPECT_EQ(accuracy_to_width(p.accuracies, p), p.widths);
  std::vector<double> beyond{0.95};
  EXPECT_EQ(accuracy_to_width(beyond, p), (std::vector<double>{1.0}));
}

TEST(WidthAsReward, EqualContributionsGetFullModel) {
  WidthGrid g(0.25, 0.05);
  std::vector<double> c{0.4, 0.4, 0.4};
  for (double w : width_as_reward(c, g, kDefaultEpsilon, {})) EXPECT_EQ(w, 1.0);
}

TEST(WidthAsReward, DistinctContributionsSortedTopGetsFull) {
  WidthGrid g(0.25, 0.01);
  std::vector<double> c{0.3, 0.9, 0.5, 0.7};
  AnnealSchedule s;
  s.seed = 1;
  auto w = width_as_reward(c, g, kDefaultEpsilon, s);
  EXPECT_EQ(w[1], 1.0);
  EXPECT_LT(w[0], w[2]);
  EXPECT_LT(w[2], w[3]);
  EXPECT_LT(w[3], w[1]);
  EXPECT_GE(*pearson(w, c), 0.99);
}

TEST(WidthAsReward, ZeroContributionsThrow) {
  std::vector<double> c{0.0, 0.0};
  EXPECT_THROW(width_as_reward(c, WidthGrid(0.25, 0.05), kDefaultEpsilon, {}), DegenerateError);
}

TEST(Csv, HeaderAndShortestDoubles) {
  std::vector<AllocationRow> rows{{0, 0.1, 0.7, 0.5, 0.6}};
  std::ostringstream out;
  write_allocation_csv(out, rows);
  EXPECT_EQ(out.str(), "client_id,contribution,accuracy,width,gain\n0,0.1,0.7,0.5,0.6\n");
}

TEST(Temperature, LogarithmicSchedule) {
  EXPECT_DOUBLE_EQ(log_temperature(1, 2.0), 1.0 / std::log(3.0));
  EXPECT_GT(log_temperature(10, 2.0), log_temperature(100, 2.0));
}
