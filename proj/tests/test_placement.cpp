#include <random>

#include "doctest.h"
#include "flt/error.hpp"
#include "flt/placement.hpp"
#include "oracles.hpp"

using namespace flt;

namespace {

PlacementProblem worked_example() {
  PlacementProblem p;
  p.tasks = {{1, 3, 4, 10}, {2, 5, 9, 10}};
  p.rate = 10;
  p.bandwidth = 1000;
  p.cap_cloud = 1000;
  p.cap_edge = 1000;
  return p;
}

PlacementProblem random_problem(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> cost(0.0, 10.0), data(0.0, 20.0);
  PlacementProblem p;
  for (std::size_t i = 0; i < n; ++i) {
    p.tasks.push_back({static_cast<int>(i), cost(rng), cost(rng), data(rng)});
  }
  p.rate = std::uniform_real_distribution<double>(1.0, 20.0)(rng);
  const double scale = static_cast<double>(n);
  p.cap_cloud = std::uniform_real_distribution<double>(0.0, 6.0 * scale)(rng);
  p.cap_edge = std::uniform_real_distribution<double>(0.0, 6.0 * scale)(rng);
  p.bandwidth = std::uniform_real_distribution<double>(0.0, 12.0 * scale)(rng);
  p.latency_weight = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
  return p;
}

}  // namespace

TEST_SUITE("placement") {
  TEST_CASE("evaluate_plan examples") {
    PlacementProblem empty;
    const auto e = evaluate_plan(empty, {});
    CHECK(e.objective == 0.0);
    CHECK(e.feasible);

    PlacementProblem one;
    one.tasks = {{1, 3, 4, 10}};
    one.rate = 10;
    one.bandwidth = one.cap_cloud = one.cap_edge = 100;
    CHECK(evaluate_plan(one, {Side::kCloud}).objective == 5.0);
    CHECK(evaluate_plan(one, {Side::kCloud}).latency == 2.0);
    CHECK(evaluate_plan(one, {Side::kEdge}).objective == 4.0);
    CHECK(evaluate_plan(one, {Side::kEdge}).latency == 0.0);
    CHECK_THROWS_AS(evaluate_plan(one, {}), InputError);
  }

  TEST_CASE("worked two-task example") {
    const auto plan = solve_exact(worked_example());
    CHECK(plan.assignment == std::vector<Side>{Side::kEdge, Side::kCloud});
    CHECK(plan.objective == 11.0);
    CHECK(plan.feasible);
    CHECK(evaluate_plan(worked_example(), {Side::kEdge, Side::kCloud}).objective == 11.0);
  }

  TEST_CASE("cap_edge 0 forces cloud; oversized task is infeasible") {
    auto p = worked_example();
    p.cap_edge = 0;
    const auto plan = solve_exact(p);
    CHECK(plan.assignment == std::vector<Side>{Side::kCloud, Side::kCloud});
    CHECK(plan.feasible);

    PlacementProblem big;
    big.tasks = {{1, 50, 50, 5}};
    big.cap_cloud = big.cap_edge = 10;
    big.bandwidth = 100;
    const auto b = solve_exact(big);
    CHECK_FALSE(b.feasible);
    CHECK(b.violation > 0.0);
  }

  TEST_CASE("ties prefer edge") {
    PlacementProblem p;
    p.tasks = {{1, 2, 4, 10}};  // cloud 2 + 2 latency == edge 4
    p.rate = 10;
    p.bandwidth = p.cap_cloud = p.cap_edge = 100;
    CHECK(solve_exact(p).assignment == std::vector<Side>{Side::kEdge});
  }

  TEST_CASE("exact matches brute force on random instances") {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 200; ++t) {
      const auto p = random_problem(rng, 1 + rng() % 12);
      const auto plan = solve_exact(p);
      const auto ref = oracle::brute_force_placement(p);
      CHECK(plan.feasible == ref.feasible);
      if (ref.feasible) {
        CHECK(plan.objective == ref.objective);
        CHECK(plan.assignment == ref.assignment);
      }
    }
  }

  TEST_CASE("greedy: complete, never better than exact, exact on slack separable instances") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
      const auto p = random_problem(rng, 1 + rng() % 10);
      const auto g = solve_greedy(p);
      CHECK(g.assignment.size() == p.tasks.size());
      const auto e = solve_exact(p);
      if (e.feasible && g.feasible) CHECK(g.objective >= e.objective);
    }
    for (int t = 0; t < 50; ++t) {
      auto p = random_problem(rng, 1 + rng() % 10);
      p.cap_cloud = p.cap_edge = p.bandwidth = 1e9;
      CHECK(solve_greedy(p).objective == solve_exact(p).objective);
    }
    PlacementProblem empty;
    CHECK(solve_greedy(empty).assignment.empty());
  }

  TEST_CASE("objective is additive over disjoint task sets") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 100; ++t) {
      auto p = random_problem(rng, 2 + rng() % 8);
      std::vector<Side> a;
      for (std::size_t i = 0; i < p.tasks.size(); ++i) a.push_back(rng() % 2 ? Side::kCloud : Side::kEdge);
      const std::size_t cut = 1 + rng() % (p.tasks.size() - 1);
      PlacementProblem left = p, right = p;
      left.tasks.assign(p.tasks.begin(), p.tasks.begin() + static_cast<long>(cut));
      right.tasks.assign(p.tasks.begin() + static_cast<long>(cut), p.tasks.end());
      const std::vector<Side> la(a.begin(), a.begin() + static_cast<long>(cut));
      const std::vector<Side> ra(a.begin() + static_cast<long>(cut), a.end());
      CHECK(evaluate_plan(p, a).objective ==
            doctest::Approx(evaluate_plan(left, la).objective + evaluate_plan(right, ra).objective)
                .epsilon(1e-12));
    }
  }

  TEST_CASE("validation and JSON") {
    auto p = worked_example();
    p.rate = 0;
    CHECK_THROWS_AS(validate(p), InputError);
    p = worked_example();
    p.tasks[0].data_size = -1;
    CHECK_THROWS_AS(validate(p), InputError);

    const auto parsed = parse_placement_problem(
        R"({"rate": 10, "bandwidth": 1000, "cap_cloud": 1000, "cap_edge": 1000,
            "tasks": [{"id": 1, "comp_cloud": 3, "comp_edge": 4, "data_size": 10},
                      {"id": 2, "comp_cloud": 5, "comp_edge": 9, "data_size": 10}]})");
    CHECK(parsed == worked_example());
    const auto text = placement_plan_to_json(parsed, solve_exact(parsed));
    CHECK(text.find("\"objective\"") != std::string::npos);
    CHECK_THROWS(parse_placement_problem("{\"tasks\": 3}"));
  }
}
