#pragma once

#include <string>
#include <vector>

namespace flt {

enum class Side { kEdge = 0, kCloud = 1 };
const char* to_string(Side side);

struct PlacementTask {
  int id = 0;
  double comp_cloud = 0.0;
  double comp_edge = 0.0;
  double data_size = 0.0;

  bool operator==(const PlacementTask&) const = default;
};

struct PlacementProblem {
  std::vector<PlacementTask> tasks;
  double rate = 1.0;       // data units per time unit
  double bandwidth = 0.0;  // cap on data moved to the cloud
  double cap_cloud = 0.0;
  double cap_edge = 0.0;
  double latency_weight = 1.0;

  bool operator==(const PlacementProblem&) const = default;
};

// Throws InputError on negative quantities or a non-positive rate.
void validate(const PlacementProblem& problem);

struct PlacementPlan {
  std::vector<Side> assignment;
  double objective = 0.0;
  double compute_cost = 0.0;
  double latency = 0.0;
  bool feasible = true;
  // Sum of the amounts by which each constraint is exceeded.
  double violation = 0.0;
};

// Only the chosen side's compute cost is charged; cloud-assigned tasks also
// pay 2 * data_size / rate of round-trip latency. Sums run in task order.
PlacementPlan evaluate_plan(const PlacementProblem& problem, const std::vector<Side>& assignment);

// Exhaustive search, at most 20 tasks. Among optimal plans prefers more edge
// assignments, then the lexicographically smallest assignment with edge before
// cloud. If nothing is feasible, returns the least-violating plan (ties by
// objective) with feasible = false.
PlacementPlan solve_exact(const PlacementProblem& problem);

// Tasks in descending |edge cost - cloud total cost| order, each placed on its
// cheaper side when capacity allows, else on the other side.
PlacementPlan solve_greedy(const PlacementProblem& problem);

PlacementProblem load_placement_problem(const std::string& path);
PlacementProblem parse_placement_problem(const std::string& json_text);
std::string placement_plan_to_json(const PlacementProblem& problem, const PlacementPlan& plan);
void save_placement_plan(const PlacementProblem& problem, const PlacementPlan& plan,
                         const std::string& path);

}  // namespace flt
