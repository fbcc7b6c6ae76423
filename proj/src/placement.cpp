#include "flt/placement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "flt/error.hpp"
#include "json.hpp"

namespace flt {

const char* to_string(Side side) { return side == Side::kEdge ? "edge" : "cloud"; }

void validate(const PlacementProblem& p) {
  if (!(p.rate > 0.0) || !std::isfinite(p.rate)) throw InputError("placement rate must be positive");
  auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  if (!nonneg(p.bandwidth) || !nonneg(p.cap_cloud) || !nonneg(p.cap_edge) ||
      !nonneg(p.latency_weight)) {
    throw InputError("placement capacities, bandwidth and latency_weight must be nonnegative");
  }
  for (const auto& t : p.tasks) {
    if (!nonneg(t.comp_cloud) || !nonneg(t.comp_edge) || !nonneg(t.data_size)) {
      throw InputError("task " + std::to_string(t.id) + " has a negative quantity");
    }
  }
}

PlacementPlan evaluate_plan(const PlacementProblem& problem, const std::vector<Side>& assignment) {
  if (assignment.size() != problem.tasks.size()) {
    throw InputError("assignment covers " + std::to_string(assignment.size()) + " of " +
                     std::to_string(problem.tasks.size()) + " tasks");
  }
  PlacementPlan plan;
  plan.assignment = assignment;
  double cloud_load = 0.0, edge_load = 0.0, moved = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto& t = problem.tasks[i];
    if (assignment[i] == Side::kCloud) {
      plan.compute_cost += t.comp_cloud;
      plan.latency += 2.0 * t.data_size / problem.rate;
      cloud_load += t.comp_cloud;
      moved += t.data_size;
    } else {
      plan.compute_cost += t.comp_edge;
      edge_load += t.comp_edge;
    }
  }
  plan.objective = plan.compute_cost + problem.latency_weight * plan.latency;
  plan.violation = std::max(0.0, cloud_load - problem.cap_cloud) +
                   std::max(0.0, edge_load - problem.cap_edge) +
                   std::max(0.0, moved - problem.bandwidth);
  plan.feasible = plan.violation == 0.0;
  return plan;
}

namespace {

std::size_t edge_count(const std::vector<Side>& a) {
  return static_cast<std::size_t>(std::count(a.begin(), a.end(), Side::kEdge));
}

// True if `a` should replace `best` among feasible plans.
bool better_feasible(const PlacementPlan& a, const PlacementPlan& best) {
  if (a.objective != best.objective) return a.objective < best.objective;
  const auto ea = edge_count(a.assignment), eb = edge_count(best.assignment);
  if (ea != eb) return ea > eb;
  return a.assignment < best.assignment;
}

bool better_infeasible(const PlacementPlan& a, const PlacementPlan& best) {
  if (a.violation != best.violation) return a.violation < best.violation;
  return better_feasible(a, best);
}

}  // namespace

PlacementPlan solve_exact(const PlacementProblem& problem) {
  validate(problem);
  const std::size_t n = problem.tasks.size();
  if (n > 20) throw InputError("solve_exact handles at most 20 tasks");
  std::optional<PlacementPlan> best_feasible, best_any;
  std::vector<Side> a(n, Side::kEdge);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    // Task 0 is the most significant bit, so masks run in lexicographic order.
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = (mask >> (n - 1 - i)) & 1 ? Side::kCloud : Side::kEdge;
    }
    auto plan = evaluate_plan(problem, a);
    if (plan.feasible) {
      if (!best_feasible || better_feasible(plan, *best_feasible)) best_feasible = plan;
    } else if (!best_feasible) {
      if (!best_any || better_infeasible(plan, *best_any)) best_any = std::move(plan);
    }
  }
  return best_feasible ? *best_feasible : *best_any;
}

PlacementPlan solve_greedy(const PlacementProblem& problem) {
  validate(problem);
  const std::size_t n = problem.tasks.size();
  auto cloud_total = [&](const PlacementTask& t) {
    return t.comp_cloud + problem.latency_weight * 2.0 * t.data_size / problem.rate;
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& tx = problem.tasks[x];
    const auto& ty = problem.tasks[y];
    return std::abs(tx.comp_edge - cloud_total(tx)) > std::abs(ty.comp_edge - cloud_total(ty));
  });
  std::vector<Side> a(n, Side::kEdge);
  double cloud_load = 0.0, edge_load = 0.0, moved = 0.0;
  for (std::size_t i : order) {
    const auto& t = problem.tasks[i];
    const bool cloud_fits = cloud_load + t.comp_cloud <= problem.cap_cloud &&
                            moved + t.data_size <= problem.bandwidth;
    const bool edge_fits = edge_load + t.comp_edge <= problem.cap_edge;
    const Side cheaper = t.comp_edge <= cloud_total(t) ? Side::kEdge : Side::kCloud;
    Side pick = cheaper;
    if (cheaper == Side::kEdge && !edge_fits && cloud_fits) pick = Side::kCloud;
    if (cheaper == Side::kCloud && !cloud_fits && edge_fits) pick = Side::kEdge;
    a[i] = pick;
    if (pick == Side::kCloud) {
      cloud_load += t.comp_cloud;
      moved += t.data_size;
    } else {
      edge_load += t.comp_edge;
    }
  }
  return evaluate_plan(problem, a);
}

namespace {

using nlohmann::json;

PlacementProblem problem_from_json(const json& j) {
  PlacementProblem p;
  p.rate = j.at("rate").get<double>();
  p.bandwidth = j.at("bandwidth").get<double>();
  p.cap_cloud = j.at("cap_cloud").get<double>();
  p.cap_edge = j.at("cap_edge").get<double>();
  p.latency_weight = j.value("latency_weight", 1.0);
  int next_id = 0;
  for (const auto& t : j.at("tasks")) {
    PlacementTask task;
    task.id = t.value("id", next_id);
    task.comp_cloud = t.at("comp_cloud").get<double>();
    task.comp_edge = t.at("comp_edge").get<double>();
    task.data_size = t.at("data_size").get<double>();
    p.tasks.push_back(task);
    next_id = task.id + 1;
  }
  validate(p);
  return p;
}

}  // namespace

PlacementProblem parse_placement_problem(const std::string& text) {
  try {
    return problem_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw InputError(std::string("placement instance: ") + e.what());
  }
}

PlacementProblem load_placement_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_placement_problem(ss.str());
}

std::string placement_plan_to_json(const PlacementProblem& problem, const PlacementPlan& plan) {
  json j;
  j["feasible"] = plan.feasible;
  j["objective"] = plan.objective;
  j["compute_cost"] = plan.compute_cost;
  j["latency"] = plan.latency;
  j["latency_weight"] = problem.latency_weight;
  j["violation"] = plan.violation;
  j["assignment"] = json::array();
  for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
    j["assignment"].push_back({{"task", problem.tasks[i].id}, {"side", to_string(plan.assignment[i])}});
  }
  return j.dump(2);
}

void save_placement_plan(const PlacementProblem& problem, const PlacementPlan& plan,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << placement_plan_to_json(problem, plan) << '\n';
}

}  // namespace flt
