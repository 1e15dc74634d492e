#pragma once

// Shared fixtures: instance builders and structural audits used across the
// test binaries.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mht/instance.hpp"
#include "mht/mcts.hpp"
#include "mht/routing.hpp"

namespace fixtures {

inline std::string data_path(const std::string& name) {
  return std::string(MHT_DATA_DIR) + "/" + name;
}

inline mht::PointCloud eil51() { return mht::load_tsplib_file(data_path("eil51.tsp")); }

/// First 13 eil51 points: the 6-task, 2-robot desk-scale instance.
inline mht::PointCloud desk_cloud() {
  mht::PointCloud cloud = eil51();
  cloud.points.resize(13);
  cloud.name = "eil51-first13";
  return cloud;
}

inline mht::Fleet two_robot_fleet(double battery_kj = 110.0, double capacity = 10.0) {
  mht::Fleet fleet;
  fleet.types.push_back({1, battery_kj, capacity});
  fleet.robots.push_back({1, 1});
  fleet.robots.push_back({2, 1});
  return fleet;
}

inline mht::Instance desk_instance(double battery_kj = 110.0, double capacity = 10.0) {
  const std::vector<double> masses(6, 1.0);
  return mht::derive_instance(desk_cloud(), two_robot_fleet(battery_kj, capacity), masses);
}

/// Five points whose centroid is the origin; points 1..4 are equidistant from
/// it, so the sorted order [5, 1, 2, 3, 4] is forced by the id tie-break.
inline mht::PointCloud tie_cloud() {
  mht::PointCloud cloud;
  cloud.name = "tie5";
  cloud.points = {{1, 1.0, 0.0}, {2, 0.0, 1.0}, {3, -1.0, 0.0}, {4, 0.0, -1.0}, {5, 0.0, 0.0}};
  return cloud;
}

/// Direct instance assembly from explicit geometry: `stops` holds the depot
/// followed by n pickups then n deliveries (2n+1 points). One energy matrix
/// per fleet type.
inline mht::Instance build_instance(const std::vector<mht::Point>& stops,
                                    const std::vector<double>& masses, mht::Fleet fleet,
                                    const std::string& name = "synthetic") {
  if (stops.size() % 2 != 1 || stops.size() < 3)
    throw std::invalid_argument("build_instance: need depot + n pickup/delivery pairs");
  const int n = static_cast<int>(stops.size()) / 2;
  if (masses.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("build_instance: one mass per task");
  mht::Instance inst;
  inst.name = name;
  inst.n = n;
  inst.locations = stops;
  inst.locations.push_back(stops[0]);  // end depot co-located with the start
  for (int i = 0; i < n; ++i)
    inst.tasks.push_back({i + 1, i + 1, i + 1 + n, masses[static_cast<std::size_t>(i)]});
  inst.fleet = std::move(fleet);
  for (const auto& type : inst.fleet.types)
    inst.energy.push_back({true, mht::energy_matrix(inst.locations, type.battery_kj)});
  mht::PointCloud cloud;
  cloud.name = name;
  cloud.points = stops;
  inst.source_hash = mht::cloud_hash(cloud);
  inst.validate();
  return inst;
}

/// Tree statistics audit: visit/cost sums must be conserved along edges
/// (a parent accumulates everything its descendants received, plus its own
/// first-visit batch), and the root must account for every evaluation.
inline void audit_tree(const mht::SearchTree& tree, std::uint64_t total_evaluations) {
  if (tree.nodes.empty()) throw std::logic_error("audit_tree: empty tree");
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    std::uint64_t child_visits = 0;
    double child_cost = 0.0;
    for (int c : node.children) {
      child_visits += tree.nodes[static_cast<std::size_t>(c)].visits;
      child_cost += tree.nodes[static_cast<std::size_t>(c)].cost_sum;
    }
    if (node.visits < child_visits)
      throw std::logic_error("audit_tree: node " + std::to_string(id) +
                             " has fewer visits than its children");
    if (node.cost_sum < child_cost - 1e-6 * std::max(1.0, std::abs(child_cost)))
      throw std::logic_error("audit_tree: node " + std::to_string(id) +
                             " has less accumulated cost than its children");
  }
  if (tree.nodes[0].visits != total_evaluations)
    throw std::logic_error("audit_tree: root visits " + std::to_string(tree.nodes[0].visits) +
                           " != evaluations " + std::to_string(total_evaluations));
}

/// Full route-invariant audit of an incumbent against its instance. Throws on
/// any violation; returns the replayed total cost.
inline double audit_incumbent(const mht::Incumbent& inc, const mht::Instance& inst) {
  if (inc.assignment.size() != static_cast<std::size_t>(inst.n))
    throw std::logic_error("audit_incumbent: assignment length mismatch");
  if (inc.routes.size() != inst.fleet.size())
    throw std::logic_error("audit_incumbent: route count mismatch");
  std::vector<std::vector<int>> per_robot(inst.fleet.size());
  for (int i = 0; i < inst.n; ++i) {
    const int r = inc.assignment[static_cast<std::size_t>(i)];
    if (r < 0 || r >= static_cast<int>(inst.fleet.size()))
      throw std::logic_error("audit_incumbent: robot index out of range");
    per_robot[static_cast<std::size_t>(r)].push_back(i + 1);
  }
  double total = 0.0;
  for (std::size_t r = 0; r < inst.fleet.size(); ++r)
    total += mht::validate_route(inc.routes[r], inst, static_cast<int>(r), per_robot[r]);
  if (std::abs(total - inc.cost_kj) > 1e-9 * std::max(1.0, std::abs(total)))
    throw std::logic_error("audit_incumbent: recorded cost does not match replay");
  return total;
}

}  // namespace fixtures
