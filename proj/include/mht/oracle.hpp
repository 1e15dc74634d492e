#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mht/instance.hpp"
#include "mht/mcts.hpp"
#include "mht/perturb.hpp"
#include "mht/routing.hpp"
#include "mht/util.hpp"

namespace mht {

struct OracleResult {
  struct Row {
    Assignment assignment;
    double cost_kj = kInfCost;
    bool feasible = false;
  };
  std::vector<Row> table;              // lexicographic enumeration order
  std::vector<Assignment> optimal;     // all argmin ties, enumeration order
  double optimal_cost = kInfCost;
  bool any_feasible = false;
  std::uint64_t routing_expansions = 0;
};

/// Enumerates every |fleet|^n assignment lexicographically, evaluates each
/// with uncapped route_bnb, and returns the full table plus the exact-tie
/// argmin set. Refuses when the enumeration exceeds `cap`. `safety_expansions`
/// guards each route call: exceeding it aborts (ground truth must be exact,
/// never a bound).
inline OracleResult exhaustive_solve(const Instance& inst, std::uint64_t cap = 1ull << 20,
                                     std::uint64_t safety_expansions = 1ull << 34) {
  inst.validate();
  const std::uint64_t fleet = inst.fleet.size();
  std::uint64_t total = 1;
  for (int i = 0; i < inst.n; ++i) {
    if (total > cap / fleet + 1) {
      total = cap + 1;
      break;
    }
    total *= fleet;
  }
  if (total > cap)
    throw ValidationError("exhaustive_solve: " + std::to_string(fleet) + "^" +
                          std::to_string(inst.n) + " assignments exceed the cap of " +
                          std::to_string(cap) + " evaluations");

  RoutingBudget guard;
  guard.max_expansions = safety_expansions;

  OracleResult res;
  res.table.reserve(static_cast<std::size_t>(total));
  Assignment a(static_cast<std::size_t>(inst.n), 0);
  while (true) {
    Evaluation ev = evaluate_assignment(a, inst, guard);
    for (const RouteResult& rr : ev.routes) {
      if (rr.budget_exhausted)
        throw ValidationError("exhaustive_solve: a route exceeded the safety expansion cap; "
                              "refusing to report a non-exact oracle");
      res.routing_expansions += rr.expansions;
    }
    res.table.push_back({a, ev.feasible ? ev.cost_kj : kInfCost, ev.feasible});
    if (ev.feasible) {
      res.any_feasible = true;
      res.optimal_cost = std::min(res.optimal_cost, ev.cost_kj);
    }
    // lexicographic increment, least-significant position last
    int pos = inst.n - 1;
    while (pos >= 0) {
      if (++a[static_cast<std::size_t>(pos)] < static_cast<int>(fleet)) break;
      a[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  for (const auto& row : res.table)
    if (row.feasible && row.cost_kj == res.optimal_cost) res.optimal.push_back(row.assignment);
  return res;
}

// ---------------------------------------------------------------------------
// decentralized baseline

/// Which robots a perturbation touches: battery/payload name one robot;
/// spatial with xi>0 moves every location, so the whole fleet; an energy
/// override affects the robots of that type whose nominal routes traverse any
/// changed edge. Returns robot indices, ascending.
inline std::vector<int> affected_robots(const Perturbation& pert, const Incumbent& nominal,
                                        const Instance& nominal_instance) {
  std::vector<int> out;
  const int fleet = static_cast<int>(nominal_instance.fleet.size());

  struct V {
    std::vector<int>& out;
    const Incumbent& nominal;
    const Instance& inst;
    int fleet;

    void operator()(const BatteryPerturbation& p) const {
      out.push_back(inst.fleet.robot_index(p.robot_id));
    }
    void operator()(const PayloadPerturbation& p) const {
      out.push_back(inst.fleet.robot_index(p.robot_id));
    }
    void operator()(const SpatialPerturbation& p) const {
      if (p.xi > 0.0)
        for (int r = 0; r < fleet; ++r) out.push_back(r);
    }
    void operator()(const EnergyOverride& p) const {
      const int tidx = inst.fleet.type_index(p.type_id);
      const std::size_t m = static_cast<std::size_t>(inst.node_count());
      if (p.de.size() != m * m)
        throw ValidationError("affected_robots: energy override has wrong shape");
      for (int r = 0; r < fleet; ++r) {
        if (inst.fleet.type_index(inst.fleet.robots[static_cast<std::size_t>(r)].type_id) != tidx)
          continue;
        if (static_cast<std::size_t>(r) >= nominal.routes.size()) continue;
        const Route& route = nominal.routes[static_cast<std::size_t>(r)];
        bool touched = false;
        for (std::size_t k = 0; !touched && k + 1 < route.stops.size(); ++k) {
          const std::size_t i = static_cast<std::size_t>(route.stops[k]);
          const std::size_t j = static_cast<std::size_t>(route.stops[k + 1]);
          // a changed leg, depot detour included, re-prices this route
          if (p.de[i * m + j] != inst.energy[static_cast<std::size_t>(tidx)].de[i * m + j] ||
              p.de[i * m] != inst.energy[static_cast<std::size_t>(tidx)].de[i * m] ||
              p.de[j] != inst.energy[static_cast<std::size_t>(tidx)].de[j])
            touched = true;
        }
        if (touched) out.push_back(r);
      }
    }
  };
  std::visit(V{out, nominal, nominal_instance, fleet}, pert);
  std::sort(out.begin(), out.end());
  return out;
}

struct AdaptResult {
  bool feasible = false;
  std::optional<Incumbent> incumbent;  // present iff feasible
  std::vector<int> rerouted;           // robot indices actually rerouted
  std::uint64_t routing_calls = 0;     // one per affected robot
  std::string diagnostic;              // set when infeasible
};

/// Decentralized recovery: keep the nominal assignment; reroute only the
/// affected robots (one uncapped-by-default B&B call each); revalidate — not
/// re-optimize — every unaffected robot's nominal route under the perturbed
/// instance. Infeasibility is reported, never repaired.
inline AdaptResult decentralized_adapt(const Incumbent& nominal, const Instance& perturbed,
                                       const std::vector<int>& affected,
                                       const RoutingBudget& routing = {}) {
  const int fleet = static_cast<int>(perturbed.fleet.size());
  if (nominal.assignment.size() != static_cast<std::size_t>(perturbed.n))
    throw ValidationError("decentralized_adapt: nominal assignment length mismatch");
  if (nominal.routes.size() != static_cast<std::size_t>(fleet))
    throw ValidationError("decentralized_adapt: nominal incumbent missing per-robot routes");

  std::vector<std::vector<int>> per_robot(static_cast<std::size_t>(fleet));
  for (int i = 0; i < perturbed.n; ++i) {
    const int r = nominal.assignment[static_cast<std::size_t>(i)];
    if (r < 0 || r >= fleet)
      throw ValidationError("decentralized_adapt: nominal assignment references a missing robot");
    per_robot[static_cast<std::size_t>(r)].push_back(i + 1);
  }

  AdaptResult res;
  Incumbent out;
  out.assignment = nominal.assignment;
  out.routes.resize(static_cast<std::size_t>(fleet));
  double total = 0.0;

  for (int r = 0; r < fleet; ++r) {
    const bool is_affected = std::find(affected.begin(), affected.end(), r) != affected.end();
    if (is_affected) {
      ++res.routing_calls;
      RouteResult rr = route_bnb(perturbed, per_robot[static_cast<std::size_t>(r)], r, routing);
      if (!rr.feasible) {
        res.diagnostic = "robot " +
                         std::to_string(perturbed.fleet.robots[static_cast<std::size_t>(r)].id) +
                         " cannot be rerouted under the perturbation: " + rr.diagnostic;
        return res;
      }
      res.rerouted.push_back(r);
      out.routes[static_cast<std::size_t>(r)] = rr.route;
      total += rr.cost_kj;
    } else {
      const Route& keep = nominal.routes[static_cast<std::size_t>(r)];
      try {
        total += validate_route(keep, perturbed, r, per_robot[static_cast<std::size_t>(r)]);
      } catch (const ValidationError& e) {
        res.diagnostic = "robot " +
                         std::to_string(perturbed.fleet.robots[static_cast<std::size_t>(r)].id) +
                         "'s nominal route is invalid under the perturbation: " + e.what();
        return res;
      }
      out.routes[static_cast<std::size_t>(r)] = keep;
    }
  }

  out.cost_kj = total;
  res.feasible = true;
  res.incumbent = std::move(out);
  return res;
}

}  // namespace mht
