#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mht/instance.hpp"
#include "mht/util.hpp"

namespace mht {

constexpr double kInfCost = std::numeric_limits<double>::infinity();

/// One travel leg under the charging policy. A leg runs direct when the
/// remaining charge strictly survives it; otherwise the robot detours through
/// the depot for a full recharge (so z <= de triggers the detour, including
/// the boundary). Infeasible when the depot cannot be reached from the
/// current position or the post-recharge hop alone exceeds a full battery.
struct LegResult {
  bool feasible = false;
  bool recharged = false;
  double soc_after = 0.0;
  double energy_kj = 0.0;
};

inline LegResult leg_transition(double soc, int from, int to, std::span<const double> de,
                                int stride, double battery_kj) {
  const double direct = de[static_cast<std::size_t>(from) * static_cast<std::size_t>(stride) +
                           static_cast<std::size_t>(to)];
  if (soc - direct > 0.0) return {true, false, soc - direct, battery_kj * direct};
  const double to_depot = de[static_cast<std::size_t>(from) * static_cast<std::size_t>(stride)];
  const double from_depot = de[static_cast<std::size_t>(to)];
  if (to_depot > soc || from_depot > 1.0) return {};
  return {true, true, 1.0 - from_depot, battery_kj * (to_depot + from_depot)};
}

/// Mutable tour-construction state for one robot. `picked`/`delivered` are
/// bitmasks over the robot's assigned-task slots; together with the slot
/// masses they encode both the visited set and the carried commodities.
struct RobotState {
  int position = 0;
  double soc = 1.0;
  double payload = 0.0;
  std::uint32_t picked = 0;
  std::uint32_t delivered = 0;
  double accumulated_kj = 0.0;
};

/// One robot's routing subproblem over its assigned tasks (slot-indexed,
/// task ids sorted ascending for a canonical slot order).
struct RoutingProblem {
  const Instance* inst = nullptr;
  int robot_index = 0;
  int type_index = 0;
  double battery_kj = 0.0;
  double capacity = 0.0;
  int stride = 0;
  int end = 0;
  std::span<const double> de;
  std::vector<int> task_ids;
  std::vector<int> pickup;
  std::vector<int> delivery;
  std::vector<double> mass;

  std::size_t slots() const { return task_ids.size(); }
};

inline RoutingProblem make_routing_problem(const Instance& inst, std::span<const int> task_ids,
                                           int robot_index) {
  if (robot_index < 0 || robot_index >= static_cast<int>(inst.fleet.size()))
    throw ValidationError("make_routing_problem: robot index out of range");
  RoutingProblem p;
  p.inst = &inst;
  p.robot_index = robot_index;
  p.type_index = inst.fleet.type_index(inst.fleet.robots[static_cast<std::size_t>(robot_index)].type_id);
  const RobotType& ty = inst.fleet.types[static_cast<std::size_t>(p.type_index)];
  p.battery_kj = ty.battery_kj;
  p.capacity = ty.payload_cap;
  p.stride = inst.node_count();
  p.end = inst.end_depot();
  p.de = inst.energy[static_cast<std::size_t>(p.type_index)].de;
  p.task_ids.assign(task_ids.begin(), task_ids.end());
  std::sort(p.task_ids.begin(), p.task_ids.end());
  if (std::adjacent_find(p.task_ids.begin(), p.task_ids.end()) != p.task_ids.end())
    throw ValidationError("make_routing_problem: duplicate task in assignment");
  if (p.task_ids.size() > 32)
    throw ValidationError("make_routing_problem: more than 32 tasks on one robot");
  for (int id : p.task_ids) {
    if (id < 1 || id > inst.n) throw ValidationError("make_routing_problem: unknown task id " + std::to_string(id));
    const Task& t = inst.tasks[static_cast<std::size_t>(id - 1)];
    p.pickup.push_back(t.pickup);
    p.delivery.push_back(t.delivery);
    p.mass.push_back(t.mass);
  }
  return p;
}

/// Unvisited assigned nodes reachable in one feasible leg: pickups whose mass
/// still fits, and deliveries whose pickup already happened. Ascending node
/// order.
inline std::vector<int> feasible_successors(const RoutingProblem& p, const RobotState& st) {
  std::vector<int> out;
  for (std::size_t s = 0; s < p.slots(); ++s) {
    const std::uint32_t bit = 1u << s;
    if (!(st.picked & bit)) {
      if (st.payload + p.mass[s] <= p.capacity &&
          leg_transition(st.soc, st.position, p.pickup[s], p.de, p.stride, p.battery_kj).feasible)
        out.push_back(p.pickup[s]);
    } else if (!(st.delivered & bit)) {
      if (leg_transition(st.soc, st.position, p.delivery[s], p.de, p.stride, p.battery_kj).feasible)
        out.push_back(p.delivery[s]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// A closed tour. `stops` lists task nodes only (recharge detours are not
/// stops); `charge_events[k]` marks leg stops[k] -> stops[k+1] as running
/// through the depot. The canonical empty route is {0, end} with no legs.
struct Route {
  std::vector<int> stops;
  std::vector<int> charge_events;
  std::vector<double> leg_energy_kj;
  double total_energy_kj = 0.0;

  bool empty() const { return stops.size() == 2 && leg_energy_kj.empty(); }
};

struct RoutingBudget {
  std::optional<double> wall_seconds;
  std::optional<std::uint64_t> max_expansions;

  bool uncapped() const { return !wall_seconds && !max_expansions; }
};

/// Test/diagnostic knobs; defaults give the production search.
struct RoutingOptions {
  bool prune = true;           // incumbent bound + admissible remaining-cost bound
  bool stranded_guard = true;  // skip successors with no onward move and no way home
  std::vector<double>* incumbent_log = nullptr;  // each improvement, in order
};

struct RouteResult {
  bool feasible = false;
  Route route;
  double cost_kj = kInfCost;
  std::uint64_t expansions = 0;
  bool budget_exhausted = false;
  bool proven_optimal = false;
  std::string diagnostic;  // set when infeasible
};

namespace detail {

class RouteSearch {
 public:
  RouteSearch(const RoutingProblem& p, const RoutingBudget& budget, const RoutingOptions& opt)
      : p_(p), budget_(budget), opt_(opt) {
    const std::size_t m = p_.slots();
    full_mask_ = (m == 32) ? 0xffffffffu : ((1u << m) - 1u);
    stops_.reserve(2 * m + 2);
    charge_.reserve(2 * m + 2);
    legs_.reserve(2 * m + 2);
    if (opt_.prune) {
      // admissible entry bound: any visit to j costs at least B * min_i de(i,j)
      lb_entry_.assign(static_cast<std::size_t>(p_.stride), 0.0);
      for (int j = 0; j < p_.stride; ++j) {
        double best = kInfCost;
        for (int i = 0; i < p_.stride; ++i)
          if (i != j) best = std::min(best, p_.de[idx(i, j)]);
        lb_entry_[static_cast<std::size_t>(j)] = p_.battery_kj * best;
      }
      remaining_lb_ = lb_entry_[static_cast<std::size_t>(p_.end)];
      for (std::size_t s = 0; s < m; ++s)
        remaining_lb_ += lb_entry_[static_cast<std::size_t>(p_.pickup[s])] +
                         lb_entry_[static_cast<std::size_t>(p_.delivery[s])];
    }
  }

  RouteResult run() {
    start_ = std::chrono::steady_clock::now();
    RobotState st;
    stops_.push_back(0);
    dfs(st);

    RouteResult r;
    r.expansions = expansions_;
    r.budget_exhausted = exhausted_;
    r.proven_optimal = !exhausted_;
    if (have_best_) {
      r.feasible = true;
      r.route = best_;
      r.cost_kj = best_.total_energy_kj;
    } else {
      r.diagnostic = exhausted_ ? "budget exhausted before any complete route was found"
                                : "no energy- and payload-feasible route exists";
    }
    return r;
  }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(p_.stride) + static_cast<std::size_t>(j);
  }

  bool over_budget() {
    if (budget_.max_expansions && expansions_ >= *budget_.max_expansions) return true;
    if (budget_.wall_seconds) {
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
      if (el >= *budget_.wall_seconds) return true;
    }
    return false;
  }

  /// True when, after arriving at `to` with charge `soc_after`, the robot
  /// could still either reach the depot or make some onward required move.
  bool not_stranded(const RobotState& st, std::size_t slot, bool is_pickup, double soc_after, int to) {
    if (p_.de[idx(to, 0)] <= soc_after) return true;  // depot detour still available
    if (leg_transition(soc_after, to, p_.end, p_.de, p_.stride, p_.battery_kj).feasible) return true;
    const std::uint32_t picked = st.picked | (1u << slot);
    const std::uint32_t delivered = is_pickup ? st.delivered : st.delivered | (1u << slot);
    const double payload = st.payload + (is_pickup ? p_.mass[slot] : -p_.mass[slot]);
    for (std::size_t s = 0; s < p_.slots(); ++s) {
      const std::uint32_t bit = 1u << s;
      int node;
      if (!(picked & bit)) {
        if (payload + p_.mass[s] > p_.capacity) continue;
        node = p_.pickup[s];
      } else if (!(delivered & bit)) {
        node = p_.delivery[s];
      } else {
        continue;
      }
      if (leg_transition(soc_after, to, node, p_.de, p_.stride, p_.battery_kj).feasible) return true;
    }
    return false;
  }

  void dfs(const RobotState& st) {
    if (exhausted_) return;
    ++expansions_;
    if (!budget_.uncapped() && over_budget()) {
      exhausted_ = true;
      return;
    }

    if (st.delivered == full_mask_) {
      const LegResult leg = leg_transition(st.soc, st.position, p_.end, p_.de, p_.stride, p_.battery_kj);
      if (!leg.feasible) return;
      const double total = st.accumulated_kj + leg.energy_kj;
      if (!(have_best_ && total >= best_.total_energy_kj)) record_best(total, leg);
      return;
    }

    struct Cand {
      double energy;
      int node;
      std::uint32_t slot;
      bool is_pickup;
      LegResult leg;
    };
    Cand cands[64];
    int cand_count = 0;
    for (std::size_t s = 0; s < p_.slots(); ++s) {
      const std::uint32_t bit = 1u << s;
      int node;
      bool is_pickup;
      if (!(st.picked & bit)) {
        if (st.payload + p_.mass[s] > p_.capacity) continue;
        node = p_.pickup[s];
        is_pickup = true;
      } else if (!(st.delivered & bit)) {
        node = p_.delivery[s];
        is_pickup = false;
      } else {
        continue;
      }
      const LegResult leg = leg_transition(st.soc, st.position, node, p_.de, p_.stride, p_.battery_kj);
      if (!leg.feasible) continue;
      if (opt_.stranded_guard && !not_stranded(st, s, is_pickup, leg.soc_after, node)) continue;
      cands[cand_count++] = {leg.energy_kj, node, static_cast<std::uint32_t>(s), is_pickup, leg};
    }
    std::sort(cands, cands + cand_count, [](const Cand& a, const Cand& b) {
      if (a.energy != b.energy) return a.energy < b.energy;
      return a.node < b.node;
    });

    for (int c = 0; c < cand_count; ++c) {
      const Cand& cd = cands[c];
      const double branch = st.accumulated_kj + cd.energy;
      double lb_here = 0.0;
      if (opt_.prune) {
        lb_here = lb_entry_[static_cast<std::size_t>(cd.node)];
        if (have_best_ && branch + (remaining_lb_ - lb_here) >= best_.total_energy_kj) continue;
      }

      RobotState next = st;
      next.position = cd.node;
      next.soc = cd.leg.soc_after;
      next.accumulated_kj = branch;
      const std::uint32_t bit = 1u << cd.slot;
      if (cd.is_pickup) {
        next.picked |= bit;
        next.payload += p_.mass[cd.slot];
      } else {
        next.delivered |= bit;
        next.payload -= p_.mass[cd.slot];
      }

      stops_.push_back(cd.node);
      charge_.push_back(cd.leg.recharged);
      legs_.push_back(cd.leg.energy_kj);
      if (opt_.prune) remaining_lb_ -= lb_here;
      dfs(next);
      if (opt_.prune) remaining_lb_ += lb_here;
      stops_.pop_back();
      charge_.pop_back();
      legs_.pop_back();
      if (exhausted_) return;
    }
  }

  void record_best(double total, const LegResult& final_leg) {
    best_.stops = stops_;
    best_.stops.push_back(p_.end);
    best_.charge_events.clear();
    for (std::size_t k = 0; k < charge_.size(); ++k)
      if (charge_[k]) best_.charge_events.push_back(static_cast<int>(k));
    if (final_leg.recharged) best_.charge_events.push_back(static_cast<int>(charge_.size()));
    best_.leg_energy_kj = legs_;
    best_.leg_energy_kj.push_back(final_leg.energy_kj);
    best_.total_energy_kj = total;
    have_best_ = true;
    if (opt_.incumbent_log) opt_.incumbent_log->push_back(total);
  }

  const RoutingProblem& p_;
  const RoutingBudget& budget_;
  const RoutingOptions& opt_;
  std::chrono::steady_clock::time_point start_;
  std::uint32_t full_mask_ = 0;
  std::uint64_t expansions_ = 0;
  bool exhausted_ = false;
  std::vector<int> stops_;
  std::vector<char> charge_;
  std::vector<double> legs_;
  std::vector<double> lb_entry_;
  double remaining_lb_ = 0.0;
  Route best_;
  bool have_best_ = false;
};

}  // namespace detail

/// Minimum-energy closed tour for one robot over its assigned tasks.
/// Best-first depth-first branch and bound: successors are tried cheapest
/// leg first (ties by node index) and branches at or above the incumbent are
/// cut. Anytime under a budget: returns the best complete route found so far
/// with budget_exhausted set. An empty assignment is the empty route at zero
/// cost.
inline RouteResult route_bnb(const Instance& inst, std::span<const int> task_ids, int robot_index,
                             const RoutingBudget& budget = {}, const RoutingOptions& opt = {}) {
  RoutingProblem p = make_routing_problem(inst, task_ids, robot_index);
  if (p.slots() == 0) {
    RouteResult r;
    r.feasible = true;
    r.route.stops = {0, p.end};
    r.route.total_energy_kj = 0.0;
    r.cost_kj = 0.0;
    r.proven_optimal = true;
    return r;
  }
  for (std::size_t s = 0; s < p.slots(); ++s) {
    if (p.mass[s] > p.capacity) {
      RouteResult r;
      r.diagnostic = "task " + std::to_string(p.task_ids[s]) + " mass " + dtos(p.mass[s]) +
                     " exceeds payload capacity " + dtos(p.capacity);
      return r;
    }
  }
  return detail::RouteSearch(p, budget, opt).run();
}

/// Replays a route under the charging policy and returns its total energy.
/// Throws ValidationError when any leg is infeasible for this robot.
inline double route_cost(const Route& route, const Instance& inst, int robot_index) {
  if (route.stops.size() < 2 || route.stops.front() != 0 || route.stops.back() != inst.end_depot())
    throw ValidationError("route_cost: route must run depot to depot");
  if (route.empty()) return 0.0;
  const int tidx = inst.fleet.type_index(inst.fleet.robots[static_cast<std::size_t>(robot_index)].type_id);
  const RobotType& ty = inst.fleet.types[static_cast<std::size_t>(tidx)];
  std::span<const double> de = inst.energy[static_cast<std::size_t>(tidx)].de;
  double soc = 1.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < route.stops.size(); ++k) {
    const LegResult leg =
        leg_transition(soc, route.stops[k], route.stops[k + 1], de, inst.node_count(), ty.battery_kj);
    if (!leg.feasible)
      throw ValidationError("route_cost: leg " + std::to_string(k) + " (" + std::to_string(route.stops[k]) +
                            " -> " + std::to_string(route.stops[k + 1]) + ") infeasible");
    soc = leg.soc_after;
    total += leg.energy_kj;
  }
  return total;
}

/// Full audit of a route against an assignment: endpoints, visit-once,
/// precedence, payload, charge record, per-leg and total energy. Returns the
/// replayed cost; throws ValidationError with a specific message otherwise.
inline double validate_route(const Route& route, const Instance& inst, int robot_index,
                             std::span<const int> assigned_tasks) {
  RoutingProblem p = make_routing_problem(inst, assigned_tasks, robot_index);
  if (route.stops.empty() || route.stops.front() != 0 || route.stops.back() != p.end)
    throw ValidationError("route must start at node 0 and end at the return depot");
  if (p.slots() == 0) {
    if (!route.empty() || route.total_energy_kj != 0.0 || !route.charge_events.empty())
      throw ValidationError("empty assignment must produce the canonical empty route");
    return 0.0;
  }
  if (route.stops.size() != 2 * p.slots() + 2)
    throw ValidationError("route stop count does not match the assignment");
  if (route.leg_energy_kj.size() + 1 != route.stops.size())
    throw ValidationError("leg energy record does not match the stop list");

  std::vector<int> seen_at(static_cast<std::size_t>(inst.node_count()), -1);
  for (std::size_t k = 1; k + 1 < route.stops.size(); ++k) {
    const int node = route.stops[k];
    if (node <= 0 || node >= p.end) throw ValidationError("interior stop is a depot node");
    if (seen_at[static_cast<std::size_t>(node)] >= 0)
      throw ValidationError("node " + std::to_string(node) + " visited more than once");
    seen_at[static_cast<std::size_t>(node)] = static_cast<int>(k);
  }
  for (std::size_t s = 0; s < p.slots(); ++s) {
    const int pi = seen_at[static_cast<std::size_t>(p.pickup[s])];
    const int di = seen_at[static_cast<std::size_t>(p.delivery[s])];
    if (pi < 0 || di < 0)
      throw ValidationError("assigned task " + std::to_string(p.task_ids[s]) + " not served by the route");
    if (di < pi)
      throw ValidationError("task " + std::to_string(p.task_ids[s]) + " delivered before pickup");
  }
  for (std::size_t k = 1; k + 1 < route.stops.size(); ++k) {
    const int node = route.stops[k];
    const bool is_pickup = node <= inst.n;
    const int task = is_pickup ? node : node - inst.n;
    if (std::find(p.task_ids.begin(), p.task_ids.end(), task) == p.task_ids.end())
      throw ValidationError("route visits node " + std::to_string(node) + " of an unassigned task");
  }

  double soc = 1.0, payload = 0.0, total = 0.0;
  std::vector<int> charges;
  for (std::size_t k = 0; k + 1 < route.stops.size(); ++k) {
    const LegResult leg =
        leg_transition(soc, route.stops[k], route.stops[k + 1], p.de, p.stride, p.battery_kj);
    if (!leg.feasible) throw ValidationError("leg " + std::to_string(k) + " infeasible on replay");
    if (leg.recharged) charges.push_back(static_cast<int>(k));
    if (std::abs(leg.energy_kj - route.leg_energy_kj[k]) > 1e-9)
      throw ValidationError("leg " + std::to_string(k) + " energy mismatch on replay");
    soc = leg.soc_after;
    if (!(soc >= 0.0 && soc <= 1.0)) throw ValidationError("state of charge left [0,1]");
    payload += inst.signed_mass(route.stops[k + 1]);
    if (payload > p.capacity + 1e-12) throw ValidationError("payload exceeds capacity");
    if (payload < -1e-12) throw ValidationError("payload went negative");
    total += leg.energy_kj;
  }
  if (charges != route.charge_events) throw ValidationError("charge events do not match replay");
  if (std::abs(total - route.total_energy_kj) > 1e-9)
    throw ValidationError("total energy does not match replay");
  return total;
}

/// "0 ->(3.61 kJ) 4 ->[C](12.08 kJ) 9 ..." — [C] marks a recharge detour.
inline std::string route_debug_string(const Route& route) {
  std::string out = std::to_string(route.stops.empty() ? 0 : route.stops.front());
  for (std::size_t k = 0; k + 1 < route.stops.size(); ++k) {
    const bool charged =
        std::find(route.charge_events.begin(), route.charge_events.end(), static_cast<int>(k)) !=
        route.charge_events.end();
    char buf[64];
    if (k < route.leg_energy_kj.size())
      std::snprintf(buf, sizeof buf, " ->%s(%.6g kJ) ", charged ? "[C]" : "", route.leg_energy_kj[k]);
    else
      std::snprintf(buf, sizeof buf, " ->%s ", charged ? "[C]" : "");
    out += buf;
    out += std::to_string(route.stops[k + 1]);
  }
  return out;
}

}  // namespace mht
