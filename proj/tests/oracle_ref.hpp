#pragma once

// Reference implementations used as test-side oracles. Written independently
// of the library's routing/search code on purpose: plain recursion, no
// pruning, no shared helpers — only the instance data model is reused.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mht/instance.hpp"

namespace ref {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Walk {
  int position = 0;      // current node
  double z = 1.0;        // state of charge
  double carried = 0.0;  // payload on board
  std::uint32_t picked = 0, delivered = 0;
  double spent_kj = 0.0;
};

/// Charging-policy replay, straight from the case split: travel direct while
/// the leg leaves charge strictly positive, otherwise detour via the depot
/// charger. Returns false when neither case is possible.
inline bool ref_leg(Walk& w, int to, const mht::Instance& inst, int type_index) {
  const int stride = inst.node_count();
  const double B = inst.fleet.types[static_cast<std::size_t>(type_index)].battery_kj;
  const auto& de = inst.energy[static_cast<std::size_t>(type_index)].de;
  const auto at = [&](int i, int j) {
    return de[static_cast<std::size_t>(i) * static_cast<std::size_t>(stride) +
              static_cast<std::size_t>(j)];
  };
  const double direct = at(w.position, to);
  if (w.z - direct > 0.0) {
    w.z -= direct;
    w.spent_kj += B * direct;
    w.position = to;
    return true;
  }
  const double home = at(w.position, 0);
  const double out = at(0, to);
  if (home > w.z || out > 1.0) return false;
  w.z = 1.0 - out;
  w.spent_kj += B * (home + out);
  w.position = to;
  return true;
}

/// Exhaustive best route cost over every precedence-feasible stop order for
/// one robot and task set; +inf when no order is feasible.
inline void ref_route_rec(const Walk& w, const std::vector<int>& tasks, const mht::Instance& inst,
                          int type_index, double capacity, double& best) {
  bool done = true;
  for (std::size_t k = 0; k < tasks.size(); ++k)
    if (!(w.delivered & (1u << k))) done = false;
  if (done) {
    Walk home = w;
    if (ref_leg(home, inst.end_depot(), inst, type_index) && home.spent_kj < best)
      best = home.spent_kj;
    return;
  }
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const int task_id = tasks[k];
    const double mass = inst.tasks[static_cast<std::size_t>(task_id - 1)].mass;
    if (!(w.picked & (1u << k))) {
      if (w.carried + mass <= capacity) {
        Walk next = w;
        if (ref_leg(next, task_id, inst, type_index)) {
          next.picked |= (1u << k);
          next.carried += mass;
          ref_route_rec(next, tasks, inst, type_index, capacity, best);
        }
      }
    } else if (!(w.delivered & (1u << k))) {
      Walk next = w;
      if (ref_leg(next, task_id + inst.n, inst, type_index)) {
        next.delivered |= (1u << k);
        next.carried -= mass;
        ref_route_rec(next, tasks, inst, type_index, capacity, best);
      }
    }
  }
}

inline double best_route_cost(const mht::Instance& inst, int robot_index,
                              const std::vector<int>& tasks) {
  if (tasks.empty()) return 0.0;
  const int type_index = inst.fleet.type_index(
      inst.fleet.robots[static_cast<std::size_t>(robot_index)].type_id);
  const double capacity =
      inst.fleet.types[static_cast<std::size_t>(type_index)].payload_cap;
  double best = kInf;
  ref_route_rec(Walk{}, tasks, inst, type_index, capacity, best);
  return best;
}

/// Total fleet cost of one assignment (robot index per task); +inf if any
/// robot's routing is infeasible.
inline double assignment_cost(const mht::Instance& inst, const std::vector<int>& assignment) {
  std::vector<std::vector<int>> per_robot(inst.fleet.size());
  for (int i = 0; i < inst.n; ++i)
    per_robot[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i + 1);
  double total = 0.0;
  for (std::size_t r = 0; r < per_robot.size(); ++r) {
    const double c = best_route_cost(inst, static_cast<int>(r), per_robot[r]);
    if (c == kInf) return kInf;
    total += c;
  }
  return total;
}

struct BestAssignment {
  std::vector<int> assignment;
  double cost = kInf;
};

/// Full |fleet|^n sweep; returns the first argmin in lexicographic order.
inline BestAssignment best_assignment(const mht::Instance& inst) {
  const int fleet = static_cast<int>(inst.fleet.size());
  std::vector<int> a(static_cast<std::size_t>(inst.n), 0);
  BestAssignment best;
  while (true) {
    const double c = assignment_cost(inst, a);
    if (c < best.cost) best = {a, c};
    int i = inst.n - 1;
    while (i >= 0 && a[static_cast<std::size_t>(i)] == fleet - 1) a[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++a[static_cast<std::size_t>(i)];
  }
  return best;
}

}  // namespace ref
