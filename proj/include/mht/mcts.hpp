#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mht/instance.hpp"
#include "mht/rng.hpp"
#include "mht/routing.hpp"
#include "mht/util.hpp"

namespace mht {

/// Robot index (0-based, into fleet.robots) chosen for each task, indexed by
/// task id - 1.
using Assignment = std::vector<int>;

/// Decision node: assigning robot `label` to the task at depth-1 of the
/// parent's path. `children`, when non-empty, holds one child per fleet
/// robot, indexed by robot index.
struct TreeNode {
  int parent = -1;  // -1 for root
  int label = -1;   // robot index; -1 for root
  int depth = 0;    // number of tasks fixed on the path; n == terminal
  std::vector<int> children;
  std::uint64_t visits = 0;  // N
  double cost_sum = 0.0;     // J, kJ

  bool is_leaf() const { return children.empty(); }
};

struct SearchTree {
  std::vector<TreeNode> nodes;
  std::vector<int> task_order;  // depth -> task id; fixed for the tree's lifetime
  int fleet_size = 0;
  std::optional<double> j_max;
  std::uint64_t instance_hash = 0;
  std::uint64_t seed = 0;  // seed of the search that grew this tree

  int root() const { return 0; }
  bool terminal(int id) const {
    return nodes[static_cast<std::size_t>(id)].depth == static_cast<int>(task_order.size());
  }

  /// Assignment entries fixed by the path root -> node; unassigned tasks -1.
  Assignment partial_assignment(int id) const {
    Assignment a(task_order.size(), -1);
    int cur = id;
    while (cur != 0) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(cur)];
      a[static_cast<std::size_t>(task_order[static_cast<std::size_t>(nd.depth - 1)] - 1)] = nd.label;
      cur = nd.parent;
    }
    return a;
  }
};

inline SearchTree make_search_tree(const Instance& inst) {
  SearchTree t;
  t.nodes.push_back(TreeNode{});
  t.task_order.resize(static_cast<std::size_t>(inst.n));
  for (int i = 0; i < inst.n; ++i) t.task_order[static_cast<std::size_t>(i)] = i + 1;
  t.fleet_size = static_cast<int>(inst.fleet.size());
  t.instance_hash = instance_hash(inst);
  return t;
}

// ---------------------------------------------------------------------------
// evaluation

struct Evaluation {
  Assignment assignment;
  double cost_kj = kInfCost;
  bool feasible = false;
  std::vector<RouteResult> routes;  // per robot index
};

/// Finite surrogate cost for assignments whose routing is infeasible: ten
/// times the energy of the slowest robot type serving every task as a lone
/// depot round trip (recharge-free leg arithmetic, so it is always finite).
/// Dominates every feasible total while keeping LCB arithmetic well-defined.
inline double infeasibility_penalty(const Instance& inst) {
  double worst = 0.0;
  for (std::size_t t = 0; t < inst.fleet.types.size(); ++t) {
    const double b = inst.fleet.types[t].battery_kj;
    double sum = 0.0;
    for (const Task& task : inst.tasks) {
      sum += b * (inst.de(static_cast<int>(t), 0, task.pickup) +
                  inst.de(static_cast<int>(t), task.pickup, task.delivery) +
                  inst.de(static_cast<int>(t), task.delivery, inst.end_depot()));
    }
    worst = std::max(worst, sum);
  }
  return 10.0 * worst;
}

/// Groups tasks per robot and routes each with route_bnb; cost is the fleet
/// total (robots without tasks contribute 0). Any infeasible robot route
/// turns the whole evaluation into the penalty cost with feasible=false.
inline Evaluation evaluate_assignment(const Assignment& a, const Instance& inst,
                                      const RoutingBudget& routing = {}) {
  if (a.size() != static_cast<std::size_t>(inst.n))
    throw ValidationError("evaluate_assignment: assignment length != task count");
  const int fleet = static_cast<int>(inst.fleet.size());
  std::vector<std::vector<int>> per_robot(static_cast<std::size_t>(fleet));
  for (int i = 0; i < inst.n; ++i) {
    const int r = a[static_cast<std::size_t>(i)];
    if (r < 0 || r >= fleet)
      throw ValidationError("evaluate_assignment: robot index out of range");
    per_robot[static_cast<std::size_t>(r)].push_back(i + 1);
  }

  Evaluation ev;
  ev.assignment = a;
  ev.routes.reserve(static_cast<std::size_t>(fleet));
  bool ok = true;
  double total = 0.0;
  for (int r = 0; r < fleet; ++r) {
    ev.routes.push_back(route_bnb(inst, per_robot[static_cast<std::size_t>(r)], r, routing));
    if (ev.routes.back().feasible)
      total += ev.routes.back().cost_kj;
    else
      ok = false;
  }
  ev.feasible = ok;
  ev.cost_kj = ok ? total : infeasibility_penalty(inst);
  return ev;
}

// ---------------------------------------------------------------------------
// tree operations

/// LCB child selection. Unvisited children take priority (uniform seeded
/// pick among them); otherwise argmin of
///   J(c)/(N(c)*J_max) - gamma*sqrt(ln N(node) / N(c)),
/// first index winning ties.
inline int lcb_select(const SearchTree& tree, int node_id, double gamma, Rng& rng) {
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
  if (node.children.empty()) throw std::logic_error("lcb_select called on a childless node");

  std::vector<int> unvisited;
  for (int c : node.children)
    if (tree.nodes[static_cast<std::size_t>(c)].visits == 0) unvisited.push_back(c);
  if (!unvisited.empty()) return unvisited[rng.uniform_index(unvisited.size())];

  double jmax = tree.j_max.value_or(1.0);
  if (jmax <= 0.0) jmax = 1.0;
  const double ln_n = std::log(std::max<double>(1.0, static_cast<double>(node.visits)));
  int best = -1;
  double best_score = kInfCost;
  for (int c : node.children) {
    const TreeNode& ch = tree.nodes[static_cast<std::size_t>(c)];
    const double nc = static_cast<double>(ch.visits);
    const double score = ch.cost_sum / (nc * jmax) - gamma * std::sqrt(ln_n / nc);
    if (score < best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

/// Adds one child per fleet robot for the task at node.depth. Children start
/// with N=0, J=0. Returns the new ids.
inline std::vector<int> expand(SearchTree& tree, int node_id) {
  if (tree.terminal(node_id)) throw std::logic_error("expand called on a terminal node");
  if (!tree.nodes[static_cast<std::size_t>(node_id)].children.empty())
    throw std::logic_error("expand called on an already-expanded node");
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(tree.fleet_size));
  const int depth = tree.nodes[static_cast<std::size_t>(node_id)].depth;
  for (int r = 0; r < tree.fleet_size; ++r) {
    TreeNode child;
    child.parent = node_id;
    child.label = r;
    child.depth = depth + 1;
    ids.push_back(static_cast<int>(tree.nodes.size()));
    tree.nodes.push_back(child);
  }
  tree.nodes[static_cast<std::size_t>(node_id)].children = ids;
  return ids;
}

/// Completes the node's partial assignment uniformly at random and evaluates
/// it. Terminal nodes consume no randomness.
inline Evaluation rollout(const SearchTree& tree, int node_id, const Instance& inst,
                          const RoutingBudget& routing, Rng& rng) {
  Assignment a = tree.partial_assignment(node_id);
  for (std::size_t d = static_cast<std::size_t>(tree.nodes[static_cast<std::size_t>(node_id)].depth);
       d < tree.task_order.size(); ++d) {
    a[static_cast<std::size_t>(tree.task_order[d] - 1)] =
        static_cast<int>(rng.uniform_index(static_cast<std::size_t>(tree.fleet_size)));
  }
  return evaluate_assignment(a, inst, routing);
}

/// N += |costs| and J += sum(costs) on every node from `node_id` to the root
/// inclusive; J_max absorbs the batch maximum.
inline void backpropagate(SearchTree& tree, int node_id, std::span<const double> costs) {
  if (costs.empty()) throw std::logic_error("backpropagate with no costs");
  double sum = 0.0, mx = -kInfCost;
  for (double c : costs) {
    sum += c;
    mx = std::max(mx, c);
  }
  int cur = node_id;
  while (cur != -1) {
    TreeNode& nd = tree.nodes[static_cast<std::size_t>(cur)];
    nd.visits += costs.size();
    nd.cost_sum += sum;
    cur = nd.parent;
  }
  if (!tree.j_max || mx > *tree.j_max) tree.j_max = mx;
}

// ---------------------------------------------------------------------------
// search driver

struct Incumbent {
  Assignment assignment;
  std::vector<Route> routes;  // per robot index
  double cost_kj = kInfCost;
  std::uint64_t at_evaluations = 0;
  double at_wall_seconds = 0.0;
};

struct TraceRow {
  std::string phase;
  std::uint64_t evaluations = 0;
  double wall_seconds = 0.0;
  double incumbent_kj = kInfCost;
  Assignment assignment;
};

using ConvergenceTrace = std::vector<TraceRow>;

struct SearchBudget {
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> evaluations;
  std::optional<double> wall_seconds;

  bool unbounded() const { return !iterations && !evaluations && !wall_seconds; }
};

struct SolverConfig {
  double gamma = std::sqrt(0.5);
  int rollouts = 20;  // r
  RoutingBudget routing;
  SearchBudget budget;
  std::uint64_t seed = 0;
  bool log_selections = false;

  void validate() const {
    if (!(gamma >= 0.0)) throw ValidationError("solver config: gamma must be >= 0");
    if (rollouts < 1) throw ValidationError("solver config: rollouts must be >= 1");
  }
};

namespace detail {

/// Deterministic routing results can be memoized per assignment: terminal
/// nodes are re-evaluated thousands of times once the tree saturates, and the
/// result is bit-identical every time. Disabled under wall-clock routing caps
/// (those are not deterministic).
struct EvalCache {
  std::unordered_map<std::string, Evaluation> map;

  static std::string key(const Assignment& a) {
    std::string k(a.size(), '\0');
    for (std::size_t i = 0; i < a.size(); ++i) k[i] = static_cast<char>(a[i] + 1);
    return k;
  }
  const Evaluation* find(const Assignment& a) const {
    auto it = map.find(key(a));
    return it == map.end() ? nullptr : &it->second;
  }
  void put(const Assignment& a, const Evaluation& ev) { map.emplace(key(a), ev); }
};

}  // namespace detail

/// Shared mutable context for one solve (cold search, or the two warm-restart
/// phases run back to back): incumbent, trace, counters and phase tag.
struct SearchState {
  std::optional<Incumbent> incumbent;
  ConvergenceTrace trace;
  std::uint64_t iterations = 0;
  std::uint64_t evaluations = 0;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  std::string phase = "search";
  std::vector<int>* selection_log = nullptr;
  detail::EvalCache* cache = nullptr;

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
};

namespace detail {

inline Evaluation evaluate_with_cache(SearchState& state, const Assignment& a, const Instance& inst,
                                      const RoutingBudget& routing) {
  if (state.cache) {
    if (const Evaluation* hit = state.cache->find(a)) return *hit;
    Evaluation ev = evaluate_assignment(a, inst, routing);
    state.cache->put(a, ev);
    return ev;
  }
  return evaluate_assignment(a, inst, routing);
}

/// Records an incumbent improvement at the given evaluation ordinal.
inline void note_evaluation(SearchState& state, const Evaluation& ev, std::uint64_t at_eval) {
  if (!ev.feasible) return;
  if (state.incumbent && ev.cost_kj >= state.incumbent->cost_kj) return;
  Incumbent inc;
  inc.assignment = ev.assignment;
  inc.routes.reserve(ev.routes.size());
  for (const RouteResult& rr : ev.routes) inc.routes.push_back(rr.route);
  inc.cost_kj = ev.cost_kj;
  inc.at_evaluations = at_eval;
  inc.at_wall_seconds = state.elapsed();
  state.incumbent = std::move(inc);
  state.trace.push_back(
      {state.phase, at_eval, state.incumbent->at_wall_seconds, ev.cost_kj, ev.assignment});
}

/// One evaluation batch at `node_id` (leaf or terminal): r rollouts — or one
/// deterministic evaluation counted r times at a terminal — followed by a
/// single backpropagation. Every batch consumes r evaluation credits; each
/// individual result is stamped with the credit ordinal at which it became
/// available.
inline void evaluate_batch(SearchTree& tree, int node_id, const Instance& inst,
                           const SolverConfig& cfg, SearchState& state, Rng& rng) {
  std::vector<double> costs;
  costs.reserve(static_cast<std::size_t>(cfg.rollouts));
  if (tree.terminal(node_id)) {
    const Evaluation ev = evaluate_with_cache(state, tree.partial_assignment(node_id), inst, cfg.routing);
    costs.assign(static_cast<std::size_t>(cfg.rollouts), ev.cost_kj);
    note_evaluation(state, ev, state.evaluations + 1);
  } else {
    for (int j = 0; j < cfg.rollouts; ++j) {
      Assignment a = tree.partial_assignment(node_id);
      for (std::size_t d =
               static_cast<std::size_t>(tree.nodes[static_cast<std::size_t>(node_id)].depth);
           d < tree.task_order.size(); ++d) {
        a[static_cast<std::size_t>(tree.task_order[d] - 1)] =
            static_cast<int>(rng.uniform_index(static_cast<std::size_t>(tree.fleet_size)));
      }
      const Evaluation ev = evaluate_with_cache(state, a, inst, cfg.routing);
      costs.push_back(ev.cost_kj);
      note_evaluation(state, ev, state.evaluations + static_cast<std::uint64_t>(j) + 1);
    }
  }
  backpropagate(tree, node_id, costs);
  state.evaluations += static_cast<std::uint64_t>(cfg.rollouts);
}

}  // namespace detail

/// Core MCTS loop: descend by LCB, expand a visited non-terminal leaf and
/// step into one fresh child, run an evaluation batch, backpropagate. Budgets
/// bound the work done inside THIS call (state counters may start non-zero
/// when resuming). Iteration k draws from the deterministic child stream
/// (seed, k), so traces are seed-reproducible.
inline void run_search_loop(SearchTree& tree, const Instance& inst, const SolverConfig& cfg,
                            SearchState& state) {
  cfg.validate();
  if (cfg.budget.unbounded())
    throw ValidationError("search budget must cap iterations, evaluations, or wall time");
  if (tree.fleet_size != static_cast<int>(inst.fleet.size()))
    throw ValidationError("tree fleet size does not match the instance");

  const std::uint64_t iter0 = state.iterations;
  const std::uint64_t eval0 = state.evaluations;
  const auto loop_start = std::chrono::steady_clock::now();

  while (true) {
    if (cfg.budget.iterations && state.iterations - iter0 >= *cfg.budget.iterations) break;
    if (cfg.budget.evaluations && state.evaluations - eval0 >= *cfg.budget.evaluations) break;
    if (cfg.budget.wall_seconds &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - loop_start).count() >=
            *cfg.budget.wall_seconds)
      break;

    Rng rng = Rng::child(cfg.seed, state.iterations);
    int node = tree.root();
    while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
      node = lcb_select(tree, node, cfg.gamma, rng);
      if (state.selection_log)
        state.selection_log->push_back(tree.nodes[static_cast<std::size_t>(node)].label);
    }
    if (!tree.terminal(node) && tree.nodes[static_cast<std::size_t>(node)].visits > 0) {
      expand(tree, node);
      node = lcb_select(tree, node, cfg.gamma, rng);  // all children fresh: uniform pick
      if (state.selection_log)
        state.selection_log->push_back(tree.nodes[static_cast<std::size_t>(node)].label);
    }
    detail::evaluate_batch(tree, node, inst, cfg, state, rng);
    ++state.iterations;
  }
}

struct SearchResult {
  SearchTree tree;
  std::optional<Incumbent> incumbent;
  ConvergenceTrace trace;
  std::uint64_t iterations = 0;
  std::uint64_t evaluations = 0;
  double wall_seconds = 0.0;
  std::vector<int> selection_log;  // robot labels in descent order, when enabled
};

/// Cold-start solve: fresh tree, full MCTS under the configured budget.
inline SearchResult search(const Instance& inst, const SolverConfig& cfg) {
  inst.validate();
  SearchResult res;
  res.tree = make_search_tree(inst);
  res.tree.seed = cfg.seed;

  SearchState state;
  detail::EvalCache cache;
  if (!cfg.routing.wall_seconds) state.cache = &cache;
  if (cfg.log_selections) state.selection_log = &res.selection_log;

  run_search_loop(res.tree, inst, cfg, state);

  res.incumbent = std::move(state.incumbent);
  res.trace = std::move(state.trace);
  res.iterations = state.iterations;
  res.evaluations = state.evaluations;
  res.wall_seconds = state.elapsed();
  return res;
}

}  // namespace mht
