#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mht/instance.hpp"
#include "mht/mcts.hpp"
#include "mht/rng.hpp"
#include "mht/util.hpp"

namespace mht {

struct LeafRanking {
  struct Row {
    int node_id = 0;
    double avg_cost_kj = kInfCost;  // J/N; +inf for never-evaluated leaves
  };
  std::vector<Row> rows;
};

/// All leaves (childless nodes, terminal or not) ordered by ascending nominal
/// average cost J/N, ties by node_id. Never-evaluated leaves (N=0) rank after
/// every evaluated leaf, ordered by node_id.
inline LeafRanking rank_leaves(const SearchTree& tree) {
  if (tree.nodes.empty()) throw ValidationError("rank_leaves: empty tree");
  LeafRanking ranking;
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const TreeNode& nd = tree.nodes[id];
    if (!nd.is_leaf()) continue;
    LeafRanking::Row row;
    row.node_id = static_cast<int>(id);
    if (nd.visits > 0) row.avg_cost_kj = nd.cost_sum / static_cast<double>(nd.visits);
    ranking.rows.push_back(row);
  }
  std::sort(ranking.rows.begin(), ranking.rows.end(),
            [](const LeafRanking::Row& a, const LeafRanking::Row& b) {
              const bool au = !std::isfinite(a.avg_cost_kj);
              const bool bu = !std::isfinite(b.avg_cost_kj);
              if (au != bu) return bu;  // evaluated leaves first
              if (!au && a.avg_cost_kj != b.avg_cost_kj) return a.avg_cost_kj < b.avg_cost_kj;
              return a.node_id < b.node_id;
            });
  return ranking;
}

/// Structure-identical copy (same node ids, parents, labels, depths,
/// task_order) with every N and J zeroed and J_max unset. The statistics are
/// rebuilt by re-evaluation under the perturbed instance.
inline SearchTree clone_topology(const SearchTree& tree) {
  SearchTree clone = tree;
  for (TreeNode& nd : clone.nodes) {
    nd.visits = 0;
    nd.cost_sum = 0.0;
  }
  clone.j_max.reset();
  return clone;
}

struct WarmConfig {
  double k = 0.05;    // leaf percentile re-evaluated
  int rollouts = 20;  // r, per re-evaluated leaf
  SearchBudget resume_budget;
  std::uint64_t seed = 0;
  /// Replay mode: non-terminal leaf completions come from a stream keyed by
  /// (nominal tree seed, leaf id) instead of the warm iteration stream, so
  /// the same completions recur across warm runs on the same nominal tree.
  bool replay_completions = false;

  void validate() const {
    if (!(k > 0.0) || k > 1.0) throw ValidationError("warm config: k must lie in (0,1]");
    if (rollouts < 1) throw ValidationError("warm config: rollouts must be >= 1");
  }
};

/// Step 3: process the first ceil(k*|ranking|) leaves in ranking order, each
/// with an evaluation batch under the perturbed instance (non-terminal: r
/// random completions; terminal: one evaluation weighted r), backpropagating
/// through the clone. Returns the node ids processed, in order.
inline std::vector<int> reevaluate_leaves(SearchTree& clone, const LeafRanking& ranking,
                                          const Instance& perturbed, const WarmConfig& wcfg,
                                          const RoutingBudget& routing, SearchState& state) {
  wcfg.validate();
  if (ranking.rows.empty()) throw ValidationError("reevaluate_leaves: empty ranking");
  const std::size_t total = ranking.rows.size();
  const std::size_t count =
      std::min(total, static_cast<std::size_t>(std::max(
                          1.0, std::ceil(wcfg.k * static_cast<double>(total)))));

  SolverConfig eval_cfg;
  eval_cfg.rollouts = wcfg.rollouts;
  eval_cfg.routing = routing;

  std::vector<int> processed;
  processed.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int leaf = ranking.rows[i].node_id;
    if (leaf < 0 || leaf >= static_cast<int>(clone.nodes.size()) ||
        !clone.nodes[static_cast<std::size_t>(leaf)].is_leaf())
      throw ValidationError("reevaluate_leaves: ranking does not match the clone topology");
    Rng rng = wcfg.replay_completions
                  ? Rng::child(clone.seed, 0x5eedu + static_cast<std::uint64_t>(leaf))
                  : Rng::child(wcfg.seed, state.iterations);
    detail::evaluate_batch(clone, leaf, perturbed, eval_cfg, state, rng);
    ++state.iterations;
    processed.push_back(leaf);
  }
  return processed;
}

struct WarmResult {
  SearchTree tree;
  std::optional<Incumbent> incumbent;
  ConvergenceTrace trace;
  std::vector<int> reevaluated;  // leaf ids, in processed order
  std::uint64_t reeval_evaluations = 0;
  std::uint64_t resume_evaluations = 0;
  std::uint64_t iterations = 0;
  double wall_seconds = 0.0;
};

/// Full warm restart: rank nominal leaves, clone topology with zeroed
/// statistics, re-evaluate the cheapest k-percentile under the perturbed
/// instance, then resume MCTS on the updated tree for wcfg.resume_budget.
/// The trace concatenates both phases (`reeval` then `resume`). The nominal
/// tree is never modified.
inline WarmResult warm_solve(const SearchTree& nominal, const Instance& perturbed,
                             const WarmConfig& wcfg, const SolverConfig& resume_cfg) {
  wcfg.validate();
  perturbed.validate();
  if (nominal.nodes.empty()) throw ValidationError("warm_solve: empty nominal tree");
  if (nominal.fleet_size != static_cast<int>(perturbed.fleet.size()))
    throw ValidationError(
        "warm_solve: topology-incompatible — nominal tree branches over " +
        std::to_string(nominal.fleet_size) + " robots but the perturbed fleet has " +
        std::to_string(perturbed.fleet.size()));
  if (static_cast<int>(nominal.task_order.size()) != perturbed.n)
    throw ValidationError("warm_solve: topology-incompatible — task count changed");

  const LeafRanking ranking = rank_leaves(nominal);

  WarmResult res;
  res.tree = clone_topology(nominal);
  res.tree.instance_hash = instance_hash(perturbed);

  SearchState state;
  detail::EvalCache cache;
  if (!resume_cfg.routing.wall_seconds) state.cache = &cache;

  state.phase = "reeval";
  res.reevaluated = reevaluate_leaves(res.tree, ranking, perturbed, wcfg, resume_cfg.routing, state);
  res.reeval_evaluations = state.evaluations;

  state.phase = "resume";
  SolverConfig rc = resume_cfg;
  rc.seed = wcfg.seed;  // reeval and resume share one iteration-indexed stream
  rc.budget = wcfg.resume_budget;
  run_search_loop(res.tree, perturbed, rc, state);

  res.incumbent = std::move(state.incumbent);
  res.trace = std::move(state.trace);
  res.resume_evaluations = state.evaluations - res.reeval_evaluations;
  res.iterations = state.iterations;
  res.wall_seconds = state.elapsed();
  return res;
}

}  // namespace mht
