#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mht/instance.hpp"
#include "mht/io.hpp"
#include "mht/mcts.hpp"
#include "mht/oracle.hpp"
#include "mht/perturb.hpp"
#include "mht/util.hpp"
#include "mht/warm.hpp"

namespace mht {

/// One experiment: solve the nominal instance `repetitions` times (cached
/// tree snapshots), then recover from each perturbation with the selected
/// strategies under evaluation-matched online budgets.
struct ExperimentSpec {
  std::string instance_path;
  std::string output_dir = "experiment_out";
  std::uint64_t seed_base = 1;
  int repetitions = 1;
  SolverConfig nominal;        // budget required
  SearchBudget online_budget;  // per-strategy recovery budget (cold total; warm reeval+resume)
  double warm_k = 0.05;
  bool warm_replay = false;
  std::vector<std::string> strategies = {"cold", "warm", "decentralized"};
  struct Pert {
    std::string name;  // filesystem-safe label
    std::string spec;  // perturbation grammar
  };
  std::vector<Pert> perturbations;
  std::vector<std::uint64_t> checkpoints;  // evaluation counts, ascending
  bool run_oracle = false;
  std::uint64_t oracle_cap = 1ull << 20;
  bool cache_trees = true;

  void validate() const {
    if (repetitions < 1) throw ValidationError("experiment: repetitions must be >= 1");
    if (instance_path.empty()) throw ValidationError("experiment: instance path missing");
    if (nominal.budget.unbounded())
      throw ValidationError("experiment: nominal budget must cap iterations, evaluations, or wall time");
    if (online_budget.unbounded() && !(strategies.size() == 1 && strategies[0] == "decentralized"))
      throw ValidationError("experiment: online budget must be capped");
    for (std::size_t i = 1; i < checkpoints.size(); ++i)
      if (checkpoints[i] <= checkpoints[i - 1])
        throw ValidationError("experiment: checkpoints must be strictly ascending");
    for (const auto& s : strategies)
      if (s != "cold" && s != "warm" && s != "decentralized")
        throw ValidationError("experiment: unknown strategy '" + s + "'");
    for (const auto& p : perturbations) {
      if (p.name.empty()) throw ValidationError("experiment: perturbation needs a name");
      for (char c : p.name)
        if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '-' || c == '_'))
          throw ValidationError("experiment: perturbation name '" + p.name +
                                "' must be [A-Za-z0-9_-]");
      for (std::size_t j = 0; &perturbations[j] != &p; ++j)
        if (perturbations[j].name == p.name)
          throw ValidationError("experiment: duplicate perturbation name '" + p.name + "'");
    }
  }
};

namespace detail {

inline SearchBudget budget_from_json(const ordered_json& j) {
  SearchBudget b;
  if (j.contains("iterations")) b.iterations = j.at("iterations").get<std::uint64_t>();
  if (j.contains("evaluations")) b.evaluations = j.at("evaluations").get<std::uint64_t>();
  if (j.contains("seconds")) b.wall_seconds = j.at("seconds").get<double>();
  return b;
}

inline RoutingBudget routing_from_json(const ordered_json& j) {
  RoutingBudget b;
  if (j.contains("max_expansions")) b.max_expansions = j.at("max_expansions").get<std::uint64_t>();
  if (j.contains("wall_seconds")) b.wall_seconds = j.at("wall_seconds").get<double>();
  return b;
}

}  // namespace detail

inline ExperimentSpec experiment_spec_from_json(const ordered_json& j) {
  try {
    if (j.contains("version") && j.at("version").get<int>() != 1)
      throw ParseError("unsupported experiment spec version");
    ExperimentSpec spec;
    spec.instance_path = j.at("instance").get<std::string>();
    if (j.contains("output_dir")) spec.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seed_base")) spec.seed_base = j.at("seed_base").get<std::uint64_t>();
    if (j.contains("repetitions")) spec.repetitions = j.at("repetitions").get<int>();
    if (j.contains("nominal")) {
      const auto& nj = j.at("nominal");
      if (nj.contains("gamma")) spec.nominal.gamma = nj.at("gamma").get<double>();
      if (nj.contains("rollouts")) spec.nominal.rollouts = nj.at("rollouts").get<int>();
      if (nj.contains("budget")) spec.nominal.budget = detail::budget_from_json(nj.at("budget"));
      if (nj.contains("routing")) spec.nominal.routing = detail::routing_from_json(nj.at("routing"));
    }
    if (j.contains("online")) {
      const auto& oj = j.at("online");
      if (oj.contains("budget")) spec.online_budget = detail::budget_from_json(oj.at("budget"));
    }
    if (j.contains("warm")) {
      const auto& wj = j.at("warm");
      if (wj.contains("k")) spec.warm_k = wj.at("k").get<double>();
      if (wj.contains("replay")) spec.warm_replay = wj.at("replay").get<bool>();
    }
    if (j.contains("strategies"))
      spec.strategies = j.at("strategies").get<std::vector<std::string>>();
    if (j.contains("perturbations"))
      for (const auto& pj : j.at("perturbations"))
        spec.perturbations.push_back(
            {pj.at("name").get<std::string>(), pj.at("spec").get<std::string>()});
    if (j.contains("checkpoints_evaluations"))
      spec.checkpoints = j.at("checkpoints_evaluations").get<std::vector<std::uint64_t>>();
    if (j.contains("oracle")) spec.run_oracle = j.at("oracle").get<bool>();
    if (j.contains("oracle_cap")) spec.oracle_cap = j.at("oracle_cap").get<std::uint64_t>();
    if (j.contains("cache_trees")) spec.cache_trees = j.at("cache_trees").get<bool>();
    spec.validate();
    return spec;
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed experiment spec: ") + e.what());
  }
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  ordered_json j;
  try {
    in >> j;
  } catch (const ordered_json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return experiment_spec_from_json(j);
}

struct CellStatus {
  std::string perturbation;  // "nominal" for the nominal solves
  std::string strategy;
  int repetition = 0;
  bool ok = false;
  std::string message;          // failure reason when !ok
  double final_cost_kj = kInfCost;
};

struct ExperimentResult {
  std::vector<CellStatus> cells;
  std::string output_dir;
  std::string manifest_path;
  std::map<std::string, double> oracle_cost;  // per perturbation name (+ "nominal")
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return kInfCost;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Validates every route of an incumbent against its instance; returns a
/// failure message or empty string. Keeps solver bugs from leaking invalid
/// solutions into result bundles.
inline std::string audit_incumbent(const Incumbent& inc, const Instance& inst) {
  std::vector<std::vector<int>> per_robot(inst.fleet.size());
  for (int i = 0; i < inst.n; ++i)
    per_robot[static_cast<std::size_t>(inc.assignment[static_cast<std::size_t>(i)])].push_back(i + 1);
  double total = 0.0;
  for (std::size_t r = 0; r < inst.fleet.size(); ++r) {
    try {
      total += validate_route(inc.routes[r], inst, static_cast<int>(r), per_robot[r]);
    } catch (const std::exception& e) {
      return "robot " + std::to_string(inst.fleet.robots[r].id) + " route invalid: " + e.what();
    }
  }
  if (std::abs(total - inc.cost_kj) > 1e-6) return "incumbent cost does not match its routes";
  return {};
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  spec.validate();
  const Instance nominal_inst = load_instance(spec.instance_path);
  fs::create_directories(spec.output_dir);
  const auto out_path = [&](const std::string& name) {
    return (fs::path(spec.output_dir) / name).string();
  };

  ExperimentResult result;
  result.output_dir = spec.output_dir;

  ordered_json manifest;
  manifest["format"] = "mht-experiment-result";
  manifest["version"] = 1;
  manifest["instance"] = spec.instance_path;
  manifest["instance_hash"] = hex64(instance_hash(nominal_inst));
  manifest["repetitions"] = spec.repetitions;
  manifest["seed_base"] = spec.seed_base;

  if (spec.run_oracle) {
    OracleResult oracle = exhaustive_solve(nominal_inst, spec.oracle_cap);
    result.oracle_cost["nominal"] = oracle.any_feasible ? oracle.optimal_cost : kInfCost;
    std::ofstream out(out_path("oracle_nominal.csv"));
    write_oracle_csv(out, oracle, nominal_inst);
  }

  // --- nominal solves (tree snapshots reused across perturbations) ---------
  std::vector<TreeSnapshot> nominal_runs(static_cast<std::size_t>(spec.repetitions));
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    const std::uint64_t seed = spec.seed_base + static_cast<std::uint64_t>(rep);
    const std::string tree_file = out_path("nominal_rep" + std::to_string(rep) + ".tree");
    CellStatus cell{"nominal", "mcts", rep, false, {}, kInfCost};
    try {
      bool loaded = false;
      if (spec.cache_trees && fs::exists(tree_file)) {
        TreeSnapshot snap = load_tree_file(tree_file);
        if (snap.tree.instance_hash == instance_hash(nominal_inst) && snap.tree.seed == seed) {
          nominal_runs[static_cast<std::size_t>(rep)] = std::move(snap);
          loaded = true;
        }
      }
      if (!loaded) {
        SolverConfig cfg = spec.nominal;
        cfg.seed = seed;
        SearchResult res = search(nominal_inst, cfg);
        write_trace(out_path("trace_nominal_rep" + std::to_string(rep) + ".csv"), res.trace,
                    nominal_inst.fleet);
        save_tree(tree_file, res.tree, res.incumbent);
        nominal_runs[static_cast<std::size_t>(rep)] = {std::move(res.tree), std::move(res.incumbent)};
      }
      const auto& inc = nominal_runs[static_cast<std::size_t>(rep)].incumbent;
      if (inc) {
        const std::string audit = detail::audit_incumbent(*inc, nominal_inst);
        if (!audit.empty()) throw ValidationError("nominal incumbent audit failed: " + audit);
        cell.final_cost_kj = inc->cost_kj;
      }
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.message = e.what();
    }
    result.cells.push_back(cell);
  }

  // --- perturbation cells ---------------------------------------------------
  struct CheckpointTable {  // strategy -> checkpoint -> per-rep incumbents
    std::map<std::string, std::vector<std::vector<double>>> values;
  };

  for (const auto& pert : spec.perturbations) {
    Instance perturbed;
    try {
      perturbed = apply_perturbation(nominal_inst, parse_perturbation(pert.spec));
    } catch (const std::exception& e) {
      result.cells.push_back({pert.name, "apply", 0, false, e.what(), kInfCost});
      continue;
    }
    save_instance(out_path("instance_" + pert.name + ".json"), perturbed);

    if (spec.run_oracle) {
      OracleResult oracle = exhaustive_solve(perturbed, spec.oracle_cap);
      result.oracle_cost[pert.name] = oracle.any_feasible ? oracle.optimal_cost : kInfCost;
      std::ofstream out(out_path("oracle_" + pert.name + ".csv"));
      write_oracle_csv(out, oracle, perturbed);
    }

    CheckpointTable table;
    for (const auto& strategy : spec.strategies)
      table.values[strategy].assign(spec.checkpoints.size(), {});

    for (int rep = 0; rep < spec.repetitions; ++rep) {
      const std::uint64_t seed = spec.seed_base + static_cast<std::uint64_t>(rep);
      const TreeSnapshot& nominal_run = nominal_runs[static_cast<std::size_t>(rep)];

      for (const auto& strategy : spec.strategies) {
        CellStatus cell{pert.name, strategy, rep, false, {}, kInfCost};
        ConvergenceTrace trace;
        try {
          std::optional<Incumbent> incumbent;
          if (strategy == "cold") {
            SolverConfig cfg = spec.nominal;
            cfg.budget = spec.online_budget;
            cfg.seed = seed;
            SearchResult res = search(perturbed, cfg);
            trace = std::move(res.trace);
            incumbent = std::move(res.incumbent);
          } else if (strategy == "warm") {
            if (nominal_run.tree.nodes.empty())
              throw ValidationError("no nominal tree available for this repetition");
            WarmConfig wcfg;
            wcfg.k = spec.warm_k;
            wcfg.rollouts = spec.nominal.rollouts;
            wcfg.seed = seed;
            wcfg.replay_completions = spec.warm_replay;
            // matched budget: resume gets what the re-evaluation phase leaves over
            const LeafRanking ranking = rank_leaves(nominal_run.tree);
            const std::uint64_t reeval_iters = static_cast<std::uint64_t>(std::min(
                static_cast<double>(ranking.rows.size()),
                std::max(1.0, std::ceil(spec.warm_k * static_cast<double>(ranking.rows.size())))));
            const std::uint64_t reeval_evals =
                reeval_iters * static_cast<std::uint64_t>(spec.nominal.rollouts);
            wcfg.resume_budget = spec.online_budget;
            if (wcfg.resume_budget.evaluations)
              wcfg.resume_budget.evaluations =
                  *wcfg.resume_budget.evaluations > reeval_evals
                      ? *wcfg.resume_budget.evaluations - reeval_evals
                      : 0;
            if (wcfg.resume_budget.iterations)
              wcfg.resume_budget.iterations = *wcfg.resume_budget.iterations > reeval_iters
                                                  ? *wcfg.resume_budget.iterations - reeval_iters
                                                  : 0;
            SolverConfig rc = spec.nominal;
            rc.budget = {};
            WarmResult res = warm_solve(nominal_run.tree, perturbed, wcfg, rc);
            trace = std::move(res.trace);
            incumbent = std::move(res.incumbent);
          } else {  // decentralized
            if (!nominal_run.incumbent)
              throw ValidationError("no nominal incumbent available for this repetition");
            const auto affected =
                affected_robots(parse_perturbation(pert.spec), *nominal_run.incumbent, nominal_inst);
            AdaptResult res = decentralized_adapt(*nominal_run.incumbent, perturbed, affected);
            if (!res.feasible) throw ValidationError(res.diagnostic);
            incumbent = res.incumbent;
            trace.push_back({"decentralized", 0, 0.0, res.incumbent->cost_kj,
                             res.incumbent->assignment});
          }
          if (incumbent) {
            const std::string audit = detail::audit_incumbent(*incumbent, perturbed);
            if (!audit.empty()) throw ValidationError("incumbent audit failed: " + audit);
            cell.final_cost_kj = incumbent->cost_kj;
          }
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.message = e.what();
        }
        write_trace(out_path("trace_" + pert.name + "_" + strategy + "_rep" + std::to_string(rep) +
                             ".csv"),
                    trace, perturbed.fleet);
        for (std::size_t c = 0; c < spec.checkpoints.size(); ++c)
          table.values[strategy][c].push_back(incumbent_at(trace, spec.checkpoints[c]));
        result.cells.push_back(cell);
      }
    }

    // summary: checkpoint x strategy, min/median/max (+ gap% with an oracle)
    const bool have_oracle = result.oracle_cost.count(pert.name) &&
                             std::isfinite(result.oracle_cost.at(pert.name));
    const double opt = have_oracle ? result.oracle_cost.at(pert.name) : 0.0;
    {
      std::ofstream out(out_path("summary_" + pert.name + ".csv"));
      out << "checkpoint_evaluations,strategy,min_kJ,median_kJ,max_kJ";
      if (have_oracle) out << ",min_gap_pct,median_gap_pct,max_gap_pct";
      out << "\n";
      for (std::size_t c = 0; c < spec.checkpoints.size(); ++c) {
        for (const auto& strategy : spec.strategies) {
          std::vector<double> v = table.values[strategy][c];
          const double mn = *std::min_element(v.begin(), v.end());
          const double md = detail::median_of(v);
          const double mx = *std::max_element(v.begin(), v.end());
          out << spec.checkpoints[c] << ',' << strategy << ',' << dtos(mn) << ',' << dtos(md)
              << ',' << dtos(mx);
          if (have_oracle)
            out << ',' << dtos((mn - opt) / opt * 100.0) << ',' << dtos((md - opt) / opt * 100.0)
                << ',' << dtos((mx - opt) / opt * 100.0);
          out << '\n';
        }
      }
    }

    // histogram per checkpoint: gap% bins when an oracle is available,
    // absolute kJ otherwise; +inf (no incumbent) counted in the last row
    for (std::size_t c = 0; c < spec.checkpoints.size(); ++c) {
      std::vector<double> finite;
      for (const auto& strategy : spec.strategies)
        for (double v : table.values[strategy][c])
          if (std::isfinite(v)) finite.push_back(have_oracle ? (v - opt) / opt * 100.0 : v);
      double lo = 0.0, hi = 1.0;
      if (!finite.empty()) {
        lo = *std::min_element(finite.begin(), finite.end());
        hi = *std::max_element(finite.begin(), finite.end());
        if (hi <= lo) hi = lo + 1.0;
      }
      const int bins = 12;
      const double width = (hi - lo) / bins;
      std::ofstream out(out_path("hist_" + pert.name + "_cp" +
                                 std::to_string(spec.checkpoints[c]) + ".csv"));
      out << (have_oracle ? "gap_lo_pct,gap_hi_pct" : "kJ_lo,kJ_hi");
      for (const auto& strategy : spec.strategies) out << ',' << strategy;
      out << '\n';
      for (int b = 0; b < bins; ++b) {
        const double blo = lo + b * width, bhi = lo + (b + 1) * width;
        out << dtos(blo) << ',' << dtos(bhi);
        for (const auto& strategy : spec.strategies) {
          int count = 0;
          for (double v : table.values[strategy][c]) {
            if (!std::isfinite(v)) continue;
            const double x = have_oracle ? (v - opt) / opt * 100.0 : v;
            if ((x >= blo && x < bhi) || (b == bins - 1 && x == bhi)) ++count;
          }
          out << ',' << count;
        }
        out << '\n';
      }
      out << "inf,inf";
      for (const auto& strategy : spec.strategies) {
        int count = 0;
        for (double v : table.values[strategy][c])
          if (!std::isfinite(v)) ++count;
        out << ',' << count;
      }
      out << '\n';
    }
  }

  ordered_json cells = ordered_json::array();
  for (const CellStatus& c : result.cells) {
    ordered_json cj;
    cj["perturbation"] = c.perturbation;
    cj["strategy"] = c.strategy;
    cj["repetition"] = c.repetition;
    cj["ok"] = c.ok;
    if (!c.ok) cj["error"] = c.message;
    if (std::isfinite(c.final_cost_kj)) cj["final_cost_kj"] = c.final_cost_kj;
    cells.push_back(std::move(cj));
  }
  manifest["cells"] = std::move(cells);
  if (!result.oracle_cost.empty()) {
    ordered_json oj;
    for (const auto& [name, cost] : result.oracle_cost)
      oj[name] = std::isfinite(cost) ? ordered_json(cost) : ordered_json("infeasible");
    manifest["oracle_cost_kj"] = std::move(oj);
  }
  result.manifest_path = out_path("manifest.json");
  std::ofstream mout(result.manifest_path);
  mout << manifest.dump(2) << '\n';
  return result;
}

}  // namespace mht
